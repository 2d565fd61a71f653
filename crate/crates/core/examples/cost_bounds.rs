//! Prints closed-form cost bounds for a few configurations.
//!
//! cargo run --example cost_bounds

use kgthought::cost::bound_for;
use kgthought::search::{Interaction, SearchConfig, Strategy};

fn main() {
    println!("{:<22} {:>6} {:>8} {:>10}", "config", "calls", "merges", "kg ops");
    for strategy in [Strategy::Cot, Strategy::Tot, Strategy::Got] {
        for interaction in [Interaction::Agent, Interaction::Explore] {
            for (k, t, d) in [(2, 2, 2), (3, 3, 3)] {
                let cfg = match strategy {
                    Strategy::Cot => SearchConfig::cot(interaction, 10),
                    _ => SearchConfig {
                        strategy,
                        interaction,
                        k,
                        t,
                        d_max: d,
                        ..SearchConfig::default()
                    },
                };
                let b = bound_for(&cfg, 10, 2);
                let label = match strategy {
                    Strategy::Cot => format!("cot/{interaction} n=10"),
                    _ => format!("{strategy}/{interaction} {k},{t},{d}"),
                };
                println!(
                    "{label:<22} {:>6} {:>8} {:>10}",
                    b.generation_call_bound, b.merge_attempt_bound, b.kg_op_bound
                );
                if strategy == Strategy::Cot {
                    break;
                }
            }
        }
    }
}
