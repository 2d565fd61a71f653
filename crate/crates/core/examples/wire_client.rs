//! Sends one prompt to a chat-completions endpoint.
//!
//! KGTHOUGHT_ENDPOINT=https://host/v1/chat/completions KGTHOUGHT_MODEL=name \
//! KGTHOUGHT_API_KEY=... cargo run --example wire_client

use kgthought::cost::{tags, Meter};
use kgthought::llm::{CompletionRequest, Decoding, Gateway, WireBackend, WireConfig};

fn main() -> anyhow::Result<()> {
    let (Ok(endpoint), Ok(model)) = (std::env::var("KGTHOUGHT_ENDPOINT"), std::env::var("KGTHOUGHT_MODEL")) else {
        eprintln!("set KGTHOUGHT_ENDPOINT and KGTHOUGHT_MODEL (and KGTHOUGHT_API_KEY if needed)");
        return Ok(());
    };
    let backend = WireBackend::new(WireConfig::new(endpoint, model))?;
    let meter = Meter::new(true);
    let gateway = Gateway::new(&backend, &meter);
    let req = CompletionRequest::new(
        "Name one anatomical structure where keratin genes are expressed.",
        Decoding::control(),
        tags::THOUGHT,
    );
    println!("{}", gateway.complete(&req)?);
    println!("{:?}", meter.snapshot());
    Ok(())
}
