//! Hand-written parsers for the answer conventions used in prompts.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed model output: {0}")]
pub struct MalformedOutput(pub String);

fn malformed(what: &str) -> MalformedOutput {
    MalformedOutput(what.to_string())
}

/// Content of the last `{{...}}` span; if there is none, the last `{...}`
/// span; failing that, the last `[...]` span. Whitespace-trimmed.
pub fn parse_bracketed_answer(text: &str) -> Result<String, MalformedOutput> {
    last_double_brace(text)
        .or_else(|| last_enclosed(text, '{', '}'))
        .or_else(|| last_enclosed(text, '[', ']'))
        .map(|s| s.trim().to_string())
        .ok_or_else(|| malformed("no bracketed answer span"))
}

/// Content of the first `[...]` or `{{...}}` span, for prompts that ask
/// for the verdict at the beginning of the reply.
pub fn parse_leading_bracket(text: &str) -> Result<String, MalformedOutput> {
    let square = text.find('[');
    let brace = text.find('{');
    let start = match (square, brace) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(malformed("no bracketed verdict")),
    };
    let rest = &text[start..];
    let inner = rest
        .trim_start_matches(['[', '{'])
        .split([']', '}'])
        .next()
        .filter(|_| rest.contains([']', '}']))
        .ok_or_else(|| malformed("unclosed bracket"))?;
    Ok(inner.trim().to_string())
}

fn last_double_brace(text: &str) -> Option<&str> {
    let mut search_end = text.len();
    while let Some(open) = text[..search_end].rfind("{{") {
        let body_start = open + 2;
        if let Some(close) = text[body_start..].find("}}") {
            return Some(&text[body_start..body_start + close]);
        }
        search_end = open;
    }
    None
}

/// Last balanced `open ... close` span, honoring nesting of the same pair.
fn last_enclosed(text: &str, open: char, close: char) -> Option<&str> {
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    let mut idx = bytes.len();
    while idx > 0 {
        idx -= 1;
        if bytes[idx].1 != close {
            continue;
        }
        let end = bytes[idx].0;
        let mut depth = 0usize;
        let mut j = idx;
        while j > 0 {
            j -= 1;
            let c = bytes[j].1;
            if c == close {
                depth += 1;
            } else if c == open {
                if depth == 0 {
                    return Some(&text[bytes[j].0 + open.len_utf8()..end]);
                }
                depth -= 1;
            }
        }
    }
    None
}

/// Splits at commas that are not nested inside `()`, `[]`, `{}` or quotes.
pub fn split_top_level(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    let mut cur = String::new();
    for c in s.chars() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None => match c {
                '\'' | '"' => quote = Some(c),
                '(' | '[' | '{' => depth += 1,
                ')' | ']' | '}' => depth -= 1,
                ',' if depth == 0 => {
                    out.push(std::mem::take(&mut cur));
                    continue;
                }
                _ => {}
            },
        }
        cur.push(c);
    }
    out.push(cur);
    out.into_iter()
        .map(|p| unquote(p.trim()).to_string())
        .filter(|p| !p.is_empty())
        .collect()
}

pub fn unquote(s: &str) -> &str {
    for q in ['\'', '"'] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

/// The last decimal number in `text` (sign and fraction allowed).
pub fn parse_last_number(text: &str) -> Option<f64> {
    let bytes = text.as_bytes();
    let last = bytes.iter().rposition(u8::is_ascii_digit)?;
    let mut start = last;
    while start > 0 && (bytes[start - 1].is_ascii_digit() || bytes[start - 1] == b'.') {
        start -= 1;
    }
    let run = &text[start..=last];
    let value = run
        .parse::<f64>()
        .or_else(|_| run.rsplit('.').next().unwrap_or(run).parse::<f64>())
        .ok()?;
    let negative = start > 0 && bytes[start - 1] == b'-';
    Some(if negative { -value } else { value })
}

/// Every unsigned integer in `text`, in order.
pub fn parse_integers(text: &str) -> Vec<usize> {
    text.split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        .filter_map(|s| s.parse().ok())
        .collect()
}

/// Payload of the last `Finish[...]` span, trimmed.
pub fn parse_finish(text: &str) -> Option<String> {
    let start = text.rfind("Finish[")? + "Finish[".len();
    let mut depth = 0usize;
    for (i, c) in text[start..].char_indices() {
        match c {
            '[' => depth += 1,
            ']' if depth == 0 => return Some(text[start..start + i].trim().to_string()),
            ']' => depth -= 1,
            _ => {}
        }
    }
    None
}

/// Yes/No verdict from the first bracketed span, or from the first word
/// when the reply carries no brackets.
pub fn parse_yes_no(text: &str) -> Option<bool> {
    let token = parse_leading_bracket(text)
        .ok()
        .or_else(|| text.split_whitespace().next().map(str::to_string))?;
    let token = token.trim_matches(|c: char| !c.is_alphanumeric());
    if token.eq_ignore_ascii_case("yes") {
        Some(true)
    } else if token.eq_ignore_ascii_case("no") {
        Some(false)
    } else {
        None
    }
}
