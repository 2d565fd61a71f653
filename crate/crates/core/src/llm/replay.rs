//! Deterministic scripted backend.
//!
//! A script is a list of `(pattern, response)` entries read from a
//! line-delimited file of `{"match": ..., "response": ...}` records. The
//! pattern is a regular expression searched anywhere in the prompt.
//!
//! * Non-strict: each request gets the response of the first entry whose
//!   pattern matches. Nothing is consumed, so identical prompts always get
//!   identical replies.
//! * Strict: requests must match the next unconsumed entry, in order.

use std::fs;
use std::path::Path;
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Backend, CompletionRequest, LlmError};

#[derive(Debug, Clone)]
pub struct ReplayEntry {
    pub pattern: String,
    matcher: Regex,
    pub response: String,
}

impl ReplayEntry {
    pub fn new(pattern: &str, response: impl Into<String>) -> Result<Self, regex::Error> {
        Ok(Self {
            pattern: pattern.to_string(),
            matcher: Regex::new(pattern)?,
            response: response.into(),
        })
    }

    pub fn matches(&self, prompt: &str) -> bool {
        self.matcher.is_match(prompt)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReplayLine {
    #[serde(rename = "match")]
    pattern: String,
    response: String,
}

#[derive(Debug)]
pub struct ReplayScript {
    entries: Vec<ReplayEntry>,
    strict: bool,
    cursor: Mutex<usize>,
}

impl ReplayScript {
    pub fn new(entries: Vec<ReplayEntry>, strict: bool) -> Self {
        Self {
            entries,
            strict,
            cursor: Mutex::new(0),
        }
    }

    /// Builds a script from `(pattern, response)` pairs.
    pub fn from_pairs<P, R>(pairs: impl IntoIterator<Item = (P, R)>, strict: bool) -> Result<Self, LlmError>
    where
        P: AsRef<str>,
        R: Into<String>,
    {
        let entries = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (p, r))| {
                ReplayEntry::new(p.as_ref(), r).map_err(|e| LlmError::ReplayFormat {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(entries, strict))
    }

    pub fn parse(text: &str, strict: bool) -> Result<Self, LlmError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let format_err = |message: String| LlmError::ReplayFormat { line: i + 1, message };
            let rec: ReplayLine = serde_json::from_str(line).map_err(|e| format_err(e.to_string()))?;
            entries.push(ReplayEntry::new(&rec.pattern, rec.response).map_err(|e| format_err(e.to_string()))?);
        }
        Ok(Self::new(entries, strict))
    }

    pub fn load(path: impl AsRef<Path>, strict: bool) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, strict)
    }

    /// Serializes the entries back to the line-delimited file format.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let line = ReplayLine {
                pattern: e.pattern.clone(),
                response: e.response.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("strings serialize"));
            out.push('\n');
        }
        out
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries consumed so far (strict mode).
    pub fn consumed(&self) -> usize {
        *self.cursor.lock().expect("replay cursor poisoned")
    }
}

impl Backend for ReplayScript {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        if self.strict {
            let mut cursor = self.cursor.lock().expect("replay cursor poisoned");
            let entry = self
                .entries
                .get(*cursor)
                .ok_or(LlmError::ReplayExhausted(self.entries.len()))?;
            if !entry.matches(&req.prompt) {
                return Err(LlmError::ReplayMismatch {
                    index: *cursor,
                    pattern: entry.pattern.clone(),
                });
            }
            *cursor += 1;
            Ok(entry.response.clone())
        } else {
            self.entries
                .iter()
                .find(|e| e.matches(&req.prompt))
                .map(|e| e.response.clone())
                .ok_or_else(|| LlmError::ReplayNoMatch(req.tag.clone()))
        }
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}
