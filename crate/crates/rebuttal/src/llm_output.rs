//! Extraction of structured values from free-form model output.
//!
//! Models wrap JSON in prose, code fences, or commentary. The extractors
//! scan for the first balanced bracket span that parses to the expected
//! shape, so "Sure! ```json [..] ``` hope this helps" yields the array.

use serde_json::Value;

use crate::error::{Error, Result};

/// Returns the first top-level JSON array of strings found in `raw`.
/// Entries are trimmed; blank entries are dropped.
pub fn extract_string_array(raw: &str) -> Result<Vec<String>> {
    for span in balanced_spans(raw, '[', ']') {
        let Ok(Value::Array(items)) = serde_json::from_str::<Value>(span) else {
            continue;
        };
        let strings: Option<Vec<String>> = items
            .iter()
            .map(|v| v.as_str().map(|s| s.trim().to_string()))
            .collect();
        if let Some(strings) = strings {
            return Ok(strings.into_iter().filter(|s| !s.is_empty()).collect());
        }
    }
    Err(Error::Parse(format!(
        "no JSON string array in output: {}",
        snippet(raw)
    )))
}

/// Returns the first top-level JSON object found in `raw`.
pub fn extract_json_object(raw: &str) -> Result<Value> {
    for span in balanced_spans(raw, '{', '}') {
        if let Ok(v @ Value::Object(_)) = serde_json::from_str::<Value>(span) {
            return Ok(v);
        }
    }
    Err(Error::Parse(format!(
        "no JSON object in output: {}",
        snippet(raw)
    )))
}

/// All balanced `open`..`close` spans starting at each occurrence of
/// `open`, respecting JSON string literals and escapes.
fn balanced_spans(raw: &str, open: char, close: char) -> Vec<&str> {
    let mut spans = Vec::new();
    let bytes: Vec<(usize, char)> = raw.char_indices().collect();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].1 != open {
            i += 1;
            continue;
        }
        let start = bytes[i].0;
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for &(pos, c) in &bytes[i..] {
            if in_string {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == '"' {
                    in_string = false;
                }
                continue;
            }
            match c {
                '"' => in_string = true,
                c if c == open => depth += 1,
                c if c == close => {
                    depth -= 1;
                    if depth == 0 {
                        spans.push(&raw[start..pos + c.len_utf8()]);
                        break;
                    }
                }
                _ => {}
            }
        }
        i += 1;
    }
    spans
}

fn snippet(raw: &str) -> String {
    let trimmed = raw.trim();
    if trimmed.chars().count() <= 80 {
        trimmed.to_string()
    } else {
        let head: String = trimmed.chars().take(77).collect();
        format!("{head}...")
    }
}
