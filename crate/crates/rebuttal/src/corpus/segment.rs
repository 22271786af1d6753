//! Paragraph segmentation for raw paper text.
//!
//! Three passes: split on blank lines, merge blocks shorter than
//! `min_chars` into their successor, then split blocks longer than
//! `max_chars` at sentence boundaries. Merging runs before splitting, so
//! a merged block can still be split; split output is final. All lengths
//! are Unicode scalar counts.

use serde::{Deserialize, Serialize};

use super::{Paper, Paragraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationPolicy {
    pub min_chars: usize,
    pub max_chars: usize,
}

impl Default for SegmentationPolicy {
    fn default() -> Self {
        SegmentationPolicy {
            min_chars: 200,
            max_chars: 2000,
        }
    }
}

impl SegmentationPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.max_chars == 0 || self.min_chars > self.max_chars {
            return Err(Error::Config(format!(
                "segmentation policy needs 0 <= min_chars <= max_chars, got {}..{}",
                self.min_chars, self.max_chars
            )));
        }
        Ok(())
    }
}

pub fn segment_paper(
    id: impl Into<String>,
    title: impl Into<String>,
    raw_text: &str,
    policy: &SegmentationPolicy,
) -> Result<Paper> {
    policy.validate()?;
    let id = id.into();
    let blocks = blank_line_blocks(raw_text);
    if blocks.is_empty() {
        return Err(Error::EmptyDocument(format!("paper {id}")));
    }
    let merged = merge_short(blocks, policy.min_chars);
    let mut paragraphs = Vec::new();
    for block in merged {
        if block.chars().count() > policy.max_chars {
            for chunk in split_long(&block, policy.max_chars) {
                paragraphs.push(Paragraph::new(paragraphs.len(), chunk));
            }
        } else {
            paragraphs.push(Paragraph::new(paragraphs.len(), block));
        }
    }
    Paper::new(id, title, paragraphs)
}

/// Trimmed blocks separated by one or more blank lines.
fn blank_line_blocks(raw: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in raw.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(current.join("\n").trim().to_string());
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        blocks.push(current.join("\n").trim().to_string());
    }
    blocks.retain(|b| !b.is_empty());
    blocks
}

/// Blocks shorter than `min_chars` join their successor; a short final
/// block joins its predecessor. A single short block stands alone.
fn merge_short(blocks: Vec<String>, min_chars: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut pending: Option<String> = None;
    for block in blocks {
        let block = match pending.take() {
            Some(prefix) => format!("{prefix}\n\n{block}"),
            None => block,
        };
        if block.chars().count() < min_chars {
            pending = Some(block);
        } else {
            out.push(block);
        }
    }
    if let Some(rest) = pending {
        match out.last_mut() {
            Some(last) => {
                last.push_str("\n\n");
                last.push_str(&rest);
            }
            None => out.push(rest),
        }
    }
    out
}

/// Greedy sentence packing: each chunk stays within `max_chars` unless a
/// single sentence alone exceeds it, which stays whole.
fn split_long(block: &str, max_chars: usize) -> Vec<String> {
    let sentences = split_sentences(block);
    if sentences.len() <= 1 {
        return vec![block.to_string()];
    }
    let mut chunks = Vec::new();
    let mut current = String::new();
    let mut current_len = 0usize;
    for sentence in sentences {
        let sentence_len = sentence.chars().count();
        if current_len > 0 && current_len + 1 + sentence_len > max_chars {
            chunks.push(std::mem::take(&mut current));
            current_len = 0;
        }
        if current_len > 0 {
            current.push(' ');
            current_len += 1;
        }
        current.push_str(&sentence);
        current_len += sentence_len;
    }
    if !current.is_empty() {
        chunks.push(current);
    }
    chunks
}

/// Splits at terminal punctuation (. ! ?) followed by whitespace.
/// Sentences are trimmed; blanks dropped. A text without terminal
/// punctuation is one sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        current.push(c);
        let terminal = matches!(c, '.' | '!' | '?');
        let followed_by_space = chars.get(i + 1).is_some_and(|n| n.is_whitespace());
        if terminal && followed_by_space {
            let s = current.trim();
            if !s.is_empty() {
                sentences.push(s.to_string());
            }
            current.clear();
        }
        i += 1;
    }
    let s = current.trim();
    if !s.is_empty() {
        sentences.push(s.to_string());
    }
    sentences
}
