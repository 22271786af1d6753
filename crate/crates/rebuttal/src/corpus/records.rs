//! Line-delimited JSON persistence and score recovery.
//!
//! One object per line, blank lines skipped; every loaded record is
//! validated and failures carry 1-based line numbers. Round-trip
//! load(persist(x)) == x holds for all domain types.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{DiscussionTranscript, Paper, Rebuttal, Review, ReviewPoint};
use crate::error::{Error, Result};
use crate::llm_output::extract_json_object;
use crate::prompts;
use crate::providers::{ChatProvider, GenerationRequest};

/// Field-level validity check run on every deserialized record.
pub trait Validate {
    fn validate(&self) -> Result<()>;
}

impl Validate for Paper {
    fn validate(&self) -> Result<()> {
        Paper::validate(self)
    }
}

impl Validate for Review {
    fn validate(&self) -> Result<()> {
        Review::validate(self)
    }
}

impl Validate for ReviewPoint {
    fn validate(&self) -> Result<()> {
        ReviewPoint::validate(self)
    }
}

impl Validate for Rebuttal {
    fn validate(&self) -> Result<()> {
        Rebuttal::validate(self)
    }
}

impl Validate for DiscussionTranscript {
    fn validate(&self) -> Result<()> {
        DiscussionTranscript::validate(self)
    }
}

impl Validate for crate::corpus::RebuttalUnit {
    fn validate(&self) -> Result<()> {
        crate::corpus::RebuttalUnit::validate(self)
    }
}

impl Validate for crate::retriever::RetrievedContext {
    fn validate(&self) -> Result<()> {
        crate::retriever::RetrievedContext::validate(self)
    }
}

pub fn load_records<T: DeserializeOwned + Validate>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(line).map_err(|e| Error::SchemaViolation {
            line: i + 1,
            message: e.to_string(),
        })?;
        record.validate().map_err(|e| Error::SchemaViolation {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn persist_records<T: Serialize>(
    items: impl IntoIterator<Item = T>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for item in items {
        let line = serde_json::to_string(&item)
            .map_err(|e| Error::Config(format!("serialization: {e}")))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn persist_artifact<T: Serialize>(artifact: &T, path: impl AsRef<Path>) -> Result<()> {
    persist_records([artifact], path)
}

pub fn load_artifact<T: DeserializeOwned + Validate>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let mut records = load_records::<T>(path)?;
    match records.len() {
        1 => Ok(records.remove(0)),
        n => Err(Error::SchemaViolation {
            line: 1,
            message: format!("expected exactly 1 record in {}, found {n}", path.display()),
        }),
    }
}

/// What to do when the recovered score falls outside the 1..=10 rubric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutOfRangePolicy {
    #[default]
    Error,
    Clamp,
}

/// Predicts a review's missing pre-discussion score from the discussion
/// text and known final score.
pub fn recover_initial_score(
    discussion_text: &str,
    final_score: i64,
    chat: &dyn ChatProvider,
) -> Result<i64> {
    recover_initial_score_with(discussion_text, final_score, chat, OutOfRangePolicy::Error)
}

pub fn recover_initial_score_with(
    discussion_text: &str,
    final_score: i64,
    chat: &dyn ChatProvider,
    policy: OutOfRangePolicy,
) -> Result<i64> {
    if !(1..=10).contains(&final_score) {
        return Err(Error::Config(format!(
            "final_score {final_score} outside [1,10]"
        )));
    }
    let req = GenerationRequest::new(
        prompts::SCORE_RECOVERY_SYSTEM,
        prompts::score_recovery_user(discussion_text, final_score),
    );
    let raw = chat.generate(&req)?;
    let obj = extract_json_object(&raw)?;
    let field = obj
        .get("initial_score")
        .ok_or_else(|| Error::Parse("recovery output lacks initial_score".into()))?;
    // The prompt's own example shows the score as a quoted string, so
    // accept both a JSON number and a numeric string.
    let score = match field {
        serde_json::Value::Number(n) => n
            .as_i64()
            .ok_or_else(|| Error::Parse(format!("non-integer initial_score: {n}")))?,
        serde_json::Value::String(s) => s
            .trim()
            .parse::<i64>()
            .map_err(|_| Error::Parse(format!("non-integer initial_score: {s:?}")))?,
        other => {
            return Err(Error::Parse(format!(
                "initial_score has unexpected type: {other}"
            )))
        }
    };
    if (1..=10).contains(&score) {
        Ok(score)
    } else {
        match policy {
            OutOfRangePolicy::Clamp => Ok(score.clamp(1, 10)),
            OutOfRangePolicy::Error => Err(Error::Parse(format!(
                "initial_score {score} outside [1,10]"
            ))),
        }
    }
}
