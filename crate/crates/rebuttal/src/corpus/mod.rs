//! Document model: papers, reviews, rebuttals, discussion transcripts.
//!
//! All types are immutable values once constructed and serialize to the
//! line-delimited JSON shapes in [`records`]. Constructors validate; so
//! does every load, so malformed files are rejected with line numbers.

pub mod records;
pub mod segment;

use serde::{Deserialize, Serialize};

pub use records::{
    load_artifact, load_records, persist_artifact, persist_records, recover_initial_score,
    recover_initial_score_with, OutOfRangePolicy, Validate,
};
pub use segment::{segment_paper, SegmentationPolicy};

use crate::error::{Error, Result};
use crate::planner::PerspectiveCandidate;

/// One retrieval unit of a paper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ParagraphWire", into = "ParagraphWire")]
pub struct Paragraph {
    pub index: usize,
    pub text: String,
    /// Unicode scalar count of `text`; derived, never serialized.
    pub char_len: usize,
}

#[derive(Clone, Serialize, Deserialize)]
struct ParagraphWire {
    index: usize,
    text: String,
}

impl From<ParagraphWire> for Paragraph {
    fn from(w: ParagraphWire) -> Self {
        Paragraph::new(w.index, w.text)
    }
}

impl From<Paragraph> for ParagraphWire {
    fn from(p: Paragraph) -> Self {
        ParagraphWire {
            index: p.index,
            text: p.text,
        }
    }
}

impl Paragraph {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        let text = text.into();
        let char_len = text.chars().count();
        Paragraph {
            index,
            text,
            char_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paper {
    pub id: String,
    pub title: String,
    pub paragraphs: Vec<Paragraph>,
}

impl Paper {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        paragraphs: Vec<Paragraph>,
    ) -> Result<Self> {
        let paper = Paper {
            id: id.into(),
            title: title.into(),
            paragraphs,
        };
        paper.validate()?;
        Ok(paper)
    }

    pub fn validate(&self) -> Result<()> {
        if self.paragraphs.is_empty() {
            return Err(Error::EmptyDocument(format!("paper {}", self.id)));
        }
        for (i, p) in self.paragraphs.iter().enumerate() {
            if p.index != i {
                return Err(Error::Config(format!(
                    "paper {}: paragraph at position {i} has index {}",
                    self.id, p.index
                )));
            }
            if p.text.trim().is_empty() {
                return Err(Error::Config(format!(
                    "paper {}: paragraph {i} is blank",
                    self.id
                )));
            }
            if p.char_len != p.text.chars().count() {
                return Err(Error::Config(format!(
                    "paper {}: paragraph {i} has stale char_len",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn total_char_len(&self) -> usize {
        self.paragraphs.iter().map(|p| p.char_len).sum()
    }

    /// All paragraphs joined for whole-paper prompting.
    pub fn full_text(&self) -> String {
        self.paragraphs
            .iter()
            .map(|p| p.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub paper_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_score: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_score: Option<i64>,
}

impl Review {
    pub fn new(
        id: impl Into<String>,
        paper_id: impl Into<String>,
        text: impl Into<String>,
    ) -> Result<Self> {
        let review = Review {
            id: id.into(),
            paper_id: paper_id.into(),
            text: text.into(),
            initial_score: None,
            final_score: None,
        };
        review.validate()?;
        Ok(review)
    }

    pub fn with_scores(mut self, initial: Option<i64>, final_: Option<i64>) -> Result<Self> {
        self.initial_score = initial;
        self.final_score = final_;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Config(format!("review {} has blank text", self.id)));
        }
        for (name, score) in [
            ("initial_score", self.initial_score),
            ("final_score", self.final_score),
        ] {
            if let Some(s) = score {
                if !(1..=10).contains(&s) {
                    return Err(Error::Config(format!(
                        "review {}: {name} {s} outside [1,10]",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One atomic concern extracted from a review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewPoint {
    pub review_id: String,
    pub index: usize,
    pub text: String,
}

impl ReviewPoint {
    pub fn new(review_id: impl Into<String>, index: usize, text: impl Into<String>) -> Self {
        ReviewPoint {
            review_id: review_id.into(),
            index,
            text: text.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Config(format!(
                "review point {} of {} is blank",
                self.index, self.review_id
            )));
        }
        Ok(())
    }
}

/// The generated answer to one review point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebuttalUnit {
    pub point_index: usize,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perspective_used: Option<PerspectiveCandidate>,
    pub context_indices: Vec<usize>,
}

impl RebuttalUnit {
    pub fn validate(&self) -> Result<()> {
        if self.response_text.trim().is_empty() {
            return Err(Error::Config(format!(
                "rebuttal unit {} has blank response",
                self.point_index
            )));
        }
        Ok(())
    }

    pub fn validate_against(&self, paper: &Paper) -> Result<()> {
        self.validate()?;
        for &i in &self.context_indices {
            if i >= paper.paragraphs.len() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: paper.paragraphs.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rebuttal {
    pub review_id: String,
    pub units: Vec<RebuttalUnit>,
    pub merged_text: String,
}

impl Rebuttal {
    pub fn validate(&self) -> Result<()> {
        if self.units.is_empty() {
            return Err(Error::EmptySet(format!(
                "rebuttal for {} has no units",
                self.review_id
            )));
        }
        for u in &self.units {
            u.validate()?;
        }
        if self.merged_text.trim().is_empty() {
            return Err(Error::Config(format!(
                "rebuttal for {} has blank merged text",
                self.review_id
            )));
        }
        Ok(())
    }
}

/// One round of simulated reviewer-author exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscussionRound {
    pub review_text: String,
    pub rebuttal: Rebuttal,
    pub judge_score: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscussionTranscript {
    pub paper_id: String,
    pub rounds: Vec<DiscussionRound>,
}

impl DiscussionTranscript {
    pub fn validate(&self) -> Result<()> {
        if self.rounds.is_empty() {
            return Err(Error::EmptySet(format!(
                "transcript for {} has no rounds",
                self.paper_id
            )));
        }
        for (i, round) in self.rounds.iter().enumerate() {
            if !(1..=10).contains(&round.judge_score) {
                return Err(Error::Config(format!(
                    "transcript round {i}: judge score {} outside [1,10]",
                    round.judge_score
                )));
            }
            round.rebuttal.validate()?;
        }
        Ok(())
    }
}
