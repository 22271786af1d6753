//! Perspective planning: propose candidate rebuttal angles, score them
//! against retrieved paragraphs with a learned feed-forward scorer, and
//! pick the argmax when its softmax confidence clears the threshold.
//!
//! The score of a perspective is the scorer output on the concatenated
//! (perspective, paragraph) embedding pair, averaged over the K retrieved
//! paragraphs. Selection falls back to "no perspective" when confidence
//! is below threshold; the executor then answers from context alone.

pub mod model;
pub mod train;

use serde::{Deserialize, Serialize};

pub use model::{Gradients, PlannerModel};
pub use train::{
    ingest_training_sample, loss_and_gradients, prepare_samples, sample_scores,
    selection_accuracy, synthetic_dataset, train, Optimizer, PreparedSample, SyntheticSpec,
    TrainConfig, TrainReport, TrainingSampleRecord,
};

use crate::error::{Error, Result};
use crate::llm_output::extract_string_array;
use crate::prompts;
use crate::providers::{ChatProvider, EmbedProvider, EmbeddingVector, GenerationRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerspectiveKind {
    Clarification,
    Justification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateSource {
    Proposed,
    GroundTruth,
}

/// One candidate argumentative angle for answering a review point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveCandidate {
    pub text: String,
    pub kind: PerspectiveKind,
    pub source: CandidateSource,
}

impl PerspectiveCandidate {
    /// Parses a proposer entry of the form "Clarification: ..." or
    /// "Justification: ...". The tag is case-insensitive; the remainder
    /// must be non-blank.
    pub fn parse_tagged(entry: &str, source: CandidateSource) -> Result<Self> {
        let trimmed = entry.trim();
        let lower = trimmed.to_lowercase();
        let kind = if lower.starts_with("clarification:") {
            PerspectiveKind::Clarification
        } else if lower.starts_with("justification:") {
            PerspectiveKind::Justification
        } else {
            return Err(Error::Parse(format!("untagged perspective entry: {trimmed:?}")));
        };
        if trimmed.split_once(':').is_none_or(|(_, rest)| rest.trim().is_empty()) {
            return Err(Error::Parse(format!("empty perspective body: {trimmed:?}")));
        }
        Ok(PerspectiveCandidate {
            text: trimmed.to_string(),
            kind,
            source,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Parse("perspective with blank text".into()));
        }
        Ok(())
    }
}

/// The planner's decision for one review point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub chosen: Option<PerspectiveCandidate>,
    pub confidence: f64,
    pub all_scores: Vec<f64>,
    pub fell_back: bool,
}

/// Asks the proposer for up to 5 tagged perspectives for one point. The
/// paper text is deliberately not sent. Untagged entries are dropped with
/// a log line; an output with no usable entry is a parse failure.
pub fn propose_perspectives(
    point: &crate::corpus::ReviewPoint,
    chat: &dyn ChatProvider,
) -> Result<Vec<PerspectiveCandidate>> {
    point.validate()?;
    let req = GenerationRequest::new(prompts::PERSPECTIVE_GENERATOR_SYSTEM, &point.text);
    let raw = chat.generate(&req)?;
    let entries = extract_string_array(&raw)?;
    let mut candidates = Vec::new();
    for entry in entries {
        match PerspectiveCandidate::parse_tagged(&entry, CandidateSource::Proposed) {
            Ok(c) => candidates.push(c),
            Err(e) => log::warn!("dropping proposer entry: {e}"),
        }
        if candidates.len() == 5 {
            break;
        }
    }
    if candidates.is_empty() {
        return Err(Error::Parse("proposer returned no tagged perspectives".into()));
    }
    Ok(candidates)
}

/// Numerically stable softmax (max-subtraction).
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Confidence-gated argmax. The winner is kept only when its softmax
/// probability reaches `threshold`; otherwise the outcome records a
/// fallback and carries no perspective.
pub fn select(
    candidates: &[PerspectiveCandidate],
    scores: &[f64],
    threshold: f64,
) -> SelectionOutcome {
    assert_eq!(candidates.len(), scores.len(), "candidate/score length mismatch");
    assert!(!candidates.is_empty(), "select needs at least one candidate");
    assert!(scores.iter().all(|s| s.is_finite()), "scores must be finite");
    let ans = argmax(scores);
    let confidence = softmax(scores)[ans];
    let accept = confidence >= threshold;
    SelectionOutcome {
        chosen: accept.then(|| candidates[ans].clone()),
        confidence,
        all_scores: scores.to_vec(),
        fell_back: !accept,
    }
}

/// Cross-entropy of the score vector against the correct index:
/// -log softmax(scores)[gt_index].
pub fn ce_loss(scores: &[f64], gt_index: usize) -> Result<f64> {
    if gt_index >= scores.len() {
        return Err(Error::IndexOutOfRange {
            index: gt_index,
            len: scores.len(),
        });
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    // Mathematically >= 0; the clamp only absorbs final-ulp rounding.
    Ok((log_sum - (scores[gt_index] - max)).max(0.0))
}

/// Mean scorer output of one perspective over the retrieved paragraphs.
pub fn supportive_score(
    model: &PlannerModel,
    pers_vec: &EmbeddingVector,
    para_vecs: &[EmbeddingVector],
) -> Result<f64> {
    if para_vecs.is_empty() {
        return Err(Error::EmptyContext("supportive score needs paragraphs".into()));
    }
    let mut total = 0.0;
    for para in para_vecs {
        total += model.forward(pers_vec, para)?;
    }
    Ok(total / para_vecs.len() as f64)
}

/// Embeds texts and delegates to [`supportive_score`].
pub fn supportive_score_texts(
    model: &PlannerModel,
    pers: &PerspectiveCandidate,
    paragraphs: &[String],
    embed: &dyn EmbedProvider,
) -> Result<f64> {
    if paragraphs.is_empty() {
        return Err(Error::EmptyContext("supportive score needs paragraphs".into()));
    }
    let pers_vec = embed.embed_one(&pers.text)?;
    let para_vecs = embed.embed(paragraphs)?;
    supportive_score(model, &pers_vec, &para_vecs)
}

/// Supportive scores for a whole candidate set against one context.
pub fn score_candidates(
    model: &PlannerModel,
    candidate_vecs: &[EmbeddingVector],
    para_vecs: &[EmbeddingVector],
) -> Result<Vec<f64>> {
    candidate_vecs
        .iter()
        .map(|c| supportive_score(model, c, para_vecs))
        .collect()
}

/// Per-(perspective, paragraph) scores with the sigmoid display view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    /// raw[i][j]: scorer output for candidate i against paragraph j.
    pub raw: Vec<Vec<f64>>,
    pub sigmoid: Vec<Vec<f64>>,
    /// Display mask: sigmoid value >= 0.2.
    pub mask: Vec<Vec<bool>>,
}

impl ScoreMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.raw.len(), self.raw.first().map_or(0, Vec::len))
    }
}

pub const SCORE_DISPLAY_CUTOFF: f64 = 0.2;

pub fn score_matrix(
    model: &PlannerModel,
    candidate_vecs: &[EmbeddingVector],
    para_vecs: &[EmbeddingVector],
) -> Result<ScoreMatrix> {
    if para_vecs.is_empty() {
        return Err(Error::EmptyContext("score matrix needs paragraphs".into()));
    }
    let mut raw = Vec::with_capacity(candidate_vecs.len());
    for cand in candidate_vecs {
        let mut row = Vec::with_capacity(para_vecs.len());
        for para in para_vecs {
            row.push(model.forward(cand, para)?);
        }
        raw.push(row);
    }
    let sigmoid: Vec<Vec<f64>> = raw
        .iter()
        .map(|row| row.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect())
        .collect();
    let mask = sigmoid
        .iter()
        .map(|row| row.iter().map(|s| *s >= SCORE_DISPLAY_CUTOFF).collect())
        .collect();
    Ok(ScoreMatrix { raw, sigmoid, mask })
}

/// Alternative scoring schemes the full planner is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationVariant {
    /// Scorer sees the perspective and a zeroed paragraph slot.
    NoPaper,
    /// Mean over every paragraph of the paper, ignoring retrieval.
    FullPaper,
    /// Training-free mean cosine between perspective and paragraphs.
    Encoder,
}

pub fn ablation_score(
    variant: AblationVariant,
    model: &PlannerModel,
    pers_vec: &EmbeddingVector,
    retrieved_vecs: &[EmbeddingVector],
    all_paragraph_vecs: &[EmbeddingVector],
) -> Result<f64> {
    match variant {
        AblationVariant::NoPaper => {
            let zero = EmbeddingVector::new(vec![0.0; pers_vec.dim()]);
            model.forward(pers_vec, &zero)
        }
        AblationVariant::FullPaper => supportive_score(model, pers_vec, all_paragraph_vecs),
        AblationVariant::Encoder => {
            if retrieved_vecs.is_empty() {
                return Err(Error::EmptyContext("encoder variant needs paragraphs".into()));
            }
            let mut total = 0.0;
            for para in retrieved_vecs {
                total += crate::retriever::cosine(pers_vec, para)?;
            }
            Ok(total / retrieved_vecs.len() as f64)
        }
    }
}
