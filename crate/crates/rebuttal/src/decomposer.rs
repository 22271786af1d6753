//! Review decomposition: split a referee review into atomic weakness
//! points, one generation call plus at most one repair retry when the
//! reply does not contain a parseable string array.

use crate::corpus::{Review, ReviewPoint};
use crate::error::{Error, Result};
use crate::prompts;
use crate::providers::{ChatProvider, GenerationRequest};

pub use crate::llm_output::extract_string_array as extract_array;

/// Sends the decomposer prompt with the review text and parses the
/// resulting array into sequentially indexed points. A reply with no
/// usable array triggers one re-prompt carrying a strict format
/// reminder; a second failure is final. An empty array is a parse
/// failure: every review must yield at least one point.
pub fn decompose(review: &Review, chat: &dyn ChatProvider) -> Result<Vec<ReviewPoint>> {
    if review.text.trim().is_empty() {
        return Err(Error::EmptyDocument(format!("review {}", review.id)));
    }
    let request = GenerationRequest::new(prompts::DECOMPOSER_SYSTEM, &review.text);
    let reply = chat.generate(&request)?;
    let entries = match extract_array(&reply) {
        Ok(entries) if !entries.is_empty() => entries,
        first_try => {
            let why = match first_try {
                Ok(_) => "empty array".to_string(),
                Err(e) => e.to_string(),
            };
            log::warn!("decomposer reply unusable ({why}); retrying with format reminder");
            let retry_user = format!(
                "{}\n\n{}",
                review.text,
                prompts::ARRAY_REPAIR_REMINDER
            );
            let retry = GenerationRequest::new(prompts::DECOMPOSER_SYSTEM, &retry_user);
            let entries = extract_array(&chat.generate(&retry)?)?;
            if entries.is_empty() {
                return Err(Error::Parse(format!(
                    "review {} decomposed to zero points",
                    review.id
                )));
            }
            entries
        }
    };
    Ok(entries
        .into_iter()
        .enumerate()
        .map(|(i, text)| ReviewPoint::new(&review.id, i, text))
        .collect())
}
