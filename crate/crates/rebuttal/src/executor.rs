//! Rebuttal generation: one response per review point (optionally argued
//! from a selected perspective), a whole-review single-shot path, and
//! merging of per-point units into the final document.

use regex::Regex;

use crate::corpus::{Paper, Rebuttal, RebuttalUnit, Review, ReviewPoint};
use crate::error::{Error, Result};
use crate::planner::PerspectiveCandidate;
use crate::prompts;
use crate::providers::{ChatProvider, GenerationRequest};

/// Header introducing the perspective block in the per-point prompt.
/// Present iff the planner selected a perspective for the point.
pub const PERSPECTIVE_SLOT_HEADER: &str =
    "Write your response arguing from the following perspective:";

/// Builds the per-point user content: the point, the retrieved
/// paragraphs, and the optional perspective block.
fn point_user_content(
    point: &ReviewPoint,
    paragraphs: &[(usize, &str)],
    perspective: Option<&PerspectiveCandidate>,
) -> String {
    let mut sections = vec![format!("Reviewer comment:\n{}", point.text)];
    let listing: Vec<String> = paragraphs
        .iter()
        .map(|(idx, text)| format!("[Paragraph {idx}]\n{text}"))
        .collect();
    sections.push(format!(
        "Relevant content from the original paper:\n\n{}",
        listing.join("\n\n")
    ));
    if let Some(p) = perspective {
        sections.push(format!("{PERSPECTIVE_SLOT_HEADER}\n{}", p.text));
    }
    sections.join("\n\n")
}

/// One generation for one review point. `paragraphs` are (paragraph
/// index, text) pairs; only these appear in the prompt.
pub fn respond_point(
    point: &ReviewPoint,
    paragraphs: &[(usize, &str)],
    perspective: Option<&PerspectiveCandidate>,
    chat: &dyn ChatProvider,
) -> Result<RebuttalUnit> {
    if paragraphs.is_empty() {
        return Err(Error::EmptyContext(format!(
            "point {} has no context paragraphs",
            point.index
        )));
    }
    let user = point_user_content(point, paragraphs, perspective);
    let response_text = chat.generate(&GenerationRequest::new(
        prompts::EXECUTOR_POINT_SYSTEM,
        &user,
    ))?;
    Ok(RebuttalUnit {
        point_index: point.index,
        response_text: response_text.trim().to_string(),
        perspective_used: perspective.cloned(),
        context_indices: paragraphs.iter().map(|(i, _)| *i).collect(),
    })
}

/// Single-shot rebuttal over the entire review with the full paper text:
/// no decomposition, no retrieval, one unit.
pub fn respond_whole(review: &Review, paper: &Paper, chat: &dyn ChatProvider) -> Result<Rebuttal> {
    let user = format!(
        "Review:\n{}\n\nThe original paper ({}):\n\n{}",
        review.text,
        paper.title,
        paper.full_text()
    );
    let response = chat.generate(&GenerationRequest::new(
        prompts::EXECUTOR_WHOLE_SYSTEM,
        &user,
    ))?;
    let response = response.trim().to_string();
    let unit = RebuttalUnit {
        point_index: 0,
        response_text: response.clone(),
        perspective_used: None,
        context_indices: (0..paper.paragraphs.len()).collect(),
    };
    Ok(Rebuttal {
        review_id: review.id.clone(),
        units: vec![unit],
        merged_text: response,
    })
}

/// Joins per-point units into the final rebuttal document. Each point
/// appears as a numbered question/response block:
///
/// ```text
/// **Q1:** first review point text
///
/// **R1:** response to the first point
/// ```
///
/// Units are ordered by point index; every `point_index` must refer to
/// an entry of `points`.
pub fn merge(units: &[RebuttalUnit], points: &[ReviewPoint], review_id: &str) -> Result<Rebuttal> {
    if units.is_empty() {
        return Err(Error::EmptySet("merge needs at least one unit".into()));
    }
    let mut ordered: Vec<&RebuttalUnit> = units.iter().collect();
    ordered.sort_by_key(|u| u.point_index);
    for pair in ordered.windows(2) {
        if pair[0].point_index == pair[1].point_index {
            return Err(Error::Config(format!(
                "two units answer point {}",
                pair[0].point_index
            )));
        }
    }
    let mut blocks = Vec::with_capacity(ordered.len());
    for unit in &ordered {
        let point = points
            .get(unit.point_index)
            .ok_or(Error::IndexOutOfRange {
                index: unit.point_index,
                len: points.len(),
            })?;
        let n = unit.point_index + 1;
        blocks.push(format!(
            "**Q{n}:** {}\n\n**R{n}:** {}",
            point.text, unit.response_text
        ));
    }
    Ok(Rebuttal {
        review_id: review_id.to_string(),
        units: ordered.into_iter().cloned().collect(),
        merged_text: blocks.join("\n\n"),
    })
}

/// Splits a merged document back into (point text, response text) pairs.
/// Inverse of [`merge`] for documents whose texts do not themselves
/// contain `**Qn:**`/`**Rn:**` markers.
pub fn split_merged(merged: &str) -> Result<Vec<(String, String)>> {
    let marker = Regex::new(r"\*\*(Q|R)(\d+):\*\*").unwrap();
    let found: Vec<(usize, usize, String, usize)> = marker
        .captures_iter(merged)
        .map(|c| {
            let m = c.get(0).unwrap();
            (
                m.start(),
                m.end(),
                c[1].to_string(),
                c[2].parse::<usize>().unwrap(),
            )
        })
        .collect();
    if found.is_empty() || !found.len().is_multiple_of(2) {
        return Err(Error::Parse("text is not a merged rebuttal".into()));
    }
    let mut out = Vec::new();
    for pair in found.chunks(2) {
        let (q, r) = (&pair[0], &pair[1]);
        if q.2 != "Q" || r.2 != "R" || q.3 != r.3 {
            return Err(Error::Parse(format!(
                "expected matching Q/R markers, found {}{} then {}{}",
                q.2, q.3, r.2, r.3
            )));
        }
        let point = merged[q.1..r.0].trim().to_string();
        out.push((point, r.1));
    }
    let mut pairs = Vec::with_capacity(out.len());
    for (i, (point, resp_start)) in out.iter().enumerate() {
        let resp_end = if i + 1 < out.len() {
            found[(i + 1) * 2].0
        } else {
            merged.len()
        };
        pairs.push((
            point.clone(),
            merged[*resp_start..resp_end].trim().to_string(),
        ));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{CandidateSource, PerspectiveKind};
    use crate::providers::mock::{RecordingChat, ScriptedChat};

    fn point(i: usize, text: &str) -> ReviewPoint {
        ReviewPoint::new("r1", i, text)
    }

    fn perspective(text: &str) -> PerspectiveCandidate {
        PerspectiveCandidate {
            text: text.to_string(),
            kind: PerspectiveKind::Clarification,
            source: CandidateSource::Proposed,
        }
    }

    #[test]
    fn unit_carries_canned_completion_and_context() {
        let chat = ScriptedChat::of_strings(&["We thank the reviewer."]);
        let unit = respond_point(
            &point(2, "Missing baseline"),
            &[(4, "We compare against X."), (9, "Table 2 shows Y.")],
            None,
            &chat,
        )
        .unwrap();
        assert_eq!(unit.point_index, 2);
        assert_eq!(unit.response_text, "We thank the reviewer.");
        assert_eq!(unit.context_indices, vec![4, 9]);
        assert!(unit.perspective_used.is_none());
    }

    #[test]
    fn prompt_has_no_perspective_section_when_absent() {
        let chat = RecordingChat::new(ScriptedChat::of_strings(&["ok"]));
        respond_point(&point(0, "p"), &[(0, "para")], None, &chat).unwrap();
        let reqs = chat.requests();
        assert_eq!(reqs.len(), 1);
        assert!(!reqs[0].user_prompt.contains(PERSPECTIVE_SLOT_HEADER));
    }

    #[test]
    fn prompt_embeds_perspective_verbatim_when_present() {
        let chat = RecordingChat::new(ScriptedChat::of_strings(&["ok"]));
        let p = perspective("Clarification: the reviewer missed section 3.");
        let unit = respond_point(&point(0, "p"), &[(0, "para")], Some(&p), &chat).unwrap();
        let req = &chat.requests()[0];
        assert!(req.user_prompt.contains(PERSPECTIVE_SLOT_HEADER));
        assert!(req
            .user_prompt
            .contains("Clarification: the reviewer missed section 3."));
        assert_eq!(unit.perspective_used.as_ref().unwrap().text, p.text);
    }

    #[test]
    fn prompt_contains_only_given_paragraphs() {
        let chat = RecordingChat::new(ScriptedChat::of_strings(&["ok"]));
        respond_point(
            &point(0, "p"),
            &[(1, "kept paragraph one"), (3, "kept paragraph three")],
            None,
            &chat,
        )
        .unwrap();
        let user = &chat.requests()[0].user_prompt;
        assert!(user.contains("kept paragraph one"));
        assert!(user.contains("kept paragraph three"));
        assert!(user.contains("[Paragraph 1]"));
        assert!(user.contains("[Paragraph 3]"));
        assert!(!user.contains("[Paragraph 0]"));
        assert!(!user.contains("[Paragraph 2]"));
    }

    #[test]
    fn empty_context_rejected() {
        let chat = ScriptedChat::of_strings(&["ok"]);
        assert!(matches!(
            respond_point(&point(0, "p"), &[], None, &chat),
            Err(Error::EmptyContext(_))
        ));
    }

    fn small_paper() -> Paper {
        Paper::new(
            "p1",
            "A Study",
            vec![
                crate::corpus::Paragraph::new(0, "Introduction text."),
                crate::corpus::Paragraph::new(1, "Method text."),
            ],
        )
        .unwrap()
    }

    #[test]
    fn whole_review_path_is_single_unit_with_full_paper() {
        let chat = RecordingChat::new(ScriptedChat::of_strings(&["Full rebuttal text."]));
        let review = Review::new("r1", "p1", "The review.").unwrap();
        let rebuttal = respond_whole(&review, &small_paper(), &chat).unwrap();
        assert_eq!(rebuttal.units.len(), 1);
        assert_eq!(rebuttal.merged_text, "Full rebuttal text.");
        assert_eq!(rebuttal.units[0].context_indices, vec![0, 1]);
        let user = &chat.requests()[0].user_prompt;
        assert!(user.contains("Introduction text."));
        assert!(user.contains("Method text."));
        assert!(user.contains("The review."));
    }

    fn unit(i: usize, text: &str) -> RebuttalUnit {
        RebuttalUnit {
            point_index: i,
            response_text: text.to_string(),
            perspective_used: None,
            context_indices: vec![0],
        }
    }

    #[test]
    fn merge_single_unit() {
        let points = vec![point(0, "Only point")];
        let merged = merge(&[unit(0, "Only response")], &points, "r1").unwrap();
        assert_eq!(
            merged.merged_text,
            "**Q1:** Only point\n\n**R1:** Only response"
        );
        assert_eq!(merged.review_id, "r1");
    }

    #[test]
    fn merge_preserves_order_and_content() {
        let points = vec![point(0, "First"), point(1, "Second"), point(2, "Third")];
        // Units arrive out of order; merge sorts by point index.
        let units = vec![unit(2, "resp C"), unit(0, "resp A"), unit(1, "resp B")];
        let merged = merge(&units, &points, "r1").unwrap();
        let text = &merged.merged_text;
        for needle in ["resp A", "resp B", "resp C", "**Q1:**", "**Q2:**", "**Q3:**"] {
            assert_eq!(text.matches(needle).count(), 1, "{needle}");
        }
        let a = text.find("resp A").unwrap();
        let b = text.find("resp B").unwrap();
        let c = text.find("resp C").unwrap();
        assert!(a < b && b < c);
        assert_eq!(merged.units[0].point_index, 0);
        assert_eq!(merged.units[2].point_index, 2);
    }

    #[test]
    fn merge_error_paths() {
        let points = vec![point(0, "Only point")];
        assert!(matches!(
            merge(&[], &points, "r1"),
            Err(Error::EmptySet(_))
        ));
        assert!(matches!(
            merge(&[unit(5, "orphan")], &points, "r1"),
            Err(Error::IndexOutOfRange { index: 5, len: 1 })
        ));
        assert!(merge(&[unit(0, "a"), unit(0, "b")], &points, "r1").is_err());
    }

    #[test]
    fn split_inverts_merge() {
        let points = vec![
            point(0, "The dataset is small."),
            point(1, "No ablation on depth."),
        ];
        let units = vec![
            unit(0, "We added CIFAR and ImageNet.\nBoth confirm the trend."),
            unit(1, "Depth ablation is in Table 4."),
        ];
        let merged = merge(&units, &points, "r1").unwrap();
        let pairs = split_merged(&merged.merged_text).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].0, "The dataset is small.");
        assert_eq!(
            pairs[0].1,
            "We added CIFAR and ImageNet.\nBoth confirm the trend."
        );
        assert_eq!(pairs[1].0, "No ablation on depth.");
        assert_eq!(pairs[1].1, "Depth ablation is in Table 4.");
    }

    #[test]
    fn split_rejects_prose() {
        assert!(split_merged("just a plain paragraph").is_err());
        assert!(split_merged("**Q1:** point but no response marker").is_err());
    }
}
