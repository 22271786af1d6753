//! Multi-round reviewer-author discussion. Each round generates a
//! rebuttal, then the judge re-scores the paper; the judge's reasoning
//! stands in for the reviewer's follow-up and becomes the next round's
//! review. The paper itself never changes, so its embedding index is
//! built once and shared across rounds.

use std::path::Path;

use crate::corpus::{persist_artifact, DiscussionRound, DiscussionTranscript, Paper, Review};
use crate::error::{Error, Result};
use crate::evaluation::judge;
use crate::pipeline::{run_with_index, PipelineConfig, RoleTuned};
use crate::planner::PlannerModel;
use crate::providers::{ChatProvider, EmbedProvider};
use crate::retriever::build_index;

pub const DEFAULT_ROUNDS: usize = 3;
/// Rubric midpoint, assumed when the review carries no initial score.
pub const DEFAULT_INITIAL_SCORE: i64 = 5;
pub const TRANSCRIPT_FILE: &str = "transcript.json";
pub const TRAJECTORY_FILE: &str = "trajectory.tsv";

/// Judge scores in round order.
pub fn score_trajectory(transcript: &DiscussionTranscript) -> Vec<i64> {
    transcript.rounds.iter().map(|r| r.judge_score).collect()
}

/// Tab-separated (round, score) series, one line per round.
pub fn render_trajectory(transcript: &DiscussionTranscript) -> String {
    let mut out = String::from("round\tscore\n");
    for (i, round) in transcript.rounds.iter().enumerate() {
        out.push_str(&format!("{}\t{}\n", i + 1, round.judge_score));
    }
    out
}

fn persist_progress(transcript: &DiscussionTranscript, out_dir: Option<&Path>) -> Result<()> {
    let Some(dir) = out_dir else { return Ok(()) };
    persist_artifact(transcript, dir.join(TRANSCRIPT_FILE))?;
    let path = dir.join(TRAJECTORY_FILE);
    std::fs::write(&path, render_trajectory(transcript)).map_err(|e| Error::io(&path, e))
}

/// Simulates `rounds` rounds of discussion, starting from the original
/// review. The judge sees only the latest review and rebuttal each
/// round, with the previous round's score as its reference point. The
/// simulation ends early if the judge offers no reasoning to carry
/// forward. With an output directory the transcript and score series
/// are rewritten after every round, and each round's pipeline trace
/// lands in `round<N>/`, so failures leave all completed rounds behind.
#[allow(clippy::too_many_arguments)]
pub fn simulate_rounds(
    paper: &Paper,
    review: &Review,
    cfg: &PipelineConfig,
    rounds: usize,
    chat: &dyn ChatProvider,
    embed: &dyn EmbedProvider,
    planner: Option<&PlannerModel>,
    out_dir: Option<&Path>,
) -> Result<DiscussionTranscript> {
    if rounds == 0 {
        return Err(Error::Config("a discussion needs at least one round".into()));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let index = if cfg.mode.uses_retriever() {
        Some(build_index(paper, embed)?)
    } else {
        None
    };
    let judge_chat = RoleTuned { inner: chat, cfg };
    let system = cfg.mode.to_string();
    let mut transcript = DiscussionTranscript {
        paper_id: paper.id.clone(),
        rounds: Vec::new(),
    };
    let mut current = review.clone();
    let mut prev_score = review.initial_score.unwrap_or(DEFAULT_INITIAL_SCORE);

    for round in 1..=rounds {
        let trace_dir = out_dir.map(|d| d.join(format!("round{round}")));
        let (rebuttal, _) = run_with_index(
            paper,
            &current,
            cfg,
            chat,
            embed,
            planner,
            index.as_ref(),
            trace_dir.as_deref(),
        )?;
        let verdict = judge(&current, &system, &rebuttal, prev_score, &judge_chat)?;
        transcript.rounds.push(DiscussionRound {
            review_text: current.text.clone(),
            rebuttal,
            judge_score: verdict.score,
        });
        persist_progress(&transcript, out_dir)?;
        prev_score = verdict.score;

        if round == rounds {
            break;
        }
        if verdict.rationale_cot.trim().is_empty() {
            log::warn!("round {round}: judge gave no reasoning to carry forward, stopping early");
            break;
        }
        current = Review::new(
            format!("{}-round{}", review.id, round + 1),
            &review.paper_id,
            verdict.rationale_cot,
        )?;
    }
    Ok(transcript)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_artifact, Paragraph};
    use crate::pipeline::Mode;
    use crate::providers::mock::{
        InstrumentedEmbed, JudgeScripted, MockChat, MockEmbed, RecordingChat,
    };

    fn paper() -> Paper {
        let paras = (0..5)
            .map(|i| Paragraph::new(i, format!("Paragraph {i} details the method and results.")))
            .collect();
        Paper::new("p1", "A Study", paras).unwrap()
    }

    fn review() -> Review {
        Review::new(
            "r1",
            "p1",
            "The ablation is missing. The comparison set is thin.",
        )
        .unwrap()
    }

    fn planner() -> PlannerModel {
        PlannerModel::new(16, &[8, 4], 7, "mock-5")
    }

    fn cfg(mode: Mode) -> PipelineConfig {
        PipelineConfig {
            k: 2,
            ..PipelineConfig::default().with_mode(mode)
        }
    }

    #[test]
    fn single_round_keeps_the_original_review() {
        let chat = MockChat::new(5);
        let embed = MockEmbed::new(16, 5);
        let model = planner();
        let transcript = simulate_rounds(
            &paper(),
            &review(),
            &cfg(Mode::Drpg),
            1,
            &chat,
            &embed,
            Some(&model),
            None,
        )
        .unwrap();
        assert_eq!(transcript.rounds.len(), 1);
        assert_eq!(transcript.rounds[0].review_text, review().text);
        assert!((1..=10).contains(&transcript.rounds[0].judge_score));
        assert_eq!(score_trajectory(&transcript).len(), 1);
    }

    #[test]
    fn judge_reasoning_becomes_the_next_review() {
        let chat = JudgeScripted::new(
            MockChat::new(5),
            &[
                "The scope concern stands; the added detail helps. My final score is 5",
                "The remaining doubt is the baseline choice. My final score is 6",
                "Satisfied with the clarifications. My final score is 6",
            ],
        );
        let embed = MockEmbed::new(16, 5);
        let transcript = simulate_rounds(
            &paper(),
            &review(),
            &cfg(Mode::Decomp),
            3,
            &chat,
            &embed,
            None,
            None,
        )
        .unwrap();
        assert_eq!(transcript.rounds.len(), 3);
        assert_eq!(transcript.rounds[0].review_text, review().text);
        assert_eq!(
            transcript.rounds[1].review_text,
            "The scope concern stands; the added detail helps."
        );
        assert_eq!(
            transcript.rounds[2].review_text,
            "The remaining doubt is the baseline choice."
        );
        assert_eq!(score_trajectory(&transcript), vec![5, 6, 6]);
    }

    #[test]
    fn empty_judge_reasoning_stops_the_discussion() {
        let chat = JudgeScripted::new(MockChat::new(5), &["My final score is 6"]);
        let embed = MockEmbed::new(16, 5);
        let transcript = simulate_rounds(
            &paper(),
            &review(),
            &cfg(Mode::Decomp),
            3,
            &chat,
            &embed,
            None,
            None,
        )
        .unwrap();
        assert_eq!(transcript.rounds.len(), 1);
        assert_eq!(score_trajectory(&transcript), vec![6]);
    }

    #[test]
    fn first_round_judge_sees_the_review_initial_score() {
        let chat = RecordingChat::new(MockChat::new(5));
        let embed = MockEmbed::new(16, 5);
        let review = review().with_scores(Some(3), None).unwrap();
        simulate_rounds(
            &paper(),
            &review,
            &cfg(Mode::Decomp),
            1,
            &chat,
            &embed,
            None,
            None,
        )
        .unwrap();
        let judge_reqs: Vec<_> = chat
            .requests()
            .into_iter()
            .filter(|r| r.system_prompt == crate::prompts::JUDGE_SYSTEM)
            .collect();
        assert_eq!(judge_reqs.len(), 1);
        assert!(judge_reqs[0].user_prompt.contains("original score: 3"));
    }

    #[test]
    fn paper_is_embedded_once_across_rounds() {
        let chat = MockChat::new(5);
        let embed = InstrumentedEmbed::new(MockEmbed::new(16, 5));
        simulate_rounds(
            &paper(),
            &review(),
            &cfg(Mode::Drg),
            2,
            &chat,
            &embed,
            None,
            None,
        )
        .unwrap();
        // One paragraph batch for the shared index plus one point batch
        // per round.
        assert_eq!(embed.batch_calls(), 3);
    }

    #[test]
    fn transcript_and_traces_are_persisted() {
        let dir = tempfile::tempdir().unwrap();
        let chat = MockChat::new(5);
        let embed = MockEmbed::new(16, 5);
        let model = planner();
        let transcript = simulate_rounds(
            &paper(),
            &review(),
            &cfg(Mode::Drpg),
            2,
            &chat,
            &embed,
            Some(&model),
            Some(dir.path()),
        )
        .unwrap();
        let loaded: DiscussionTranscript =
            load_artifact(dir.path().join(TRANSCRIPT_FILE)).unwrap();
        assert_eq!(loaded, transcript);
        assert!(dir.path().join("round1").join("rebuttal.json").exists());
        assert!(dir.path().join("round2").join("rebuttal.json").exists());
        let series = std::fs::read_to_string(dir.path().join(TRAJECTORY_FILE)).unwrap();
        let scores = score_trajectory(&transcript);
        assert_eq!(
            series,
            format!("round\tscore\n1\t{}\n2\t{}\n", scores[0], scores[1])
        );
    }

    #[test]
    fn failure_keeps_completed_rounds_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let chat = JudgeScripted::with_results(
            MockChat::new(5),
            vec![
                Ok("Concerns remain on coverage. My final score is 4".to_string()),
                Err(Error::provider("judge backend down")),
            ],
        );
        let embed = MockEmbed::new(16, 5);
        let err = simulate_rounds(
            &paper(),
            &review(),
            &cfg(Mode::Decomp),
            3,
            &chat,
            &embed,
            None,
            Some(dir.path()),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Provider { .. }));
        let partial: DiscussionTranscript =
            load_artifact(dir.path().join(TRANSCRIPT_FILE)).unwrap();
        assert_eq!(partial.rounds.len(), 1);
        assert_eq!(partial.rounds[0].judge_score, 4);
    }

    #[test]
    fn fixed_seeds_make_the_simulation_deterministic() {
        let runs: Vec<DiscussionTranscript> = (0..2)
            .map(|_| {
                let chat = MockChat::new(7);
                let embed = MockEmbed::new(16, 7);
                let model = PlannerModel::new(16, &[8, 4], 7, "mock-7");
                simulate_rounds(
                    &paper(),
                    &review(),
                    &cfg(Mode::Drpg),
                    3,
                    &chat,
                    &embed,
                    Some(&model),
                    None,
                )
                .unwrap()
            })
            .collect();
        assert_eq!(runs[0], runs[1]);
    }

    #[test]
    fn zero_rounds_is_rejected() {
        let err = simulate_rounds(
            &paper(),
            &review(),
            &cfg(Mode::Decomp),
            0,
            &MockChat::new(1),
            &MockEmbed::new(16, 1),
            None,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
