//! Multi-round reviewer-author discussion on the fixture paper: each
//! round rebuts the current review, a simulated reviewer re-scores the
//! paper, and the reviewer's written rationale becomes the next round's
//! review.
//!
//!     cargo run --example multi_round -- [seed]

use rebuttal::corpus::{segment_paper, Review, SegmentationPolicy};
use rebuttal::dialogue::{render_trajectory, simulate_rounds};
use rebuttal::pipeline::{Mode, PipelineConfig};
use rebuttal::providers::mock::{MockChat, MockEmbed};

fn main() -> rebuttal::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(12, |s| s.parse().unwrap_or(12));
    let paper = segment_paper(
        "paper",
        "fixture",
        include_str!("../fixtures/paper.md"),
        &SegmentationPolicy::default(),
    )?;
    let review = Review::new("review", "paper", include_str!("../fixtures/review.txt").trim())?
        .with_scores(Some(4), None)?;

    let cfg = PipelineConfig::default().with_mode(Mode::Drg);
    let chat = MockChat::new(seed);
    let embed = MockEmbed::new(64, seed);
    let transcript = simulate_rounds(&paper, &review, &cfg, 3, &chat, &embed, None, None)?;

    for (i, round) in transcript.rounds.iter().enumerate() {
        let review_head: String = round.review_text.chars().take(110).collect();
        println!("round {}: review: {review_head}…", i + 1);
        println!(
            "  rebuttal: {} point responses, reviewer re-scored to {}",
            round.rebuttal.units.len(),
            round.judge_score
        );
    }
    println!("\n{}", render_trajectory(&transcript));
    Ok(())
}
