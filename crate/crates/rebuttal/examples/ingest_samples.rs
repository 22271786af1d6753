//! Training-data preparation from historical review threads. Two steps:
//! recover the missing pre-discussion score from the discussion text and
//! final score, then turn score-improving threads into scorer training
//! samples, splicing the perspective extracted from the human rebuttal
//! into the proposer's candidates.
//!
//!     cargo run --example ingest_samples -- [seed]

use rebuttal::corpus::{recover_initial_score, ReviewPoint, Review};
use rebuttal::planner::ingest_training_sample;
use rebuttal::providers::mock::MockChat;

fn main() -> rebuttal::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(11, |s| s.parse().unwrap_or(11));
    let chat = MockChat::new(seed);

    let discussion = "Reviewer: the comparison set misses recent learned sparsifiers. \
                      Authors: we added the two requested systems; ours stays ahead at \
                      matched sparsity. Reviewer: thank you, the added table resolves \
                      my main concern and I have raised my score.";
    let final_score = 7;
    let recovered = recover_initial_score(discussion, final_score, &chat)?;
    println!("recovered initial score {recovered} (final was {final_score})");

    // Ingestion only learns from threads whose score improved; pin the
    // initial score below the final one so the demo thread qualifies.
    let initial = recovered.min(final_score - 1);
    if initial != recovered {
        println!("pinning initial score to {initial} so this thread shows improvement");
    }
    println!();
    let review = Review::new("r-17", "paper", discussion)?
        .with_scores(Some(initial), Some(final_score))?;
    let point = ReviewPoint::new(
        "r-17",
        0,
        "The comparison set misses recent learned sparsifiers.",
    );
    let human_rebuttal = "We added both requested systems to the comparison; at matched \
                          sparsity our method stays ahead on every benchmark.";
    let context = vec![
        "Baselines cover static sparsifiers, learned sparsifiers, and magnitude pruning."
            .to_string(),
        "All baselines were re-tuned per dataset with the same search budget.".to_string(),
    ];

    match ingest_training_sample(&review, &point, human_rebuttal, &context, &chat)? {
        Some(sample) => {
            println!(
                "ingested one sample: {} candidates, ground truth at slot {}",
                sample.candidates.len(),
                sample.gt_index
            );
            for (i, c) in sample.candidates.iter().enumerate() {
                let marker = if i == sample.gt_index { ">" } else { " " };
                println!("  {marker} [{i}] {}", c.text);
            }
        }
        // Threads whose score never improved carry no signal about what
        // a working rebuttal looks like; they are skipped, not errors.
        None => println!("thread skipped: score did not improve"),
    }
    Ok(())
}
