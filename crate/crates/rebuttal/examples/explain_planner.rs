//! The planner's decision for one review point, opened up: candidate
//! perspectives from the proposer, the per-paragraph score matrix, the
//! mean supportive scores, and the confidence gate that decides between
//! the argmax perspective and the no-perspective fallback.
//!
//!     cargo run --example explain_planner -- [seed]

use rebuttal::corpus::{segment_paper, ReviewPoint, SegmentationPolicy};
use rebuttal::planner::{
    propose_perspectives, score_matrix, select, PlannerModel, SCORE_DISPLAY_CUTOFF,
};
use rebuttal::providers::mock::{MockChat, MockEmbed};
use rebuttal::providers::EmbedProvider;
use rebuttal::retriever::{build_index, retrieve};

fn main() -> rebuttal::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(42, |s| s.parse().unwrap_or(42));
    let paper = segment_paper(
        "paper",
        "fixture",
        include_str!("../fixtures/paper.md"),
        &SegmentationPolicy::default(),
    )?;
    let point = ReviewPoint::new(
        "review",
        0,
        "The throughput comparison excludes the preprocessing time, which inflates the claimed inference speedup.",
    );

    let chat = MockChat::new(seed);
    let embed = MockEmbed::new(64, seed);
    let model = PlannerModel::new(embed.dim(), &[64, 32], seed, &embed.name());
    let threshold = 0.8;

    // The proposer sees only the point; paper content is withheld so the
    // candidates are argumentative angles, not paraphrased evidence.
    let candidates = propose_perspectives(&point, &chat)?;
    let index = build_index(&paper, &embed)?;
    let ctx = retrieve(&point, &index, 5, &embed)?;

    let cand_texts: Vec<String> = candidates.iter().map(|c| c.text.clone()).collect();
    let cand_vecs = embed.embed(&cand_texts)?;
    let para_vecs: Vec<_> = ctx
        .paragraph_indices
        .iter()
        .map(|&i| index.vectors()[i].clone())
        .collect();
    let matrix = score_matrix(&model, &cand_vecs, &para_vecs)?;
    let means: Vec<f64> = matrix
        .raw
        .iter()
        .map(|row| row.iter().sum::<f64>() / row.len() as f64)
        .collect();

    println!("point: {}\n", point.text);
    println!(
        "sigmoid scores per (candidate, retrieved paragraph); '.' masks cells below {SCORE_DISPLAY_CUTOFF}\n"
    );
    let header: Vec<String> = ctx.paragraph_indices.iter().map(|i| format!("p{i:<4}")).collect();
    println!("      {}   mean", header.join(" "));
    for (i, row) in matrix.sigmoid.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&matrix.mask[i])
            .map(|(v, keep)| {
                if *keep {
                    format!("{v:.2} ")
                } else {
                    "  .  ".into()
                }
            })
            .collect();
        println!("  c{i}  {}  {:+.3}", cells.join(" "), means[i]);
    }
    println!();
    for (i, c) in candidates.iter().enumerate() {
        println!("  c{i}: {}", c.text);
    }

    let outcome = select(&candidates, &means, threshold);
    println!("\nconfidence {:.3} against gate {threshold}", outcome.confidence);
    match &outcome.chosen {
        Some(c) => println!("kept: {}", c.text),
        None => println!(
            "fallback: no single perspective dominates, the executor answers from evidence alone"
        ),
    }
    Ok(())
}
