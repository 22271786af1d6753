//! Top-k evidence retrieval: embed the fixture paper once, then rank
//! its paragraphs against several review concerns by cosine similarity.
//! The mock encoder correlates texts by token overlap, so each concern
//! should surface the paragraphs sharing its vocabulary.
//!
//!     cargo run --example retrieve_context -- [seed]

use rebuttal::corpus::{segment_paper, ReviewPoint, SegmentationPolicy};
use rebuttal::providers::mock::MockEmbed;
use rebuttal::retriever::{build_index, reduction_ratio, retrieve};

fn main() -> rebuttal::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().unwrap_or(0));
    let paper = segment_paper(
        "paper",
        "fixture",
        include_str!("../fixtures/paper.md"),
        &SegmentationPolicy::default(),
    )?;
    let embed = MockEmbed::new(64, seed);
    let index = build_index(&paper, &embed)?;

    let concerns = [
        "The baselines are outdated and no recent learned sparsifiers are compared.",
        "The eigenvector preprocessing cost makes the scalability claim questionable.",
        "The ablation never isolates the gating mechanism from the spectral features.",
    ];
    for (i, concern) in concerns.iter().enumerate() {
        let point = ReviewPoint::new("review", i, *concern);
        let ctx = retrieve(&point, &index, 3, &embed)?;
        println!("concern: {concern}");
        for (rank, (&p, &sim)) in ctx
            .paragraph_indices
            .iter()
            .zip(&ctx.similarities)
            .enumerate()
        {
            let head: String = paper.paragraphs[p].text.chars().take(70).collect();
            println!("  #{rank} paragraph {p} (cos {sim:.3}): {head}…");
        }
        println!(
            "  context keeps {:.0}% of the paper out of the prompt\n",
            100.0 * reduction_ratio(&paper, &ctx)
        );
    }
    Ok(())
}
