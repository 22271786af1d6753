//! Full rebuttal run on the bundled fixture paper and review: decompose
//! the review, retrieve evidence per point, gate a perspective, generate
//! per-point responses, and merge. Pass a seed to vary the mock backend.
//!
//!     cargo run --example run_pipeline -- [seed]

use rebuttal::corpus::{segment_paper, Review, SegmentationPolicy};
use rebuttal::pipeline::{run, Mode, PipelineConfig};
use rebuttal::planner::PlannerModel;
use rebuttal::providers::mock::{MockChat, MockEmbed};
use rebuttal::providers::EmbedProvider;

fn main() -> rebuttal::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(42, |s| s.parse().unwrap_or(42));
    let paper = segment_paper(
        "paper",
        "Adaptive Spectral Pruning",
        include_str!("../fixtures/paper.md"),
        &SegmentationPolicy::default(),
    )?;
    let review = Review::new("review", "paper", include_str!("../fixtures/review.txt").trim())?;

    let mut cfg = PipelineConfig::default().with_mode(Mode::Drpg);
    // The fixture paper is short; a narrow evidence set keeps the
    // printout readable.
    cfg.k = 4;
    let chat = MockChat::new(seed);
    let embed = MockEmbed::new(64, seed);
    // An untrained seeded scorer: real deployments load a trained
    // checkpoint here, see the train_planner example.
    let model = PlannerModel::new(embed.dim(), &[64, 32], cfg.seed, &embed.name());

    let (rebuttal, trace) = run(&paper, &review, &cfg, &chat, &embed, Some(&model), None)?;

    println!(
        "paper: {} paragraphs | review: {} points | mode {}\n",
        paper.paragraphs.len(),
        trace.points.len(),
        cfg.mode
    );
    for point in &trace.points {
        let ctx = &trace.contexts[point.index];
        let plan = &trace.plans[point.index];
        println!("point {}: {}", point.index, point.text);
        println!("  evidence paragraphs: {:?}", ctx.paragraph_indices);
        match plan.chosen() {
            Some(p) => println!("  perspective: {}", p.text),
            None => println!(
                "  perspective: none (confidence {:.2} below gate {})",
                plan.selection.as_ref().map_or(f64::NAN, |s| s.confidence),
                cfg.threshold
            ),
        }
    }
    println!(
        "\nperspective usage: {:.0}% of points",
        100.0 * trace.perspective_usage()?
    );
    println!("\n--- merged rebuttal (first 3 blocks) ---");
    for block in rebuttal.merged_text.split("\n\n").take(6) {
        println!("{block}\n");
    }
    Ok(())
}
