//! Paragraph segmentation on the fixture paper: blank-line blocks,
//! short-block merging, long-block sentence splitting. Shows how the
//! policy bounds change the paragraph map.
//!
//!     cargo run --example segment_paper

use rebuttal::corpus::{segment_paper, SegmentationPolicy};

fn preview(text: &str) -> String {
    let flat = text.replace('\n', " ");
    let cut: String = flat.chars().take(64).collect();
    if flat.chars().count() > 64 {
        format!("{cut}…")
    } else {
        cut
    }
}

fn main() -> rebuttal::Result<()> {
    let raw = include_str!("../fixtures/paper.md");

    for policy in [
        SegmentationPolicy::default(),
        SegmentationPolicy {
            min_chars: 200,
            max_chars: 400,
        },
    ] {
        let paper = segment_paper("paper", "fixture", raw, &policy)?;
        println!(
            "policy min {} / max {} -> {} paragraphs",
            policy.min_chars,
            policy.max_chars,
            paper.paragraphs.len()
        );
        for p in &paper.paragraphs {
            println!("  [{:>2}] {:>4} chars  {}", p.index, p.char_len, preview(&p.text));
        }
        println!();
    }
    Ok(())
}
