//! Rating fit on synthetic pairwise games: three systems with known true
//! strengths play round-robin games sampled from the paired-comparison
//! model, then the fit recovers the strength gaps from outcomes alone.
//!
//!     cargo run --example evaluate_elo -- [games_per_pair]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rebuttal::evaluation::{build_report, ComparisonRecord, Verdict};

fn main() -> rebuttal::Result<()> {
    let games: usize = std::env::args()
        .nth(1)
        .map_or(2000, |s| s.parse().unwrap_or(2000));
    // True strengths on the 400-per-decade logistic scale.
    let systems = [("direct", 900.0), ("drg", 1000.0), ("drpg", 1100.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let mut records = Vec::new();
    for (i, &(a, ra)) in systems.iter().enumerate() {
        for &(b, rb) in &systems[i + 1..] {
            let p_a = 1.0 / (1.0 + 10f64.powf((rb - ra) / 400.0));
            for _ in 0..games {
                records.push(ComparisonRecord {
                    review_id: "synthetic".into(),
                    system_a: a.into(),
                    system_b: b.into(),
                    order_swapped: false,
                    verdict: if rng.gen_bool(p_a) {
                        Verdict::AWins
                    } else {
                        Verdict::BWins
                    },
                    rationale: String::new(),
                    forced_tie: false,
                });
            }
        }
    }

    let report = build_report(&records, &[])?;
    print!("{}", report.render());

    println!("\ntrue vs recovered gaps ({games} games per pair):");
    for (i, &(a, ra)) in systems.iter().enumerate() {
        for &(b, rb) in &systems[i + 1..] {
            let fit = report.elo.gap(a, b).unwrap();
            println!("  {a} vs {b}: true {:+.0}, fitted {fit:+.1}", ra - rb);
        }
    }
    Ok(())
}
