//! Trains the perspective scorer on the constructed separable task and
//! compares three selectors on held-out samples: the trained scorer, the
//! same scorer untrained, and the training-free cosine ranker. The task
//! is built so raw cosine is drawn to a decoy candidate, which is why
//! training is needed at all.
//!
//!     cargo run --example train_planner -- [train_samples]

use rebuttal::planner::{
    ablation_score, argmax, prepare_samples, selection_accuracy, synthetic_dataset, train,
    AblationVariant, Optimizer, PlannerModel, SyntheticSpec, TrainConfig,
};
use rebuttal::providers::mock::MockEmbed;
use rebuttal::providers::EmbedProvider;

fn main() -> rebuttal::Result<()> {
    let train_samples: usize = std::env::args()
        .nth(1)
        .map_or(800, |s| s.parse().unwrap_or(800));
    let spec = SyntheticSpec {
        train_samples,
        eval_samples: 200,
        ..SyntheticSpec::default()
    };
    let embed = MockEmbed::new(128, 1234);
    let (train_recs, eval_recs) = synthetic_dataset(&spec);
    let train_set = prepare_samples(&train_recs, &embed)?;
    let eval_set = prepare_samples(&eval_recs, &embed)?;

    let mut model = PlannerModel::new(128, &[256, 128, 64], 7, &embed.name());
    let untrained = selection_accuracy(&model, &eval_set)?;
    let encoder_only = {
        let mut hits = 0;
        for s in &eval_set {
            let scores: Vec<f64> = s
                .candidate_vecs
                .iter()
                .map(|c| {
                    ablation_score(
                        AblationVariant::Encoder,
                        &model,
                        c,
                        &s.context_vecs,
                        &s.context_vecs,
                    )
                })
                .collect::<rebuttal::Result<_>>()?;
            hits += (argmax(&scores) == s.gt_index) as usize;
        }
        hits as f64 / eval_set.len() as f64
    };

    let cfg = TrainConfig {
        optimizer: Optimizer::Adam,
        ..TrainConfig::default()
    };
    println!(
        "training on {} samples ({} epochs, batch {}, lr {})",
        train_set.len(),
        cfg.epochs,
        cfg.batch_size,
        cfg.learning_rate
    );
    let report = train(&mut model, &train_set, Some(&eval_set), &cfg)?;
    for (i, loss) in report.epoch_losses.iter().enumerate() {
        println!("  epoch {}: mean loss {loss:.4}", i + 1);
    }
    let trained = selection_accuracy(&model, &eval_set)?;

    println!("\nheld-out selection accuracy ({} samples):", eval_set.len());
    println!("  untrained scorer    {untrained:.3}");
    println!("  cosine (no training) {encoder_only:.3}");
    println!("  trained scorer      {trained:.3}");
    Ok(())
}
