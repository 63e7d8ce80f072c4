//! Train a teacher on the toy benchmark and inspect how tightly its
//! training samples sit around their class centers.
//!
//!     cargo run --release --example train_teacher [seed]

use adadistill::data::generate_dataset;
use adadistill::eval::center_vs_sample_distributions;
use adadistill::harness::{evaluate_network, evaluation_pairs, train_teacher, ExperimentConfig};
use adadistill::{Result, Seed};

fn main() -> Result<()> {
    let seed = Seed(std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1));
    let cfg = ExperimentConfig::default();
    let ds = generate_dataset(&cfg.dataset)?;
    let teacher = train_teacher(&cfg, &ds, seed)?;

    let log = &teacher.log;
    let n = log.rows.len();
    println!("loss {:.4} -> {:.4}", log.mean_loss(0, 200), log.mean_loss(n - 200, n));
    for c in log.checkpoints.iter().step_by(4) {
        println!("  iter {:5}  holdout acc {:.4}", c.iteration, c.verification_accuracy);
    }

    let m = evaluate_network(&teacher.network, &ds, &evaluation_pairs(&cfg, &ds)?, &cfg.eval.far_targets)?;
    println!("holdout accuracy {:.4}, rank-1 {:.4}", m.verification_accuracy, m.rank1);

    let train = ds.train_indices();
    let emb = teacher.network.embed(&ds.inputs.select_rows(&train))?;
    let r = center_vs_sample_distributions(&emb, &ds.labels_of(&train), Some(teacher.centers.centers()))?;
    println!("mean cosine sample-center {:.4} vs sample-sample {:.4}", r.mean_sample_center, r.mean_sample_sample);
    Ok(())
}
