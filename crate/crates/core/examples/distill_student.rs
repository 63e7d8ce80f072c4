//! Distill one student under a chosen method and print its convergence.
//!
//!     cargo run --release --example distill_student [method] [seed]
//!
//! `method` is one of standalone, mse_kd, amldistill, adadistill_alpha,
//! adadistill_alpha_prime (default).

use adadistill::data::generate_dataset;
use adadistill::harness::{distill_student, evaluate_network, evaluation_pairs, train_teacher, ExperimentConfig, Method};
use adadistill::{Error, Result, Seed};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let method = match args.next() {
        Some(m) => serde_json::from_value::<Method>(serde_json::Value::String(m.clone()))
            .map_err(|_| Error::InvalidConfig(format!("unknown method {m}")))?,
        None => Method::AdadistillAlphaPrime,
    };
    let seed = Seed(args.next().and_then(|s| s.parse().ok()).unwrap_or(1));

    let cfg = ExperimentConfig::default().with_method(method);
    let ds = generate_dataset(&cfg.dataset)?;
    let teacher = if method.uses_teacher() { Some(train_teacher(&cfg, &ds, seed)?) } else { None };
    let run = distill_student(&cfg, &ds, seed, teacher.as_ref())?;

    for w in run.log.rows.chunks(500) {
        let loss = w.iter().map(|r| r.loss).sum::<f64>() / w.len() as f64;
        let alpha: Vec<f64> = w.iter().filter_map(|r| r.mean_alpha).collect();
        let alpha = if alpha.is_empty() { String::new() } else { format!("  mean alpha {:.4}", alpha.iter().sum::<f64>() / alpha.len() as f64) };
        println!("iter {:5}  loss {loss:.4}  lr {:.0e}{alpha}", w[0].iteration, w[0].lr);
    }
    let m = evaluate_network(&run.network, &ds, &evaluation_pairs(&cfg, &ds)?, &cfg.eval.far_targets)?;
    println!("{}: holdout accuracy {:.4}, rank-1 {:.4}", method.name(), m.verification_accuracy, m.rank1);
    Ok(())
}
