//! All five training methods over three seeds on the toy benchmark,
//! printed as a table and written as `report.csv` / `metrics.json`.
//!
//!     cargo run --release --example compare_methods [out-dir]

use adadistill::harness::{compare_methods, ExperimentConfig, Method};
use adadistill::Result;

fn main() -> Result<()> {
    let base = ExperimentConfig::default();
    let configs: Vec<ExperimentConfig> = Method::ALL.iter().map(|&m| base.with_method(m)).collect();
    let report = compare_methods(&configs)?;

    println!("{:24} {:>16} {:>16} {:>12}", "method", "accuracy", "rank-1", "final loss");
    for (method, label) in report.groups() {
        let s = report.summaries(method, &label);
        println!(
            "{label:24} {:>8.4} ± {:.4} {:>8.4} ± {:.4} {:>12.4}",
            s[0].1.mean, s[0].1.std, s[1].1.mean, s[1].1.std, s[2].1.mean
        );
    }

    if let Some(dir) = std::env::args().nth(1) {
        std::fs::create_dir_all(&dir)?;
        report.write_report_csv(format!("{dir}/report.csv"))?;
        report.write_metrics_json(format!("{dir}/metrics.json"))?;
        println!("wrote {dir}/report.csv and {dir}/metrics.json");
    }
    Ok(())
}
