use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{generate_dataset, Dataset};
use crate::error::{Error, Result};
use crate::numkit::Seed;

use super::config::{ExperimentConfig, Method};
use super::train::{distill_student, evaluate_network, evaluation_pairs, train_teacher, EvalMetrics, RunLog, TeacherRun};

/// Iterations averaged for the reported final loss.
pub const FINAL_LOSS_WINDOW: usize = 200;

/// One trained and evaluated student.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub label: String,
    pub method: Method,
    pub seed: Seed,
    pub metrics: EvalMetrics,
    pub final_loss: f64,
    pub log: RunLog,
}

/// Mean and sample standard deviation of one metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { mean, std, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCounts {
    pub genuine: usize,
    pub impostor: usize,
}

/// One entry of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub name: String,
    pub value: f64,
    pub parameters: BTreeMap<String, Value>,
    pub pairs: PairCounts,
    pub warnings: Vec<String>,
}

/// Per-run metric records: accuracy, rank-1 and one TAR per FAR target.
pub fn metric_records(metrics: &EvalMetrics, parameters: &BTreeMap<String, Value>) -> Vec<MetricRecord> {
    let pairs = PairCounts { genuine: metrics.n_genuine, impostor: metrics.n_impostor };
    let record = |name: &str, value: f64, extra: Vec<(&str, Value)>, warnings: Vec<String>| {
        let mut parameters = parameters.clone();
        parameters.extend(extra.into_iter().map(|(k, v)| (k.to_string(), v)));
        MetricRecord { name: name.into(), value, parameters, pairs: pairs.clone(), warnings }
    };
    let mut out = vec![record(
        "verification_accuracy",
        metrics.verification_accuracy,
        vec![("threshold", json!(metrics.threshold))],
        vec![],
    )];
    for t in &metrics.tar_at_far {
        let warnings = if t.unreliable {
            vec![format!("unreliable_far: {} impostor pairs cannot resolve FAR {}", metrics.n_impostor, t.far_target)]
        } else {
            vec![]
        };
        out.push(record(
            "tar_at_far",
            t.point.tar,
            vec![
                ("far_target", json!(t.far_target)),
                ("threshold", json!(t.point.threshold)),
                ("far", json!(t.point.far)),
            ],
            warnings,
        ));
    }
    out.push(record("rank1", metrics.rank1, vec![], vec![]));
    out
}

/// Fixed facts about the protocol, recorded with every report.
pub fn protocol_metadata() -> Value {
    json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "verification_protocol": "best threshold on a single holdout pair set (no cross-validation folds)",
        "far_threshold_rule": "just above the k-th highest impostor score, k = floor(far * n_impostor)",
        "rank1_protocol": "holdout probes against one gallery entry per class (normalized train-split mean embedding)",
        "teacher_features": "l2-normalized before entering the center momentum and update",
    })
}

/// Results of [`compare_methods`], rows sorted by (method, label, seed).
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub runs: Vec<RunResult>,
    pub configs: Vec<ExperimentConfig>,
}

impl ComparisonReport {
    /// Row keys `(method, label)` in report order, without duplicates.
    pub fn groups(&self) -> Vec<(Method, String)> {
        let mut groups: Vec<(Method, String)> = self.runs.iter().map(|r| (r.method, r.label.clone())).collect();
        groups.dedup();
        groups
    }

    fn group_runs(&self, method: Method, label: &str) -> Vec<&RunResult> {
        self.runs.iter().filter(|r| r.method == method && r.label == label).collect()
    }

    /// Across-seed summaries: accuracy, rank-1, final loss, then TAR per FAR target.
    pub fn summaries(&self, method: Method, label: &str) -> Vec<(String, Summary)> {
        let runs = self.group_runs(method, label);
        let pick = |f: &dyn Fn(&RunResult) -> f64| Summary::of(&runs.iter().map(|r| f(r)).collect::<Vec<_>>());
        let mut out = vec![
            ("verification_accuracy".to_string(), pick(&|r| r.metrics.verification_accuracy)),
            ("rank1".to_string(), pick(&|r| r.metrics.rank1)),
            ("final_loss".to_string(), pick(&|r| r.final_loss)),
        ];
        if let Some(first) = runs.first() {
            for (k, t) in first.metrics.tar_at_far.iter().enumerate() {
                out.push((format!("tar_at_far_{}", t.far_target), pick(&|r| r.metrics.tar_at_far[k].point.tar)));
            }
        }
        out
    }

    pub fn mean_accuracy(&self, method: Method) -> Option<f64> {
        let accs: Vec<f64> =
            self.runs.iter().filter(|r| r.method == method).map(|r| r.metrics.verification_accuracy).collect();
        (!accs.is_empty()).then(|| Summary::of(&accs).mean)
    }

    pub fn metric_records(&self) -> Vec<MetricRecord> {
        let mut out = Vec::new();
        for run in &self.runs {
            let mut params = BTreeMap::new();
            params.insert("label".to_string(), json!(run.label));
            params.insert("method".to_string(), json!(run.method));
            params.insert("seed".to_string(), json!(run.seed));
            out.extend(metric_records(&run.metrics, &params));
            let pairs = PairCounts { genuine: run.metrics.n_genuine, impostor: run.metrics.n_impostor };
            let mut p = params.clone();
            p.insert("window".to_string(), json!(FINAL_LOSS_WINDOW));
            out.push(MetricRecord { name: "final_loss".into(), value: run.final_loss, parameters: p, pairs, warnings: vec![] });
        }
        for (method, label) in self.groups() {
            let runs = self.group_runs(method, &label);
            let pairs = PairCounts { genuine: runs[0].metrics.n_genuine, impostor: runs[0].metrics.n_impostor };
            for (name, s) in self.summaries(method, &label) {
                for (stat, value) in [("mean", s.mean), ("std", s.std)] {
                    let mut p = BTreeMap::new();
                    p.insert("label".to_string(), json!(label));
                    p.insert("method".to_string(), json!(method));
                    p.insert("statistic".to_string(), json!(stat));
                    p.insert("seeds".to_string(), json!(s.n));
                    out.push(MetricRecord {
                        name: name.clone(),
                        value,
                        parameters: p,
                        pairs: pairs.clone(),
                        warnings: vec![],
                    });
                }
            }
        }
        out
    }

    /// `metrics.json`: protocol metadata, the configs, and the flat metric list.
    /// Contains nothing that varies between identical invocations.
    pub fn write_metrics_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let doc = json!({
            "metadata": protocol_metadata(),
            "configs": self.configs,
            "metrics": self.metric_records(),
        });
        fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(())
    }

    /// `report.csv`: one row per run, then `mean` and `std` rows per group.
    pub fn write_report_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let fars: Vec<f64> =
            self.runs.first().map(|r| r.metrics.tar_at_far.iter().map(|t| t.far_target).collect()).unwrap_or_default();
        let mut header = vec!["label".to_string(), "method".into(), "seed".into(), "verification_accuracy".into(), "rank1".into(), "final_loss".into()];
        header.extend(fars.iter().map(|f| format!("tar_at_far_{f}")));
        w.write_record(&header)?;
        for r in &self.runs {
            let mut row = vec![
                r.label.clone(),
                r.method.name().to_string(),
                r.seed.0.to_string(),
                r.metrics.verification_accuracy.to_string(),
                r.metrics.rank1.to_string(),
                r.final_loss.to_string(),
            ];
            row.extend(r.metrics.tar_at_far.iter().map(|t| t.point.tar.to_string()));
            w.write_record(&row)?;
        }
        for (method, label) in self.groups() {
            let sums = self.summaries(method, &label);
            for stat in ["mean", "std"] {
                let mut row = vec![label.clone(), method.name().to_string(), stat.to_string()];
                row.extend(sums.iter().map(|(_, s)| if stat == "mean" { s.mean } else { s.std }.to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// One `runs/<label>_seed<k>.csv` run log per run.
    pub fn write_run_logs(&self, dir: impl AsRef<Path>, every: u64) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for r in &self.runs {
            r.log.write_csv(dir.join(format!("{}_seed{}.csv", r.label, r.seed.0)), every)?;
        }
        Ok(())
    }
}

/// Everything that determines a teacher run besides the seed.
fn teacher_key(cfg: &ExperimentConfig) -> Result<String> {
    Ok(serde_json::to_string(&json!({
        "spec": cfg.teacher_spec,
        "margin": cfg.margin,
        "iterations": cfg.teacher_iterations(),
        "batch_size": cfg.batch_size,
        "schedule": cfg.lr_schedule,
        "momentum": cfg.momentum,
        "weight_decay": cfg.weight_decay,
    }))?)
}

/// Trains and evaluates every config under each of its seeds. Teachers are
/// trained once per distinct teacher setup and seed and shared. Runs execute
/// in parallel; the result does not depend on scheduling or on the order of
/// `configs`.
pub fn compare_methods(configs: &[ExperimentConfig]) -> Result<ComparisonReport> {
    let first = configs.first().ok_or_else(|| Error::InvalidConfig("no configs to compare".into()))?;
    for cfg in configs {
        cfg.validate()?;
        if cfg.dataset != first.dataset || cfg.eval != first.eval {
            return Err(Error::InvalidConfig(format!(
                "config {} does not share the dataset and evaluation pairs of {}",
                cfg.label(),
                first.label()
            )));
        }
    }
    let dataset = generate_dataset(&first.dataset)?;

    let mut teacher_jobs: BTreeMap<(String, u64), &ExperimentConfig> = BTreeMap::new();
    for cfg in configs.iter().filter(|c| c.method.uses_teacher()) {
        let key = teacher_key(cfg)?;
        for seed in &cfg.seeds {
            teacher_jobs.entry((key.clone(), seed.0)).or_insert(cfg);
        }
    }
    let teachers: BTreeMap<(String, u64), TeacherRun> = teacher_jobs
        .into_par_iter()
        .map(|(key, cfg)| Ok((key.clone(), train_teacher(cfg, &dataset, Seed(key.1))?)))
        .collect::<Result<_>>()?;

    let jobs: Vec<(&ExperimentConfig, Seed)> =
        configs.iter().flat_map(|c| c.seeds.iter().map(move |&s| (c, s))).collect();
    let mut runs = jobs
        .into_par_iter()
        .map(|(cfg, seed)| {
            let teacher = if cfg.method.uses_teacher() { teachers.get(&(teacher_key(cfg)?, seed.0)) } else { None };
            run_student(cfg, &dataset, seed, teacher)
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by(|a, b| (a.method, &a.label, a.seed.0).cmp(&(b.method, &b.label, b.seed.0)));

    let mut configs = configs.to_vec();
    configs.sort_by(|a, b| {
        (a.method, a.label()).cmp(&(b.method, b.label())).then_with(|| {
            let ka = serde_json::to_string(a).unwrap_or_default();
            let kb = serde_json::to_string(b).unwrap_or_default();
            ka.cmp(&kb)
        })
    });
    Ok(ComparisonReport { runs, configs })
}

/// Distills and evaluates one student.
pub fn run_student(cfg: &ExperimentConfig, dataset: &Dataset, seed: Seed, teacher: Option<&TeacherRun>) -> Result<RunResult> {
    let student = distill_student(cfg, dataset, seed, teacher)?;
    let pairs = evaluation_pairs(cfg, dataset)?;
    let metrics = evaluate_network(&student.network, dataset, &pairs, &cfg.eval.far_targets)?;
    let n = student.log.rows.len();
    let final_loss = student.log.mean_loss(n.saturating_sub(FINAL_LOSS_WINDOW), n);
    Ok(RunResult { label: cfg.label(), method: cfg.method, seed, metrics, final_loss, log: student.log })
}
