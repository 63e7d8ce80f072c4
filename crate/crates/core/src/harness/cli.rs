//! Command-line front end. Every command writes its artifacts under
//! `--out-dir`; failures print one JSON error record to stderr.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::data::{generate_dataset, Dataset};
use crate::error::{Error, Result};
use crate::eval::{roc_curve, score_pairs};
use crate::losses::CenterBank;
use crate::models::{load_matrix, save_matrix, MlpNetwork};
use crate::numkit::Seed;

use super::config::ExperimentConfig;
use super::report::{compare_methods, metric_records, protocol_metadata, MetricRecord, PairCounts, FINAL_LOSS_WINDOW};
use super::train::{distill_student, evaluate_network, evaluation_pairs, train_teacher, EvalMetrics, RunLog, TeacherRun};

#[derive(Debug, Parser)]
#[command(name = "adadistill", version, about = "Adaptive center distillation for embedding networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset and its evaluation pairs.
    GenData(CommonArgs),
    /// Train a teacher and save it with its classifier centers.
    TrainTeacher(CommonArgs),
    /// Distill a student under the configured method.
    Distill {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory from a previous `train-teacher`; trained afresh if absent.
        #[arg(long)]
        teacher_dir: Option<PathBuf>,
    },
    /// Evaluate a saved network on the holdout pairs.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Network file written by `train-teacher` or `distill`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Run every configured method over every seed and tabulate.
    Compare(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment config, TOML (`.toml`) or JSON; defaults apply otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run with this seed only.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Write every n-th iteration to run logs.
    #[arg(long, default_value_t = 1)]
    pub log_every: u64,
}

impl CommonArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seeds = vec![Seed(seed)];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(&self.out_dir)
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::TrainTeacher(_) => "train-teacher",
            Command::Distill { .. } => "distill",
            Command::Evaluate { .. } => "evaluate",
            Command::Compare(_) => "compare",
        }
    }
}

/// Parses `std::env::args`, runs the command, and returns the process exit
/// code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let record = json!({ "error": { "command": name, "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{record}");
            1
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(args) => gen_data(&args),
        Command::TrainTeacher(args) => train_teacher_cmd(&args),
        Command::Distill { common, teacher_dir } => distill_cmd(&common, teacher_dir.as_deref()),
        Command::Evaluate { common, model } => evaluate_cmd(&common, &model),
        Command::Compare(args) => compare_cmd(&args),
    }
}

fn first_seed(cfg: &ExperimentConfig) -> Seed {
    cfg.seeds[0]
}

fn write_json(path: impl AsRef<Path>, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn gen_data(args: &CommonArgs) -> Result<()> {
    let mut cfg = args.config()?;
    if let Some(seed) = args.seed {
        cfg.dataset.seed = Seed(seed);
    }
    let out = args.out_dir()?;
    let dataset = generate_dataset(&cfg.dataset)?;
    dataset.save(out.join("dataset.bin"))?;
    let pairs = evaluation_pairs(&cfg, &dataset)?;
    let mut w = csv::Writer::from_path(out.join("pairs.csv"))?;
    w.write_record(["kind", "i", "j"])?;
    for (kind, list) in [("genuine", &pairs.genuine), ("impostor", &pairs.impostor)] {
        for (i, j) in list {
            w.write_record([kind, &i.to_string(), &j.to_string()])?;
        }
    }
    w.flush()?;
    write_json(
        out.join("dataset.json"),
        &json!({
            "spec": cfg.dataset,
            "samples": dataset.len(),
            "train": dataset.train_indices().len(),
            "holdout": dataset.holdout_indices().len(),
            "pairs": { "genuine": pairs.genuine.len(), "impostor": pairs.impostor.len() },
        }),
    )
}

fn single_run_outputs(
    out: &Path,
    cfg: &ExperimentConfig,
    role: &str,
    seed: Seed,
    metrics: &EvalMetrics,
    log: &RunLog,
    every: u64,
) -> Result<()> {
    log.write_csv(out.join("runlog.csv"), every)?;
    let n = log.rows.len();
    let final_loss = log.mean_loss(n.saturating_sub(FINAL_LOSS_WINDOW), n);
    let mut params = BTreeMap::new();
    params.insert("label".to_string(), json!(role));
    params.insert("seed".to_string(), json!(seed));
    let mut records = metric_records(metrics, &params);
    let mut p = params.clone();
    p.insert("window".to_string(), json!(FINAL_LOSS_WINDOW));
    records.push(MetricRecord {
        name: "final_loss".into(),
        value: final_loss,
        parameters: p,
        pairs: PairCounts { genuine: metrics.n_genuine, impostor: metrics.n_impostor },
        warnings: vec![],
    });
    write_json(
        out.join("metrics.json"),
        &json!({ "metadata": protocol_metadata(), "configs": [cfg], "metrics": records }),
    )?;
    let mut w = csv::Writer::from_path(out.join("report.csv"))?;
    let mut header = vec!["label".to_string(), "seed".into(), "verification_accuracy".into(), "rank1".into(), "final_loss".into()];
    header.extend(metrics.tar_at_far.iter().map(|t| format!("tar_at_far_{}", t.far_target)));
    w.write_record(&header)?;
    let mut row = vec![
        role.to_string(),
        seed.0.to_string(),
        metrics.verification_accuracy.to_string(),
        metrics.rank1.to_string(),
        final_loss.to_string(),
    ];
    row.extend(metrics.tar_at_far.iter().map(|t| t.point.tar.to_string()));
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

fn train_teacher_cmd(args: &CommonArgs) -> Result<()> {
    let cfg = args.config()?;
    let out = args.out_dir()?;
    let seed = first_seed(&cfg);
    let dataset = generate_dataset(&cfg.dataset)?;
    let teacher = train_teacher(&cfg, &dataset, seed)?;
    teacher.network.save(out.join("teacher.bin"))?;
    save_matrix(teacher.centers.centers(), out.join("teacher_centers.bin"))?;
    let pairs = evaluation_pairs(&cfg, &dataset)?;
    let metrics = evaluate_network(&teacher.network, &dataset, &pairs, &cfg.eval.far_targets)?;
    single_run_outputs(out, &cfg, "teacher", seed, &metrics, &teacher.log, args.log_every)
}

fn load_teacher(dir: &Path, cfg: &ExperimentConfig) -> Result<TeacherRun> {
    let network = MlpNetwork::load(dir.join("teacher.bin"))?;
    if network.spec() != &cfg.teacher_spec {
        return Err(Error::InvalidConfig(format!("{} does not match teacher_spec", dir.join("teacher.bin").display())));
    }
    let centers = CenterBank::new(&load_matrix(dir.join("teacher_centers.bin"))?)?;
    Ok(TeacherRun { network, centers, log: RunLog::default() })
}

fn distill_cmd(args: &CommonArgs, teacher_dir: Option<&Path>) -> Result<()> {
    let cfg = args.config()?;
    let out = args.out_dir()?;
    let seed = first_seed(&cfg);
    let dataset = generate_dataset(&cfg.dataset)?;
    let teacher = match (cfg.method.uses_teacher(), teacher_dir) {
        (false, _) => None,
        (true, Some(dir)) => Some(load_teacher(dir, &cfg)?),
        (true, None) => Some(train_teacher(&cfg, &dataset, seed)?),
    };
    let student = distill_student(&cfg, &dataset, seed, teacher.as_ref())?;
    student.network.save(out.join("student.bin"))?;
    if let Some(bank) = &student.centers {
        save_matrix(bank.centers(), out.join("student_centers.bin"))?;
    }
    let pairs = evaluation_pairs(&cfg, &dataset)?;
    let metrics = evaluate_network(&student.network, &dataset, &pairs, &cfg.eval.far_targets)?;
    single_run_outputs(out, &cfg, &cfg.label(), seed, &metrics, &student.log, args.log_every)
}

fn evaluate_cmd(args: &CommonArgs, model: &Path) -> Result<()> {
    let cfg = args.config()?;
    let out = args.out_dir()?;
    let dataset: Dataset = generate_dataset(&cfg.dataset)?;
    let network = MlpNetwork::load(model)?;
    let pairs = evaluation_pairs(&cfg, &dataset)?;
    let metrics = evaluate_network(&network, &dataset, &pairs, &cfg.eval.far_targets)?;
    let mut params = BTreeMap::new();
    params.insert("model".to_string(), json!(model.display().to_string()));
    write_json(
        out.join("metrics.json"),
        &json!({ "metadata": protocol_metadata(), "configs": [cfg], "metrics": metric_records(&metrics, &params) }),
    )?;

    let scores = score_pairs(&network.embed(&dataset.inputs)?, &pairs)?;
    let mut w = csv::Writer::from_path(out.join("roc.csv"))?;
    w.write_record(["threshold", "tar", "far"])?;
    for p in roc_curve(&scores)? {
        w.write_record([p.threshold.to_string(), p.tar.to_string(), p.far.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("report.csv"))?;
    let mut header = vec!["model".to_string(), "verification_accuracy".into(), "threshold".into(), "rank1".into()];
    header.extend(metrics.tar_at_far.iter().map(|t| format!("tar_at_far_{}", t.far_target)));
    w.write_record(&header)?;
    let mut row = vec![
        model.display().to_string(),
        metrics.verification_accuracy.to_string(),
        metrics.threshold.to_string(),
        metrics.rank1.to_string(),
    ];
    row.extend(metrics.tar_at_far.iter().map(|t| t.point.tar.to_string()));
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

fn compare_cmd(args: &CommonArgs) -> Result<()> {
    let cfg = args.config()?;
    let out = args.out_dir()?;
    let report = compare_methods(&cfg.expand_methods())?;
    report.write_metrics_json(out.join("metrics.json"))?;
    report.write_report_csv(out.join("report.csv"))?;
    report.write_run_logs(out.join("runs"), args.log_every)
}
