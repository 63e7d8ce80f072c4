use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SyntheticDatasetSpec;
use crate::error::{Error, Result};
use crate::losses::{AlphaMode, CombinedLossConfig, MarginConfig};
use crate::models::{Activation, MlpSpec};
use crate::numkit::Seed;
use crate::optim::{LrSchedule, DEFAULT_MILESTONE_FRACTIONS};

/// How the student is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Margin softmax with the student's own trainable classifier; no teacher.
    Standalone,
    /// Standalone loss plus mean squared feature distance to the teacher.
    MseKd,
    /// Margin softmax against the teacher's frozen classifier centers.
    Amldistill,
    /// Margin softmax against EMA-refined centers, plain momentum.
    AdadistillAlpha,
    /// Margin softmax against EMA-refined centers, hard-sample momentum.
    AdadistillAlphaPrime,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Standalone,
        Method::MseKd,
        Method::Amldistill,
        Method::AdadistillAlpha,
        Method::AdadistillAlphaPrime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Standalone => "standalone",
            Method::MseKd => "mse_kd",
            Method::Amldistill => "amldistill",
            Method::AdadistillAlpha => "adadistill_alpha",
            Method::AdadistillAlphaPrime => "adadistill_alpha_prime",
        }
    }

    pub fn uses_teacher(self) -> bool {
        self != Method::Standalone
    }

    /// Whether the student trains its own classifier rows.
    pub fn owns_classifier(self) -> bool {
        matches!(self, Method::Standalone | Method::MseKd)
    }

    pub fn alpha_mode(self) -> Option<AlphaMode> {
        match self {
            Method::AdadistillAlpha => Some(AlphaMode::Plain),
            Method::AdadistillAlphaPrime => Some(AlphaMode::HardWeighted),
            _ => None,
        }
    }

    /// Default task/distillation weights.
    pub fn default_weights(self) -> CombinedLossConfig {
        match self {
            Method::MseKd => CombinedLossConfig { lambda: 1.0, beta: 1.0 },
            _ => CombinedLossConfig { lambda: 1.0, beta: 0.0 },
        }
    }
}

/// Starting point of the EMA center bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterInit {
    /// The teacher's trained classifier rows.
    TeacherClassifier,
    /// Per-class mean of teacher features over one pass of the training split.
    ClassMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub initial_lr: f64,
    /// Milestones as fractions of the run length.
    pub milestone_fractions: Vec<f64>,
    pub decay_factor: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            initial_lr: 0.05,
            milestone_fractions: DEFAULT_MILESTONE_FRACTIONS.to_vec(),
            decay_factor: 0.1,
        }
    }
}

impl ScheduleConfig {
    pub fn schedule(&self, total_iterations: u64) -> Result<LrSchedule> {
        LrSchedule::from_fractions(self.initial_lr, total_iterations, &self.milestone_fractions, self.decay_factor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub pair_seed: Seed,
    pub far_targets: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { n_genuine: 1000, n_impostor: 1000, pair_seed: Seed(7), far_targets: vec![1e-2, 1e-3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Row label in reports; defaults to the method name.
    pub name: Option<String>,
    pub dataset: SyntheticDatasetSpec,
    pub teacher_spec: MlpSpec,
    pub student_spec: MlpSpec,
    pub margin: MarginConfig,
    pub method: Method,
    /// Task-loss weight; `None` takes the method default.
    pub lambda: Option<f64>,
    /// Distillation-loss weight; `None` takes the method default.
    pub beta: Option<f64>,
    pub total_iterations: u64,
    /// Teacher run length; `None` reuses `total_iterations`.
    pub teacher_iterations: Option<u64>,
    pub batch_size: usize,
    pub lr_schedule: ScheduleConfig,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seeds: Vec<Seed>,
    pub center_init: CenterInit,
    pub eval: EvalConfig,
    /// Methods the `compare` command expands this config into; empty means
    /// `method` alone.
    pub compare_methods: Vec<Method>,
}

impl Default for ExperimentConfig {
    /// The desk-scale toy benchmark.
    fn default() -> Self {
        ExperimentConfig {
            name: None,
            dataset: SyntheticDatasetSpec::default(),
            teacher_spec: MlpSpec::new(vec![16, 64, 8], Activation::Relu),
            student_spec: MlpSpec::new(vec![16, 16, 8], Activation::Relu),
            // s=64, m1=0.5 lets the jointly trained classifier collapse on
            // this data (all rows together, features antipodal)
            margin: MarginConfig::arcface(0.2, 16.0),
            method: Method::AdadistillAlphaPrime,
            lambda: None,
            beta: None,
            total_iterations: 5000,
            teacher_iterations: None,
            batch_size: 64,
            lr_schedule: ScheduleConfig::default(),
            momentum: 0.9,
            weight_decay: 5e-4,
            seeds: vec![Seed(1), Seed(2), Seed(3)],
            center_init: CenterInit::ClassMean,
            eval: EvalConfig::default(),
            compare_methods: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a TOML file (`.toml`) or JSON (anything else). Missing fields
    /// take their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text)?
        } else {
            serde_json::from_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.method.name().to_string())
    }

    pub fn loss_weights(&self) -> CombinedLossConfig {
        let d = self.method.default_weights();
        CombinedLossConfig { lambda: self.lambda.unwrap_or(d.lambda), beta: self.beta.unwrap_or(d.beta) }
    }

    pub fn teacher_iterations(&self) -> u64 {
        self.teacher_iterations.unwrap_or(self.total_iterations)
    }

    /// Copy with a different method (and its default name).
    pub fn with_method(&self, method: Method) -> Self {
        ExperimentConfig { method, name: None, ..self.clone() }
    }

    /// One config per entry of `compare_methods` (or just this one).
    pub fn expand_methods(&self) -> Vec<ExperimentConfig> {
        if self.compare_methods.is_empty() {
            vec![self.clone()]
        } else {
            self.compare_methods.iter().map(|&m| self.with_method(m)).collect()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.teacher_spec.validate()?;
        self.student_spec.validate()?;
        self.margin.validate()?;
        let weights = self.loss_weights();
        weights.validate()?;
        let invalid = |msg: String| Err(Error::InvalidConfig(msg));
        for (who, spec) in [("teacher", &self.teacher_spec), ("student", &self.student_spec)] {
            if spec.input_dim() != self.dataset.input_dim {
                return invalid(format!(
                    "{who} input width {} does not match dataset input dim {}",
                    spec.input_dim(),
                    self.dataset.input_dim
                ));
            }
        }
        if self.method.uses_teacher() && self.teacher_spec.output_dim() != self.student_spec.output_dim() {
            return invalid(format!(
                "{} needs equal embedding sizes (teacher {}, student {})",
                self.method.name(),
                self.teacher_spec.output_dim(),
                self.student_spec.output_dim()
            ));
        }
        if self.method == Method::Standalone && weights.beta != 0.0 {
            return invalid("standalone training has no teacher, so beta must be 0".into());
        }
        if self.method == Method::MseKd && weights.beta == 0.0 {
            return invalid("mse_kd requires beta > 0".into());
        }
        if self.total_iterations == 0 || self.teacher_iterations() == 0 {
            return invalid("iteration counts must be positive".into());
        }
        if self.batch_size == 0 {
            return invalid("batch size must be positive".into());
        }
        if self.seeds.is_empty() {
            return invalid("at least one seed is required".into());
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return invalid(format!("momentum {} / weight decay {}", self.momentum, self.weight_decay));
        }
        if self.eval.far_targets.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return invalid(format!("FAR targets {:?} must lie in (0, 1]", self.eval.far_targets));
        }
        self.lr_schedule.schedule(self.total_iterations)?;
        self.lr_schedule.schedule(self.teacher_iterations())?;
        Ok(())
    }
}
