//! SGD with momentum and coupled weight decay, plus the step learning-rate
//! schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdParams {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl SgdParams {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidConfig(format!("weight decay {} must be >= 0", self.weight_decay)));
        }
        Ok(())
    }
}

/// Momentum buffers, one per parameter tensor, zero at start.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    buffers: Vec<Vec<f64>>,
    step_count: u64,
}

impl SgdState {
    /// State for tensors of the given lengths.
    pub fn new(tensor_lens: &[usize]) -> Self {
        SgdState { buffers: tensor_lens.iter().map(|&n| vec![0.0; n]).collect(), step_count: 0 }
    }

    pub fn buffers(&self) -> &[Vec<f64>] {
        &self.buffers
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update over every tensor:
    /// `g = grad + wd * p; buf = momentum * buf + g; p -= lr * buf`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], hp: &SgdParams) -> Result<()> {
        hp.validate()?;
        if params.len() != self.buffers.len() || grads.len() != self.buffers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors, {} gradients, {} buffers",
                params.len(),
                grads.len(),
                self.buffers.len()
            )));
        }
        for (i, ((p, g), b)) in params.iter().zip(grads).zip(&self.buffers).enumerate() {
            if p.len() != b.len() || g.len() != b.len() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {i}: parameter {}, gradient {}, buffer {}",
                    p.len(),
                    g.len(),
                    b.len()
                )));
            }
        }
        for ((p, g), b) in params.iter_mut().zip(grads).zip(self.buffers.iter_mut()) {
            for ((pv, gv), bv) in p.iter_mut().zip(g.iter()).zip(b.iter_mut()) {
                let d = gv + hp.weight_decay * *pv;
                *bv = hp.momentum * *bv + d;
                *pv -= hp.lr * *bv;
            }
        }
        self.step_count += 1;
        Ok(())
    }
}

/// Piecewise-constant schedule: `initial_lr * decay_factor^k` where `k` is
/// the number of milestones at or before the iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial_lr: f64,
    pub milestones: Vec<u64>,
    pub decay_factor: f64,
}

/// Milestone positions as fractions of a run (80k/140k/210k/280k of ~300k).
pub const DEFAULT_MILESTONE_FRACTIONS: [f64; 4] = [0.27, 0.47, 0.70, 0.93];

impl LrSchedule {
    pub fn new(initial_lr: f64, milestones: Vec<u64>, decay_factor: f64) -> Result<Self> {
        let s = LrSchedule { initial_lr, milestones, decay_factor };
        s.validate()?;
        Ok(s)
    }

    /// Milestones placed at `fractions` of `total_iterations`.
    pub fn from_fractions(initial_lr: f64, total_iterations: u64, fractions: &[f64], decay_factor: f64) -> Result<Self> {
        if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::InvalidConfig(format!("milestone fraction {f} outside [0, 1]")));
        }
        let milestones = fractions.iter().map(|f| (f * total_iterations as f64).round() as u64).collect();
        LrSchedule::new(initial_lr, milestones, decay_factor)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("initial learning rate {}", self.initial_lr)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::InvalidConfig(format!("decay factor {} outside (0, 1)", self.decay_factor)));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!("milestones {:?} not strictly ascending", self.milestones)));
        }
        Ok(())
    }

    pub fn lr_at(&self, iteration: u64) -> f64 {
        let passed = self.milestones.iter().take_while(|&&m| m <= iteration).count();
        self.initial_lr * self.decay_factor.powi(passed as i32)
    }
}
