//! Adaptive knowledge distillation for embedding networks.
//!
//! A student network is trained with a margin-penalty softmax against class
//! centers taken from a frozen teacher. The centers are refined during
//! training by an exponential moving average of teacher features whose
//! momentum follows how well the student already imitates the teacher
//! (optionally weighted by how hard each sample is for the current center).
//!
//! Modules:
//! - [`numkit`]: vectors, matrices, normalization, finite-difference oracle
//! - [`losses`]: margin softmax, MSE distillation, center bank and EMA step
//! - [`models`]: small MLP embedding networks with exact backprop
//! - [`optim`]: SGD with momentum and weight decay, step schedule
//! - [`data`]: synthetic identity data, batching, verification pairs
//! - [`eval`]: verification accuracy, TAR@FAR, rank-1, center/sample scores
//! - [`harness`]: experiment configs, training runs, reports and CLI

mod container;
pub mod data;
pub mod error;
pub mod eval;
pub mod harness;
pub mod losses;
pub mod models;
pub mod numkit;
pub mod optim;

pub use error::{Error, Result};
pub use numkit::{Mat, Seed};
