//! Continual learning for conditional GANs.
//!
//! A single conditional generator is trained on a sequence of class sets
//! without revisiting earlier data. After each task the generator is
//! consolidated: its parameters are snapshotted and the diagonal empirical
//! Fisher information of `log D(G(z, y), y)` is estimated. Later tasks add a
//! quadratic penalty that anchors important parameters to their snapshots.
//!
//! Module map:
//!
//! - [`tensor`]: 2-D tensors with reverse-mode differentiation
//! - [`nets`]: generator/discriminator MLPs, parameter stores
//! - [`checkpoint`]: binary checkpoint format
//! - [`objectives`]: GAN losses, Fisher estimation, the consolidation penalty
//! - [`optim`]: Adam with per-task resets
//! - [`data`]: IDX ingestion, synthetic Gaussian-mixture tasks, minibatching
//! - [`trainer`]: naive, consolidated and replay training sequences
//! - [`eval`]: sample grids, drift traces, retention metrics, classifier
//! - [`config`] and [`cli`]: run configuration files and the command line

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod nets;
pub mod objectives;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use nets::{CondGan, GanSpec, ParamVector, ParameterStore};
pub use objectives::{ConsolidationRecord, LambdaWeight};
pub use rng::RngStream;
pub use tensor::Tensor;
