//! Experiment harness: run configuration, training loop, evaluation,
//! multi-seed ablation and the teleoperation server.

pub mod ablation;
mod config;
pub mod eval;
pub mod metrics;
pub mod teleop;
mod train;

pub use ablation::{ablation, AblationReport, MethodSummary, SeedResult};
pub use config::{Method, RunConfig};
pub use eval::{evaluate_checkpoint, evaluate_controller, evaluate_policy, Controller, EpisodeSummary, EvalResult, Greedy};
pub use metrics::{read_metrics, IterationMetrics};
pub use train::{load_demos, pretrain_only, run_files, train, train_with_demos, RunReport, TrainOutcome};

use crate::bc::BcError;
use crate::contrastive::ClError;
use crate::demo::DemoError;
use crate::env::EnvError;
use crate::nn::NnError;
use crate::sac::SacError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("metrics file: {0}")]
    Metrics(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error(transparent)]
    Bc(#[from] BcError),
    #[error(transparent)]
    Contrastive(#[from] ClError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Teleop(#[from] teleop::TeleopError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
