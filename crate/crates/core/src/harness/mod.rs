//! Synthetic evaluation rig: planted classification tasks with calibrated
//! probabilistic oracles standing in for the clustifier and the hyper-class
//! heads, the routed pipeline run over them, and threshold sweeps.

mod config;
mod evaluate;
mod planted;
mod task;

pub use config::{FlopConfig, OracleShape, SimulationConfig, SplitPolicy, SyntheticTaskConfig};
pub use evaluate::{format_sig6, write_csv, EvaluationReport, Evaluator, FlopTable, Simulation};
pub use planted::planted_indicators;
pub use task::{
    calibrate, confusion_kernel, gen_synthetic_task, split, Calibration, Dataset, Sample, Split,
};

use thiserror::Error;

use crate::clustering::ClusterError;
use crate::compressor::CompressError;
use crate::router::RouterError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("sample {sample_id} is in both the calibration and the test split")]
    SplitOverlap { sample_id: u64 },
    #[error("invalid taus: {0}")]
    InvalidTaus(String),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Compress(#[from] CompressError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}
