//! Experiment orchestration: data preparation, training with checkpoint
//! reuse, evaluation and report files.

pub mod cli;
mod config;
mod experiment;
mod report;
mod train;

pub use config::{sha256_hex, DataSpec, DecodeMode, ExperimentConfig, OptimizerConfig, ProductionMode, SplitSpec};
pub use experiment::{
    checkpoint_path, prepare, run_experiment, ArchResults, ExperimentResults, Prepared, SeedOutcome, Stages,
};
pub use report::{write_combined, write_reports};
pub use train::{accuracy, derive_seed, train, EncodedPair, EpochRecord, TrainOptions, TrainRecord};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::seq2seq::{Architecture, ModelError};
use crate::wugeval::EvalError;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Corpus {
        path: PathBuf,
        #[source]
        source: CorpusError,
    },

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error(transparent)]
    Numeric(#[from] ndiff::NdError),

    #[error("{model}: loss is not finite in epoch {epoch}")]
    Diverged { model: String, epoch: usize },

    #[error("every run failed; first failure: {arch}-seed{seed}: {message}")]
    AllFailed {
        arch: Architecture,
        seed: u64,
        message: String,
    },
}

impl RunError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Io { .. } => "io",
            Self::Corpus { .. } => "data",
            Self::Model(_) => "model",
            Self::Eval(_) => "eval",
            Self::Numeric(_) => "numeric",
            Self::Diverged { .. } => "diverged",
            Self::AllFailed { .. } => "failed",
        }
    }
}
