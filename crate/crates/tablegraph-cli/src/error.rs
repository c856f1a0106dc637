//! Error-to-exit-code mapping.
//!
//! The contract: 2 for configuration problems (bad flags, bad config
//! files, incompatible checkpoints), 3 for io problems (missing or
//! malformed data files), 4 for numeric failures during training or
//! inference. Argument parsing itself exits 2 via clap.

use std::fmt;

use tablegraph::eval::EvalError;
use tablegraph::graph::GraphError;
use tablegraph::nn::checkpoint::CheckpointError;
use tablegraph::nn::NnError;
use tablegraph::synth::SynthError;
use tablegraph::train::TrainError;

#[derive(Debug)]
pub enum AppError {
    Config(String),
    Io(String),
    Numeric(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Io(_) => 3,
            AppError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "config: {m}"),
            AppError::Io(m) => write!(f, "io: {m}"),
            AppError::Numeric(m) => write!(f, "numeric: {m}"),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

impl From<SynthError> for AppError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io(_) | SynthError::Format(_) => AppError::Io(e.to_string()),
            _ => AppError::Config(e.to_string()),
        }
    }
}

impl From<NnError> for AppError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite { .. } => AppError::Numeric(e.to_string()),
            _ => AppError::Config(e.to_string()),
        }
    }
}

impl From<CheckpointError> for AppError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::DTypeMismatch { .. } => AppError::Config(e.to_string()),
            _ => AppError::Io(e.to_string()),
        }
    }
}

impl From<TrainError> for AppError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::EmptyDataset => AppError::Config(e.to_string()),
            TrainError::Nn(inner) => inner.into(),
            TrainError::Checkpoint(inner) => inner.into(),
            TrainError::Io(inner) => inner.into(),
            TrainError::Json(inner) => AppError::Io(inner.to_string()),
        }
    }
}

impl From<EvalError> for AppError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Nn(inner) => inner.into(),
            EvalError::EmptyDataset => AppError::Config(e.to_string()),
        }
    }
}

impl From<GraphError> for AppError {
    fn from(e: GraphError) -> Self {
        AppError::Config(e.to_string())
    }
}
