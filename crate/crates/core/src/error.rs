use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system configuration: {0}")]
    InvalidSystem(String),

    #[error("overhead of {overhead_cu} c.u. does not fit in a {block_cu} c.u. block")]
    OverheadExceedsBlock { overhead_cu: f64, block_cu: f64 },

    #[error("QoS targets unreachable by zero forcing: needs {required_w:.4e} W, budget {budget_w:.4e} W")]
    Infeasible { required_w: f64, budget_w: f64 },

    #[error("channel Gram matrix is rank deficient (condition number {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("interior-point solver stalled after {iterations} Newton steps (decrement {decrement:.3e}, gap {gap:.3e})")]
    SolverStalled { iterations: usize, decrement: f64, gap: f64 },

    #[error("every examined antenna subset was infeasible")]
    AllSubsetsInfeasible,

    #[error("training diverged: loss became {0}")]
    DivergenceDetected(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("a trained model is required (pass --model or set experiment.model_path)")]
    MissingModel,

    #[error("{path}:{line}: {key}: {message}")]
    ConfigInvalid {
        path: String,
        line: usize,
        key: String,
        message: String,
    },

    #[error("malformed {what} file {path}: {message}")]
    Format {
        what: &'static str,
        path: PathBuf,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
