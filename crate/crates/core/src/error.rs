use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("duplicate observation index ({row}, {col})")]
    DuplicateIndex { row: usize, col: usize },

    #[error("index ({row}, {col}) out of range for {rows}x{cols} grid")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("infeasible subsample chain: c*L = {removed} but only {available} observations")]
    InfeasibleChain { removed: usize, available: usize },

    #[error("degenerate statistic: {0}")]
    DegenerateStatistic(String),

    #[error("solver failed at chain step {step}: {source}")]
    ChainStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("source placement failed: {0}")]
    Placement(String),

    #[error("{path}:{line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable short name for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::DuplicateIndex { .. } => "duplicate_index",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::NumericalFailure(_) => "numerical_failure",
            Error::Input(_) => "input",
            Error::Parameter(_) => "parameter",
            Error::InfeasibleChain { .. } => "infeasible_chain",
            Error::DegenerateStatistic(_) => "degenerate_statistic",
            Error::ChainStep { .. } => "chain_step",
            Error::Placement(_) => "placement",
            Error::Config { .. } => "config",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
