use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A row in an input file could not be parsed.
    #[error("{}:{line}: {message}", source_name.display())]
    Parse {
        source_name: PathBuf,
        line: u64,
        message: String,
    },

    /// A symbol lacks price or valuation data where it is needed.
    #[error("coverage: {0}")]
    Coverage(String),

    /// A value lies outside the domain of the operation (non-positive price,
    /// non-PSD covariance, malformed weights).
    #[error("domain: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("empty portfolio: {0}")]
    EmptyPortfolio(String),

    #[error("empty universe: {0}")]
    EmptyUniverse(String),

    /// A vault type's running balance dropped below zero during replay.
    #[error(
        "negative balance for {vault_type} after block {block_number} (line {line}): {balance}"
    )]
    NegativeBalance {
        vault_type: String,
        block_number: u64,
        line: u64,
        balance: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used in structured CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Coverage(_) => "coverage",
            Error::Domain(_) => "domain",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Infeasible(_) => "infeasible",
            Error::UndefinedRatio(_) => "undefined_ratio",
            Error::EmptyPortfolio(_) => "empty_portfolio",
            Error::EmptyUniverse(_) => "empty_universe",
            Error::NegativeBalance { .. } => "negative_balance",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(source_name: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }
}
