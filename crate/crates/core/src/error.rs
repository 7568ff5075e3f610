use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    /// A model parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A load current of zero or less cannot be turned into an equivalent resistance.
    #[error("load current must be positive, got {0} A")]
    NonPositiveLoad(f64),

    /// A device below the eligibility threshold was asked to perform random access.
    #[error("device {id} is not eligible: {voltage} V < v_min {v_min} V")]
    Ineligible { id: u32, voltage: f64, v_min: f64 },

    /// The configuration file could not be parsed or validated.
    #[error("{}", format_config_error(.path, .line, .message))]
    Config {
        path: Option<PathBuf>,
        line: Option<usize>,
        message: String,
    },

    /// A harvest trace file is malformed.
    #[error("harvest trace: {0}")]
    Trace(String),

    /// A sweep cell failed; carries the cell identity.
    #[error("sweep cell (policy={policy}, N={n}, R={r}) failed: {source}")]
    Cell {
        policy: String,
        n: u32,
        r: u32,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::Config {
            path: None,
            line: None,
            message: message.into(),
        }
    }

    /// True for errors caused by user configuration rather than runtime failures.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config { .. } | Error::InvalidParameter { .. } | Error::Trace(_) => true,
            Error::Cell { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}

fn format_config_error(path: &Option<PathBuf>, line: &Option<usize>, message: &str) -> String {
    match (path, line) {
        (Some(p), Some(l)) => format!("{}:{}: {}", p.display(), l, message),
        (Some(p), None) => format!("{}: {}", p.display(), message),
        (None, Some(l)) => format!("line {}: {}", l, message),
        (None, None) => message.to_string(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
