//! Crate-wide error type and result alias.

use crate::anchor::Family;

/// Errors produced by any operation in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed arguments: dimension or channel mismatches, invalid ranges,
    /// non-finite samples, bad serialized payloads.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The normal equations for a photometric fit are ill-conditioned and
    /// inconsistent, so no deterministic solution exists within the family.
    #[error(
        "degenerate {family} fit: normal-equation condition number {condition:.3e} \
         exceeds 1e12 and the system is inconsistent"
    )]
    DegenerateFit { family: Family, condition: f64 },

    /// Input data carries no usable signal (for example a zero-variance image
    /// handed to the registration objective).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A crop or mask intersection left no pixels.
    #[error("empty region: {0}")]
    EmptyRegion(String),

    /// Dataset-level problem: missing directories, unpaired files, bad manifest.
    #[error("dataset: {0}")]
    Dataset(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code the bundled CLI maps this error to: 2 for data and
    /// usage problems, 3 for numerical degeneracy (usage errors caught by the
    /// argument parser exit with 1 before any command runs).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegenerateFit { .. } | Error::DegenerateInput(_) | Error::EmptyRegion(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
