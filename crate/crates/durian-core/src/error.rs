//! Shared error type for the whole crate.
//!
//! Numerical routines, batch bookkeeping, and file handling all funnel into
//! [`DurianError`] so that callers (and the CLI exit-code mapping) can match on
//! one enum instead of juggling per-module error types.

use std::path::PathBuf;

/// Everything that can go wrong across the crate.
#[derive(Debug, thiserror::Error)]
pub enum DurianError {
    /// Input is structurally valid but mathematically unusable
    /// (e.g. a single-row feature matrix cannot be centered).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Input violates a structural precondition (shape mismatch, non-finite
    /// value, out-of-range argument).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The iterative eigensolver ran out of sweeps before the off-diagonal
    /// mass dropped below tolerance.
    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off:.3e})")]
    NoConvergence { sweeps: usize, off: f64 },

    /// A spectrum with no positive eigenvalues has no defined entropy.
    #[error("degenerate spectrum: no positive eigenvalues")]
    DegenerateSpectrum,

    /// An operation over a collection received nothing to work with.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A configuration value (file, flag, or derived) is out of its domain.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A difficulty group ended up without enough pooled rewards to normalize.
    #[error("degenerate group: {0}")]
    DegenerateGroup(String),

    /// A group assignment does not line up with the batch it claims to label.
    #[error("inconsistent group assignment: {0}")]
    InconsistentAssignment(String),

    /// A response record is unusable (e.g. zero tokens where tokens are required).
    #[error("degenerate response: {0}")]
    DegenerateResponse(String),

    /// Filesystem trouble, tagged with the offending path.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file parsed but its contents are malformed, tagged with path and line.
    #[error("{}:{line}: {msg}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },
}

impl DurianError {
    /// Convenience for wrapping I/O errors with their path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DurianError::Io {
            path: path.into(),
            source,
        }
    }

    /// Convenience for malformed-file errors.
    pub fn malformed(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        DurianError::Malformed {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

/// Crate-wide result alias.
pub type DurianResult<T> = Result<T, DurianError>;
