use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("configuration parse error: {0}")]
    ConfigParse(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("operation requires a homogeneous dipole set ({0} differs between wells)")]
    Inhomogeneous(&'static str),

    #[error("operation requires N = {expected} dipoles, got {got}")]
    WellCount { expected: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("maximum step count {0} exceeded")]
    TooManySteps(usize),

    #[error("non-finite state at t = {0:.6e}")]
    NonFinite(f64),

    #[error("Hilbert space dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("truncation overflow: top photon level population {population:.3e} exceeds {limit:.1e}")]
    TruncationOverflow { population: f64, limit: f64 },

    #[error("density matrix invariant violated at t = {t:.6e}: {what}")]
    StateInvariant { t: f64, what: String },

    #[error("trajectory too short: ends at {end:.4} ps, need at least {needed:.4} ps")]
    TrajectoryTooShort { end: f64, needed: f64 },

    #[error("sampling too coarse: Nyquist {nyquist:.3} rad/ps below required {required:.3} rad/ps")]
    Aliasing { nyquist: f64, required: f64 },

    #[error("frequency grids differ between run and baseline")]
    GridMismatch,

    #[error("insufficient points for fit: need {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("sweep axis mismatch: {0}")]
    AxisMismatch(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("sweep point {index} ({label}) failed: {source}")]
    SweepPoint {
        index: usize,
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Broad category used for process exit codes and FFI status codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter { .. }
            | Error::ConfigParse(_)
            | Error::UnknownKey(_)
            | Error::Inhomogeneous(_)
            | Error::WellCount { .. }
            | Error::LengthMismatch { .. }
            | Error::DimensionCap { .. }
            | Error::UnknownPreset(_)
            | Error::AxisMismatch(_)
            | Error::GridMismatch
            | Error::Json(_) => ErrorKind::Config,
            Error::StepSizeUnderflow { .. }
            | Error::TooManySteps(_)
            | Error::NonFinite(_)
            | Error::TrajectoryTooShort { .. }
            | Error::Aliasing { .. }
            | Error::InsufficientPoints { .. }
            | Error::Io { .. } => ErrorKind::Solver,
            Error::TruncationOverflow { .. } | Error::StateInvariant { .. } => ErrorKind::Validation,
            Error::SweepPoint { source, .. } => source.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Solver,
    Validation,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Solver => 3,
            ErrorKind::Validation => 4,
        }
    }
}
