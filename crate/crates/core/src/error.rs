use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrlbError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("derivative order {requested} exceeds configured maximum {max}")]
    OrderOverflow { requested: usize, max: usize },

    #[error("quadrature did not converge on [{a:e}, {b:e}]: successive refinements differ by {rel_diff:e} (tolerance {tol:e})")]
    QuadratureNonconvergence { a: f64, b: f64, rel_diff: f64, tol: f64 },

    #[error("degenerate waveform: {0}")]
    DegenerateWaveform(String),

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("singular block: {0}")]
    SingularBlock(String),

    #[error("reduced information is not positive definite: a11 = {a11:e}, a22 = {a22:e}, a11*a22 - a12^2 = {det:e}")]
    NonpositiveDeterminant { a11: f64, a22: f64, det: f64 },

    #[error("finite-difference steps disagree by {rel_diff:e} (limit {limit:e})")]
    StepInstability { rel_diff: f64, limit: f64 },

    #[error("configuration error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("{failed} of {total} scenarios failed: {details}")]
    PartialRun { failed: usize, total: usize, details: String },
}

impl CrlbError {
    /// Stable machine-readable error code.
    pub fn kind(&self) -> &'static str {
        match self {
            CrlbError::InvalidParameter { .. } => "invalid-parameter",
            CrlbError::OrderOverflow { .. } => "order-overflow",
            CrlbError::QuadratureNonconvergence { .. } => "quadrature-nonconvergence",
            CrlbError::DegenerateWaveform(_) => "degenerate-waveform",
            CrlbError::SupportViolation(_) => "support-violation",
            CrlbError::SingularBlock(_) => "singular-block",
            CrlbError::NonpositiveDeterminant { .. } => "nonpositive-determinant",
            CrlbError::StepInstability { .. } => "step-instability",
            CrlbError::Config { .. } => "config",
            CrlbError::Io(_) => "io",
            CrlbError::PartialRun { .. } => "partial-run",
        }
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        CrlbError::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        CrlbError::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for CrlbError {
    fn from(e: std::io::Error) -> Self {
        CrlbError::Io(e.to_string())
    }
}

impl From<csv::Error> for CrlbError {
    fn from(e: csv::Error) -> Self {
        CrlbError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CrlbError>;
