//! Error type shared by every module in the crate.

use crate::control::SurjectivityReport;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong, from bad indices to stalled solvers.
///
/// The CLI maps these onto process exit codes: configuration and input
/// problems exit with 2, solver failures (non-convergence, blow-up, rank
/// deficiency) with 3, and admissibility violations with 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An index or evaluation point fell outside its allowed range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs violate a structural precondition (non-Dirichlet field,
    /// mismatched time grids, incompatible deformation path).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A deformation exceeded the admissible box `|λ| < 1/2` (or, for the
    /// wave equation, the slope bound `|∂ₜλ| < 1`).
    #[error("inadmissible deformation: {0}")]
    Admissibility(String),

    /// A Jacobian with (numerically) vanishing determinant.
    #[error("singular Jacobian: |det J| = {det:e}")]
    SingularJacobian { det: f64 },

    /// A configuration value is unusable (bad JSON, failed schema check,
    /// time step violating the CFL bound, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// The state left the representable range (NaN/Inf) during integration.
    #[error("state diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    /// Input time series too coarse for a reliable time derivative.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// A vector or matrix had the wrong size for the operation.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// The iterative solver exhausted its budget without meeting tolerance.
    #[error("no convergence after {iterations} iterations (last residual {last:e})", last = .residual_history.last().copied().unwrap_or(f64::NAN))]
    NonConvergence {
        iterations: usize,
        residual_history: Vec<f64>,
    },

    /// The control map lost rank at an iterate; the report explains why.
    #[error("control map is rank deficient: σ_min = {sigma_min:e}", sigma_min = .report.sigma_min)]
    Deficient { report: Box<SurjectivityReport> },

    /// Forwarded I/O failure from the CLI layer.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Forwarded JSON failure from the CLI layer.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code the CLI assigns to this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Admissibility(_) => 4,
            Error::NonConvergence { .. } | Error::Divergence { .. } | Error::Deficient { .. } => 3,
            _ => 2,
        }
    }
}
