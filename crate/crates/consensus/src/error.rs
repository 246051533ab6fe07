//! Error type shared across the crate.

use thiserror::Error;

/// Unified error for synthesis, graph validation, simulation, and metrics.
#[derive(Debug, Error)]
pub enum Error {
    /// `(A, B)` fails the Hautus stabilizability test.
    #[error("(A, B) is not stabilizable")]
    NotStabilizable,

    /// `(A + (ε/2)I, B)` fails the Hautus controllability test.
    #[error("(A, B) is not controllable")]
    NotControllable,

    /// An iterative solver failed to produce a usable result.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A solved candidate failed its a-posteriori feasibility check.
    #[error("feasibility post-check failed: margin = {margin:.6e}")]
    FeasibilityCheckFailed { margin: f64 },

    /// P is too ill-conditioned to invert for the feedback gain.
    #[error("P is numerically singular: condition number {cond:.3e} > 1e12")]
    SingularP { cond: f64 },

    /// The design inequality does not hold for the supplied P.
    #[error("P is infeasible for the design inequality: margin = {margin:.6e}")]
    InfeasibleP { margin: f64 },

    /// A matrix expected to be symmetric is not.
    #[error("matrix is not symmetric: max asymmetry {asym:.3e}")]
    NotSymmetric { asym: f64 },

    /// Leaderless gains need algebraic connectivity λ₂ > 0.
    #[error("graph is disconnected (λ₂ = 0)")]
    DisconnectedGraph,

    /// A graph or scenario description is structurally invalid.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A bound formula's precondition fails (for example ϱ ≥ α for D3).
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    /// The integrated state left the trust region `‖state‖ ≤ 1e9`.
    #[error("divergence detected at t = {t:.6}: state norm {norm:.3e}")]
    DivergenceDetected { t: f64, norm: f64 },

    /// A declared runtime bound was exceeded during simulation.
    #[error("assumption violated at t = {t:.6} (agent {agent}): {what}")]
    AssumptionViolated { t: f64, agent: usize, what: String },

    /// File or serialization failure surfaced by the I/O helpers.
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
