//! Error types shared across the solver.

use thiserror::Error;

/// Errors produced by grid construction, solvers and analysis routines.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Parameter or grid invariants violated at construction time.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Shooting bracket failed to exhibit both undershoot and overshoot.
    #[error("shooting bracket not found: {0}")]
    BracketNotFound(String),

    /// ODE step control or separatrix tracking failed before the requested
    /// decay level was reached.
    #[error("radial resolution failure: {0}")]
    ResolutionError(String),

    /// Profile evaluation requested outside the sampled range with no
    /// usable tail extension.
    #[error("radial profile range exceeded: {0}")]
    ProfileRange(String),

    /// Iterative linear solve stalled before reaching its tolerance.
    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Operation requires a nontrivial positive part, got u⁺ ≡ 0.
    #[error("positive part of the field vanishes identically")]
    ZeroPositivePart,

    /// Circular mass mean has no well-defined direction on some axis.
    #[error("degenerate circular mean on axis {axis}: resultant modulus {modulus:.3e}")]
    DegenerateMean { axis: usize, modulus: f64 },

    /// Fiber equation has no positive root for these parameters.
    #[error("no Nehari fiber root: {0}")]
    NoRoot(String),

    /// Malformed field snapshot.
    #[error("snapshot format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
