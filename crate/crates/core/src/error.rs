//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("frame error: {0}")]
    Frame(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("diffusion matrix outside the stencil cone: nearest representable residual {residual:.3e}")]
    ConeViolation { residual: f64 },

    #[error("monotonicity certificate failed at node {node:?}, control {control}: cone residual {residual:.3e} (stencil order {order})")]
    Monotonicity { node: [usize; 3], control: usize, residual: f64, order: usize },

    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations (tol {tol:.3e})")]
    NonConverged { residual: f64, iterations: usize, tol: f64 },

    #[error("strip too short: top-slice oscillation {top_osc:.3e} exceeds 10% of boundary oscillation {boundary_osc:.3e}")]
    StripTooShort { top_osc: f64, boundary_osc: f64 },

    #[error("tail diagnostic: {0}")]
    TailDiagnostic(String),

    #[error("ellipticity violated: {0}")]
    EllipticityWitness(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("refusing to overwrite {0}; pass force to allow")]
    WouldOverwrite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
