//! Numerical laboratory for boundary layer tails of oscillating Dirichlet
//! problems of uniformly elliptic equations in half-spaces: monotone
//! wide-stencil solvers on lateral-periodic strips, cell problems at
//! rational directions, the reduced two-dimensional problems governing
//! directional limits, effective operators and the experiment drivers.

pub mod cell;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod homogenize;
pub mod lattice;
pub mod linalg;
pub mod operators;
pub mod opspec;
pub mod reduction;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete f64 instantiations used by the CLI and most tests.
pub mod f64_types {
    pub type Vect = crate::linalg::Vect<f64>;
    pub type SymMat = crate::linalg::SymMat<f64>;
    pub type TorusFunction = crate::operators::TorusFunction<f64>;
    pub type Operator = crate::operators::Operator<f64>;
    pub type Operator2D = crate::operators::Operator2D<f64>;
    pub type Direction = crate::lattice::Direction<f64>;
    pub type TailEstimate = crate::cell::TailEstimate<f64>;
    pub type ProfileM = crate::cell::ProfileM<f64>;
    pub type CellKnobs = crate::cell::CellKnobs;
}

/// f32 instantiations (reduced precision; mainly exercised by tests).
pub mod f32_types {
    pub type Vect = crate::linalg::Vect<f32>;
    pub type SymMat = crate::linalg::SymMat<f32>;
    pub type TorusFunction = crate::operators::TorusFunction<f32>;
    pub type Operator = crate::operators::Operator<f32>;
}
