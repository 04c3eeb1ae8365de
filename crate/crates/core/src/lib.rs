//! Step-size experiments for gradient descent on SPD quadratics, spectral
//! filters of artificial-time integration, and stiff implicit midpoint runs.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`, which is what the experiments use.

pub mod descent;
pub mod experiments;
pub mod filters;
pub mod linalg;
pub mod midpoint;
pub mod operators;
mod scalar;

pub use scalar::Scalar;

pub type Laplacian = operators::Laplacian2d<f64>;
pub type Objective<A = Laplacian> = operators::QuadraticObjective<f64, A>;
pub type Trace = descent::IterationTrace<f64>;
pub type Matrix = linalg::DenseMatrix<f64>;
pub type Svd = filters::SvdSystem<f64>;
pub type Filter = filters::FilterSpec<f64>;
pub type MidpointProblem<F> = midpoint::MidpointProblem<f64, F>;
pub type Trajectory = midpoint::MidpointTrajectory<f64>;
