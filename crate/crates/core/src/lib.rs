//! Stochastic reaction-diffusion equations on metric graphs with delayed
//! dynamic boundary conditions.

pub mod control;
pub mod delay;
pub mod error;
pub mod graph;
pub mod scalar;
pub mod sde;
pub mod semigroup;
pub mod spatial;

pub use error::{Error, Result};
pub use graph::MetricGraph;
pub use scalar::Real;

/// Double-precision aliases for the common types.
pub type FullState64 = sde::FullState<f64>;
pub type SdeModel64 = sde::SdeModel<f64>;
pub type ControlProblem64 = control::ControlProblem<f64>;
