//! Stochastic layer: noise and drift catalogs, Wiener increments, integrators
//! and Monte Carlo estimation.

pub mod integrator;
pub mod model;
pub mod monte_carlo;
pub mod noise;
pub mod state;
pub mod wiener;

pub use integrator::{em_step, exp_euler_step, integrate, simulate_path, NoiseSource, RunSpec, Scheme, Stepper, Trajectory};
pub use model::SdeModel;
pub use monte_carlo::{monte_carlo, strong_order_estimate, Functional, StrongOrderReport, Summary};
pub use noise::{apply_noise, DriftSpec, NodeFn, NoiseIncrement, NoiseSpec, ScalarFn};
pub use state::FullState;
pub use wiener::{sample_increment, SeedKey, WienerIncrement};
