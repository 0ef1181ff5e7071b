//! Stochastic optimal control: Hamiltonian minimization, costate proxies,
//! closed-loop simulation and policy comparison.

pub mod policy;
pub mod problem;
pub mod riccati;

pub use policy::{cost_estimate, policy_tournament, simulate_closed_loop, ClosedLoopPath, Policy, PolicyKind, TournamentEntry};
pub use problem::{hamiltonian, hamiltonian_objective, ControlPenalty, ControlProblem, CostWeights, HamiltonianValue};
pub use riccati::{care_residual, matrix_sign, riccati_proxy, solve_care};
