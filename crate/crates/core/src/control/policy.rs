//! Policies, closed-loop simulation, Monte Carlo cost estimates and the
//! common-random-number tournament.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sde::integrator::{integrate, step_count, NoiseSource, RunSpec, Stepper};
use crate::sde::monte_carlo::{summarize, Summary};
use crate::sde::{FullState, SdeModel};

use super::problem::{hamiltonian, ControlProblem};

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind<T: Real> {
    /// Open-loop constant control, projected onto the box.
    Constant(DVector<T>),
    /// Hamiltonian argmin with the linear costate proxy `Y = M X`.
    Feedback(DMatrix<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T: Real> {
    pub label: String,
    pub kind: PolicyKind<T>,
}

impl<T: Real> Policy<T> {
    pub fn constant(label: impl Into<String>, z: DVector<T>) -> Self {
        Self { label: label.into(), kind: PolicyKind::Constant(z) }
    }

    pub fn feedback(label: impl Into<String>, proxy: DMatrix<T>) -> Self {
        Self { label: label.into(), kind: PolicyKind::Feedback(proxy) }
    }

    fn validate(&self, prob: &ControlProblem<T>) -> Result<()> {
        let (n, dim) = (prob.n_controls(), prob.r.nrows());
        match &self.kind {
            PolicyKind::Constant(z) if z.len() != n => {
                Err(Error::ShapeMismatch(format!("policy '{}': {} controls for {n} nodes", self.label, z.len())))
            }
            PolicyKind::Feedback(m) if m.shape() != (dim, dim) => Err(Error::ShapeMismatch(format!(
                "policy '{}': costate proxy is {}x{}, state dimension is {dim}",
                self.label,
                m.nrows(),
                m.ncols()
            ))),
            _ => Ok(()),
        }
    }

    /// Control at state vector `x`; always inside the box.
    pub fn control(&self, prob: &ControlProblem<T>, x: &DVector<T>) -> Result<DVector<T>> {
        match &self.kind {
            PolicyKind::Constant(z) => Ok(prob.project(z)),
            PolicyKind::Feedback(m) => Ok(hamiltonian(prob, x, &(m * x))?.z_star),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopPath<T: Real> {
    pub times: Vec<T>,
    pub controls: Vec<DVector<T>>,
    /// Recorded states (every `stride`-th step and the final one).
    pub states: Vec<(T, FullState<T>)>,
    /// Trapezoid running cost plus terminal cost.
    pub cost: T,
}

/// Integrates one controlled path and accumulates its realized cost.
///
/// Control is held constant over each step (left point) and enters the node
/// rows as `g~ z dt`.
pub fn simulate_closed_loop<T: Real>(
    prob: &ControlProblem<T>,
    model: &SdeModel<T>,
    policy: &Policy<T>,
    run: &RunSpec<T>,
    x0: &FullState<T>,
    master_seed: u64,
    path: u64,
) -> Result<ClosedLoopPath<T>> {
    let stepper = Stepper::new(model, run.scheme, run.dt)?;
    closed_loop_with(prob, &stepper, policy, run, x0, master_seed, path, true)
}

#[allow(clippy::too_many_arguments)]
fn closed_loop_with<T: Real>(
    prob: &ControlProblem<T>,
    stepper: &Stepper<'_, T>,
    policy: &Policy<T>,
    run: &RunSpec<T>,
    x0: &FullState<T>,
    master_seed: u64,
    path: u64,
    record: bool,
) -> Result<ClosedLoopPath<T>> {
    policy.validate(prob)?;
    let layout = stepper.model().layout();
    let n_steps = step_count(run.t_final, run.dt)?;
    let stride = run.stride.max(1);
    let mut out = ClosedLoopPath { times: Vec::new(), controls: Vec::new(), states: Vec::new(), cost: T::zero() };
    let mut running = Vec::with_capacity(n_steps + 1);
    let mut last_vec = DVector::zeros(0);
    let source = NoiseSource::new(master_seed, run.dt);
    integrate(
        stepper,
        x0,
        n_steps,
        &source,
        path,
        |_, x| {
            let v = x.to_vector(&layout);
            let z = policy.control(prob, &v)?;
            running.push(prob.running_cost(&v, &z));
            last_vec = v;
            Ok(Some(z))
        },
        |k, t, x, z| {
            if record {
                out.times.push(t);
                out.controls.push(z.cloned().unwrap_or_default());
                if k % stride == 0 || k == n_steps {
                    out.states.push((t, x.clone()));
                }
            }
        },
    )?;
    let half = T::lit(0.5);
    let inner = running.iter().fold(T::zero(), |acc, &v| acc + v);
    let ends = if running.len() > 1 { (running[0] + running[running.len() - 1]) * half } else { running[0] };
    out.cost = (inner - ends) * run.dt + prob.terminal_cost(&last_vec);
    Ok(out)
}

/// Monte Carlo estimate of the cost over paths `1..=n_paths`.
pub fn cost_estimate<T: Real>(
    prob: &ControlProblem<T>,
    model: &SdeModel<T>,
    policy: &Policy<T>,
    run: &RunSpec<T>,
    x0: &FullState<T>,
    n_paths: usize,
    master_seed: u64,
) -> Result<Summary<T>> {
    if n_paths < 2 {
        return Err(Error::InvalidArgument(format!("cost estimate needs at least 2 paths, got {n_paths}")));
    }
    let stepper = Stepper::new(model, run.scheme, run.dt)?;
    let costs: Vec<T> = (1..=n_paths as u64)
        .into_par_iter()
        .map(|path| Ok(closed_loop_with(prob, &stepper, policy, run, x0, master_seed, path, false)?.cost))
        .collect::<Result<_>>()?;
    Ok(summarize(policy.label.clone(), &costs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TournamentEntry<T: Real> {
    pub label: String,
    pub cost: Summary<T>,
    /// Competition rank by mean cost: equal means share a rank.
    pub rank: usize,
    /// Labels of the other policies whose 95% intervals overlap this one.
    pub overlaps: Vec<String>,
}

/// Cost of every policy on the same Brownian paths, in input order.
pub fn policy_tournament<T: Real>(
    prob: &ControlProblem<T>,
    model: &SdeModel<T>,
    policies: &[Policy<T>],
    run: &RunSpec<T>,
    x0: &FullState<T>,
    n_paths: usize,
    master_seed: u64,
) -> Result<Vec<TournamentEntry<T>>> {
    if policies.len() < 2 {
        return Err(Error::InvalidArgument(format!("a tournament needs at least 2 policies, got {}", policies.len())));
    }
    let costs = policies
        .iter()
        .map(|p| cost_estimate(prob, model, p, run, x0, n_paths, master_seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(costs
        .iter()
        .zip(policies)
        .map(|(c, p)| {
            let rank = 1 + costs.iter().filter(|o| o.mean < c.mean).count();
            let overlaps = costs
                .iter()
                .zip(policies)
                .filter(|(o, q)| !std::ptr::eq(*q, p) && o.ci_lo <= c.ci_hi && c.ci_lo <= o.ci_hi)
                .map(|(_, q)| q.label.clone())
                .collect();
            TournamentEntry { label: p.label.clone(), cost: c.clone(), rank, overlaps }
        })
        .collect())
}
