//! Path-parallel Monte Carlo statistics and strong-order estimation.
//!
//! Paths run on the rayon pool but results are collected in path order and
//! reduced by a fixed pairwise tree, so outputs do not depend on scheduling.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::weighted_dot;

use super::integrator::{integrate, step_count, NoiseSource, RunSpec, Scheme, Stepper};
use super::model::SdeModel;
use super::state::FullState;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Scalar functional of the terminal state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    /// `d^alpha(T)` (0-based vertex).
    TerminalNode(usize),
    /// Midpoint value of edge `j` at `T` (0-based edge).
    TerminalEdgeMid(usize),
    /// `h sum(u) + sum(d)` at `T`.
    TerminalMass,
    /// Squared weighted `(u, d)` norm at `T`.
    TerminalNormSq,
}

impl Functional {
    pub fn name(&self) -> String {
        match self {
            Functional::TerminalNode(a) => format!("d{}_T", a + 1),
            Functional::TerminalEdgeMid(j) => format!("u{}_mid_T", j + 1),
            Functional::TerminalMass => "mass_T".into(),
            Functional::TerminalNormSq => "norm_sq_T".into(),
        }
    }

    pub fn eval<T: Real>(&self, model: &SdeModel<T>, x: &FullState<T>) -> T {
        let layout = model.layout();
        match *self {
            Functional::TerminalNode(a) => x.d[a],
            Functional::TerminalEdgeMid(j) => edge_midpoint(x, j),
            Functional::TerminalMass => x.total_mass(&layout),
            Functional::TerminalNormSq => x.ud_norm_squared(&layout),
        }
    }
}

/// Value at `x = 1/2`, averaging the two central samples on even grids.
pub fn edge_midpoint<T: Real>(x: &FullState<T>, edge: usize) -> T {
    let n_x = x.u.ncols();
    if n_x % 2 == 1 {
        x.u[(edge, n_x / 2)]
    } else {
        (x.u[(edge, n_x / 2 - 1)] + x.u[(edge, n_x / 2)]) * T::lit(0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary<T: Real> {
    pub name: String,
    pub n: usize,
    pub mean: T,
    /// Unbiased sample variance.
    pub var: T,
    pub ci_lo: T,
    pub ci_hi: T,
}

/// Sum by a fixed balanced binary tree.
pub fn pairwise_sum<T: Real>(values: &[T]) -> T {
    match values.len() {
        0 => T::zero(),
        1 => values[0],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// Mean, sample variance and normal-approximation 95% interval.
pub fn summarize<T: Real>(name: impl Into<String>, values: &[T]) -> Summary<T> {
    let n = values.len();
    let nt = T::from_count(n.max(1));
    let mean = pairwise_sum(values) / nt;
    let sq: Vec<T> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let var = if n > 1 { pairwise_sum(&sq) / T::from_count(n - 1) } else { T::zero() };
    let half = T::lit(Z95) * (var / nt).sqrt();
    Summary { name: name.into(), n, mean, var, ci_lo: mean - half, ci_hi: mean + half }
}

/// Terminal states of paths `1..=n_paths`, in path order.
pub fn terminal_states<T: Real>(
    model: &SdeModel<T>,
    run: &RunSpec<T>,
    x0: &FullState<T>,
    n_paths: usize,
    master_seed: u64,
) -> Result<Vec<FullState<T>>> {
    let stepper = Stepper::new(model, run.scheme, run.dt)?;
    let n_steps = step_count(run.t_final, run.dt)?;
    let source = NoiseSource::new(master_seed, run.dt);
    (1..=n_paths as u64)
        .into_par_iter()
        .map(|path| integrate(&stepper, x0, n_steps, &source, path, |_, _| Ok(None), |_, _, _, _| {}))
        .collect()
}

/// Monte Carlo statistics of terminal functionals over paths `1..=n_paths`.
pub fn monte_carlo<T: Real>(
    model: &SdeModel<T>,
    run: &RunSpec<T>,
    x0: &FullState<T>,
    n_paths: usize,
    master_seed: u64,
    functionals: &[Functional],
) -> Result<Vec<Summary<T>>> {
    if n_paths < 2 {
        return Err(Error::InvalidArgument(format!("monte carlo needs at least 2 paths, got {n_paths}")));
    }
    let finals = terminal_states(model, run, x0, n_paths, master_seed)?;
    Ok(functionals
        .iter()
        .map(|f| {
            let values: Vec<T> = finals.iter().map(|x| f.eval(model, x)).collect();
            summarize(f.name(), &values)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongOrderReport<T: Real> {
    /// Step sizes compared against the reference (the last entry of the input list).
    pub dts: Vec<T>,
    /// `E |X_dt(T) - X_ref(T)|` in the weighted `(u, d)` norm.
    pub errors: Vec<T>,
    pub slope: T,
    pub reference_dt: T,
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope<T: Real>(x: &[T], y: &[T]) -> T {
    let lx: Vec<f64> = x.iter().map(|v| v.as_f64().ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.as_f64().ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    T::lit(sxy / sxx)
}

fn ud_distance<T: Real>(model: &SdeModel<T>, a: &FullState<T>, b: &FullState<T>) -> T {
    let layout = model.layout();
    let w = layout.grid.weights::<T>();
    let diff = a.ud_vector(&layout) - b.ud_vector(&layout);
    weighted_dot(&w, &diff, &diff).sqrt()
}

fn coupled_sources<T: Real>(dt_list: &[T], master_seed: u64) -> Result<(T, Vec<NoiseSource<T>>)> {
    if dt_list.len() < 3 {
        return Err(Error::InvalidArgument("need at least two step sizes plus a reference".into()));
    }
    let dt_ref = *dt_list.last().expect("checked non-empty");
    for pair in dt_list.windows(2) {
        if !(pair[1] < pair[0]) {
            return Err(Error::InvalidArgument("dt_list must be strictly decreasing".into()));
        }
    }
    let sources = dt_list
        .iter()
        .map(|&dt| {
            let factor = step_count(dt, dt_ref)?;
            Ok(NoiseSource { master_seed, dt_fine: dt_ref, factor })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((dt_ref, sources))
}

/// Strong error against the finest step on shared Brownian paths and the
/// log-log regression slope over the remaining step sizes.
pub fn strong_order_estimate<T: Real>(
    model: &SdeModel<T>,
    x0: &FullState<T>,
    scheme: Scheme,
    t_final: T,
    dt_list: &[T],
    n_paths: usize,
    master_seed: u64,
) -> Result<StrongOrderReport<T>> {
    let (dt_ref, sources) = coupled_sources(dt_list, master_seed)?;
    let steppers = dt_list.iter().map(|&dt| Stepper::new(model, scheme, dt)).collect::<Result<Vec<_>>>()?;
    let counts = dt_list.iter().map(|&dt| step_count(t_final, dt)).collect::<Result<Vec<_>>>()?;
    let last = dt_list.len() - 1;
    let per_path: Vec<Vec<T>> = (1..=n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let run = |i: usize| integrate(&steppers[i], x0, counts[i], &sources[i], path, |_, _| Ok(None), |_, _, _, _| {});
            let reference = run(last)?;
            (0..last).map(|i| Ok(ud_distance(model, &run(i)?, &reference))).collect()
        })
        .collect::<Result<_>>()?;
    let errors: Vec<T> = (0..last)
        .map(|i| {
            let col: Vec<T> = per_path.iter().map(|p| p[i]).collect();
            pairwise_sum(&col) / T::from_count(n_paths)
        })
        .collect();
    let dts = dt_list[..last].to_vec();
    let slope = log_log_slope(&dts, &errors);
    Ok(StrongOrderReport { dts, errors, slope, reference_dt: dt_ref })
}

/// Mean weighted distance between exponential Euler and Euler-Maruyama terminal
/// states driven by the same increments, for each step size.
pub fn paired_scheme_difference<T: Real>(
    model: &SdeModel<T>,
    x0: &FullState<T>,
    t_final: T,
    dt_list: &[T],
    n_paths: usize,
    master_seed: u64,
) -> Result<Vec<T>> {
    dt_list
        .iter()
        .map(|&dt| {
            let em = Stepper::new(model, Scheme::EulerMaruyama, dt)?;
            let exp = Stepper::new(model, Scheme::ExponentialEuler, dt)?;
            let n = step_count(t_final, dt)?;
            let source = NoiseSource::new(master_seed, dt);
            let gaps: Vec<T> = (1..=n_paths as u64)
                .into_par_iter()
                .map(|path| {
                    let a = integrate(&em, x0, n, &source, path, |_, _| Ok(None), |_, _, _, _| {})?;
                    let b = integrate(&exp, x0, n, &source, path, |_, _| Ok(None), |_, _, _, _| {})?;
                    Ok(ud_distance(model, &a, &b))
                })
                .collect::<Result<_>>()?;
            Ok(pairwise_sum(&gaps) / T::from_count(n_paths))
        })
        .collect()
}

/// Terminal `(u, d)` vector, handy for comparing against deterministic references.
pub fn terminal_ud<T: Real>(model: &SdeModel<T>, x: &FullState<T>) -> DVector<T> {
    x.ud_vector(&model.layout())
}
