//! Euler-Maruyama and exponential (mild) Euler steps with an exact segment shift.

use nalgebra::{DMatrix, DVector};

use crate::delay::grid_steps;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::semigroup::expm_matrix;

use super::model::SdeModel;
use super::noise::apply_noise;
use super::state::FullState;
use super::wiener::{sample_increment, SeedKey, WienerIncrement};

/// Entries beyond this magnitude abort the path.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    EulerMaruyama,
    ExponentialEuler,
}

/// Fixed-step integrator for one model, step size and scheme.
///
/// Only the `(u, d)` rows are advanced by the scheme; the history is moved by
/// the exact shift, so the `theta = 0` slot always equals `d`.
#[derive(Debug, Clone)]
pub struct Stepper<'a, T: Real> {
    model: &'a SdeModel<T>,
    scheme: Scheme,
    dt: T,
    /// `(u, d)` rows of `A` (Euler-Maruyama) or of `e^{dt A}` (exponential Euler).
    rows: DMatrix<T>,
}

impl<'a, T: Real> Stepper<'a, T> {
    pub fn new(model: &'a SdeModel<T>, scheme: Scheme, dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {}", dt.as_f64())));
        }
        grid_steps(dt, model.dtheta())?;
        let da = model.layout().dim_a();
        let rows = match scheme {
            Scheme::EulerMaruyama => model.generator.full.rows(0, da).into_owned(),
            Scheme::ExponentialEuler => {
                let prop = expm_matrix(&(&model.generator.full * dt))?;
                prop.rows(0, da).into_owned()
            }
        };
        Ok(Self { model, scheme, dt, rows })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn model(&self) -> &SdeModel<T> {
        self.model
    }

    /// Advances `x` from `t` to `t + dt`. `control` is the node control `z`,
    /// entering as `G R z dt`, i.e. `g~_alpha z_alpha dt` on node `alpha`.
    pub fn step(
        &self,
        x: &FullState<T>,
        t: T,
        inc: &WienerIncrement<T>,
        control: Option<&DVector<T>>,
    ) -> Result<FullState<T>> {
        let model = self.model;
        let layout = model.layout();
        let grid = layout.grid;
        let da = layout.dim_a();
        let y = x.to_vector(&layout);
        let phi = model.phi(x)?;

        let mut forcing = DVector::zeros(da);
        if !model.drift.is_zero() {
            let f = model.drift.eval(&x.u);
            forcing += grid.pack(&f, &DVector::zeros(grid.n_vertices)) * self.dt;
        }
        if !model.noise.is_zero() {
            let noise = apply_noise(&model.noise, x, &phi, inc)?;
            forcing += grid.pack(&noise.du, &noise.dd);
        }
        if let Some(z) = control {
            if z.len() != grid.n_vertices {
                return Err(Error::ShapeMismatch(format!("control of length {} for {} nodes", z.len(), grid.n_vertices)));
            }
            let coeff = model.noise.node_coefficients(&x.d, &phi);
            for alpha in 0..grid.n_vertices {
                forcing[grid.node_row(alpha)] += coeff[alpha] * z[alpha] * self.dt;
            }
        }

        let ud_new = match self.scheme {
            Scheme::EulerMaruyama => y.rows(0, da) + &self.rows * &y * self.dt + forcing,
            Scheme::ExponentialEuler => {
                let mut v = y;
                let mut head = v.rows_mut(0, da);
                head += forcing;
                &self.rows * v
            }
        };

        let t_new = t + self.dt;
        let worst = ud_new.iter().fold(T::zero(), |acc, &v| if v.is_finite() { acc.max(v.abs()) } else { T::max_value().unwrap_or(acc) });
        if !(worst.as_f64() <= BLOWUP_THRESHOLD) {
            return Err(Error::BlowupDetected { t: t_new.as_f64(), value: worst.as_f64() });
        }
        let (u, d) = grid.unpack(&model.graph, &ud_new);
        let mut segment = x.segment.clone();
        segment.push(&d, self.dt)?;
        Ok(FullState { u, d, segment })
    }
}

/// One Euler-Maruyama step `X + dt (A X + F) + G dW`.
pub fn em_step<T: Real>(
    model: &SdeModel<T>,
    x: &FullState<T>,
    t: T,
    dt: T,
    inc: &WienerIncrement<T>,
) -> Result<FullState<T>> {
    Stepper::new(model, Scheme::EulerMaruyama, dt)?.step(x, t, inc, None)
}

/// One exponential Euler step `e^{dt A} (X + dt F + G dW)`.
///
/// Builds the propagator on every call; use a [`Stepper`] to reuse it over a run.
pub fn exp_euler_step<T: Real>(
    model: &SdeModel<T>,
    x: &FullState<T>,
    t: T,
    dt: T,
    inc: &WienerIncrement<T>,
) -> Result<FullState<T>> {
    Stepper::new(model, Scheme::ExponentialEuler, dt)?.step(x, t, inc, None)
}

/// Supplies Wiener increments for a path, optionally summing `factor` fine
/// steps of size `dt_fine` into each coarse step (coupled refinement).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSource<T: Real> {
    pub master_seed: u64,
    pub dt_fine: T,
    pub factor: usize,
}

impl<T: Real> NoiseSource<T> {
    pub fn new(master_seed: u64, dt: T) -> Self {
        Self { master_seed, dt_fine: dt, factor: 1 }
    }

    pub fn increment(&self, model: &SdeModel<T>, path: u64, step: usize) -> WienerIncrement<T> {
        let grid = model.layout().grid;
        let (m, n_x, n) = (grid.n_edges, grid.n_x, grid.n_vertices);
        if model.noise.is_zero() {
            return WienerIncrement::zeros(m, n_x, n);
        }
        let h = model.h();
        let key = |s: usize| SeedKey { master_seed: self.master_seed, path, step: s as u64 };
        let mut inc = sample_increment(key(step * self.factor), m, n_x, n, self.dt_fine, h);
        for i in 1..self.factor {
            inc.add_assign(&sample_increment(key(step * self.factor + i), m, n_x, n, self.dt_fine, h));
        }
        inc
    }
}

/// Number of steps of size `dt` in `[0, t_final]`.
pub fn step_count<T: Real>(t_final: T, dt: T) -> Result<usize> {
    if !(t_final >= T::zero()) {
        return Err(Error::InvalidArgument(format!("final time must be >= 0, got {}", t_final.as_f64())));
    }
    let ratio = (t_final / dt).as_f64();
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "final time {} is not a multiple of dt = {}",
            t_final.as_f64(),
            dt.as_f64()
        )));
    }
    Ok(n as usize)
}

/// Runs one path over `n_steps`, calling `control(t_k, X_k)` and then
/// `observe(k, t_k, X_k, z_k)` at every grid time including the last.
pub fn integrate<T, C, O>(
    stepper: &Stepper<'_, T>,
    x0: &FullState<T>,
    n_steps: usize,
    source: &NoiseSource<T>,
    path: u64,
    mut control: C,
    mut observe: O,
) -> Result<FullState<T>>
where
    T: Real,
    C: FnMut(T, &FullState<T>) -> Result<Option<DVector<T>>>,
    O: FnMut(usize, T, &FullState<T>, Option<&DVector<T>>),
{
    let mut x = x0.clone();
    for k in 0..=n_steps {
        let t = stepper.dt() * T::from_count(k);
        let z = control(t, &x)?;
        observe(k, t, &x, z.as_ref());
        if k < n_steps {
            let inc = source.increment(stepper.model(), path, k);
            x = stepper.step(&x, t, &inc, z.as_ref())?;
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<FullState<T>>,
}

/// Fixed-step run description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec<T: Real> {
    pub dt: T,
    pub t_final: T,
    pub scheme: Scheme,
    /// Record every `stride`-th step (the final time is always recorded).
    pub stride: usize,
}

/// Integrates one uncontrolled path keyed by `(master_seed, path)`.
pub fn simulate_path<T: Real>(
    model: &SdeModel<T>,
    run: &RunSpec<T>,
    x0: &FullState<T>,
    master_seed: u64,
    path: u64,
) -> Result<Trajectory<T>> {
    let stepper = Stepper::new(model, run.scheme, run.dt)?;
    let n_steps = step_count(run.t_final, run.dt)?;
    let stride = run.stride.max(1);
    let mut traj = Trajectory { times: Vec::new(), states: Vec::new() };
    integrate(&stepper, x0, n_steps, &NoiseSource::new(master_seed, run.dt), path, |_, _| Ok(None), |k, t, x, _| {
        if k % stride == 0 || k == n_steps {
            traj.times.push(t);
            traj.states.push(x.clone());
        }
    })?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::{DelayMeasure, Density};
    use crate::graph::MetricGraph;
    use crate::sde::noise::{DriftSpec, NodeFn, NoiseSpec, ScalarFn};
    use crate::semigroup::expm;
    use crate::spatial::{AfrakOptions, EdgeCoefficient, NodeMatrixB};

    fn p3_model(mu: DelayMeasure<f64>, b: Vec<f64>, noise: NoiseSpec<f64>, n_x: usize, n_theta: usize) -> SdeModel<f64> {
        let g = MetricGraph::path(3).unwrap();
        let c = EdgeCoefficient::from_fn(2, n_x, |j, x| 1.0 + 0.5 * j as f64 * x).unwrap();
        SdeModel::new(g, c, NodeMatrixB::new(b, true).unwrap(), AfrakOptions::default(), mu, n_theta, noise, DriftSpec::zero(2))
            .unwrap()
    }

    fn bump(model: &SdeModel<f64>) -> FullState<f64> {
        model.initial_state(|j, x| (1.0 + j as f64) * x * (1.0 - x) + 0.3, |_, _| 0.3).unwrap()
    }

    #[test]
    fn deterministic_em_step_is_explicit_euler() {
        let model = p3_model(DelayMeasure::discrete(0.5).unwrap(), vec![-1.0, 0.0, 0.0], NoiseSpec::zero(2, 3), 7, 8);
        let x = bump(&model);
        let dt = 0.5 / 8.0;
        let inc = WienerIncrement::zeros(2, 7, 3);
        let next = em_step(&model, &x, 0.0, dt, &inc).unwrap();
        let l = model.layout();
        let y = x.to_vector(&l);
        let expect = (&y + &model.generator.full * &y * dt).rows(0, l.dim_a()).into_owned();
        assert!((next.ud_vector(&l) - expect).amax() < 1e-14);
        assert_eq!(next.segment.current(), next.d);
        assert!(matches!(em_step(&model, &x, 0.0, 0.01, &inc), Err(Error::StepNotMultipleOfDelayGrid { .. })));
    }

    #[test]
    fn em_conserves_mass_without_dissipation() {
        let model = p3_model(DelayMeasure::zero(1.0 / 16.0).unwrap(), vec![0.0; 3], NoiseSpec::zero(2, 3), 9, 16);
        let l = model.layout();
        let dt = 1.0 / 256.0;
        let stepper = Stepper::new(&model, Scheme::EulerMaruyama, dt).unwrap();
        let mut x = bump(&model);
        let inc = WienerIncrement::zeros(2, 9, 3);
        for k in 0..64 {
            let before = x.total_mass(&l);
            x = stepper.step(&x, k as f64 * dt, &inc, None).unwrap();
            assert!((x.total_mass(&l) - before).abs() <= 1e-10);
        }
    }

    #[test]
    fn exp_euler_without_noise_is_exact_propagation() {
        let model = p3_model(DelayMeasure::zero(1.0).unwrap(), vec![-1.0, 0.0, -0.5], NoiseSpec::zero(2, 3), 9, 16);
        let l = model.layout();
        let dt = 1.0 / 16.0;
        let x0 = bump(&model);
        let traj = simulate_path(&model, &RunSpec { dt, t_final: 1.0, scheme: Scheme::ExponentialEuler, stride: 1 }, &x0, 1, 1).unwrap();
        let reference = expm(&model.afrak.matrix, 1.0).unwrap().matrix * x0.ud_vector(&l);
        let last = traj.states.last().unwrap();
        assert!((last.ud_vector(&l) - reference).amax() < 1e-12);
    }

    #[test]
    fn history_only_holds_post_initial_values_after_horizon() {
        let model = p3_model(DelayMeasure::zero(0.25).unwrap(), vec![-1.0, 0.0, 0.0], NoiseSpec::zero(2, 3), 7, 4);
        let dt = 0.25 / 4.0;
        // marker history far from anything the flow produces
        let x0 = model.initial_state(|_, _| 0.5, |_, _| 1e6).unwrap();
        let traj = simulate_path(&model, &RunSpec { dt, t_final: 0.25 + dt, scheme: Scheme::ExponentialEuler, stride: 1 }, &x0, 1, 1);
        let last = traj.unwrap().states.pop().unwrap();
        assert!(last.segment.data().iter().all(|&v| v.abs() < 1e3));
    }

    #[test]
    fn zero_final_time_records_initial_state() {
        let model = p3_model(DelayMeasure::zero(1.0).unwrap(), vec![-1.0, 0.0, 0.0], NoiseSpec::zero(2, 3), 5, 4);
        let x0 = bump(&model);
        let traj = simulate_path(&model, &RunSpec { dt: 0.25, t_final: 0.0, scheme: Scheme::EulerMaruyama, stride: 3 }, &x0, 1, 1).unwrap();
        assert_eq!(traj.times, vec![0.0]);
        assert_eq!(traj.states, vec![x0]);
    }

    #[test]
    fn same_key_same_trajectory() {
        let f = ScalarFn::ClippedLinear { sigma: 0.5, cap: 1.0 };
        let noise = NoiseSpec::new(vec![f; 2], vec![NodeFn::Delayed(f); 3]).unwrap();
        let mu = DelayMeasure::new(0.5, vec![(-0.5, 0.5)], Density::Uniform { mass: 0.2 }).unwrap();
        let model = p3_model(mu, vec![-1.0, 0.0, 0.0], noise, 5, 32);
        let x0 = bump(&model);
        let run = RunSpec { dt: 1.0 / 64.0, t_final: 0.5, scheme: Scheme::EulerMaruyama, stride: 4 };
        let a = simulate_path(&model, &run, &x0, 9, 2).unwrap();
        let b = simulate_path(&model, &run, &x0, 9, 2).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&model, &run, &x0, 9, 3).unwrap();
        assert_ne!(a.states.last(), c.states.last());
        assert_eq!(a.times.len(), 9);
    }

    #[test]
    fn unstable_step_reports_blowup() {
        // dt far beyond the explicit stability limit
        let g = MetricGraph::path(3).unwrap();
        let c = EdgeCoefficient::constant(2, 41, 1.0).unwrap();
        let model = SdeModel::new(
            g,
            c,
            NodeMatrixB::new(vec![-1.0, 0.0, 0.0], false).unwrap(),
            AfrakOptions::default(),
            DelayMeasure::zero(1.0).unwrap(),
            4,
            NoiseSpec::zero(2, 3),
            DriftSpec::zero(2),
        )
        .unwrap();
        let x0 = model.initial_state(|_, x| (7.0 * std::f64::consts::PI * x).sin(), |_, _| 0.0).unwrap();
        let run = RunSpec { dt: 0.25, t_final: 25.0, scheme: Scheme::EulerMaruyama, stride: 1 };
        assert!(matches!(simulate_path(&model, &run, &x0, 1, 1), Err(Error::BlowupDetected { .. })));
    }

    #[test]
    fn coarse_increments_sum_fine_ones() {
        let f = ScalarFn::Constant(1.0);
        let noise = NoiseSpec::new(vec![f; 2], vec![NodeFn::Value(f); 3]).unwrap();
        let model = p3_model(DelayMeasure::zero(1.0).unwrap(), vec![-1.0, 0.0, 0.0], noise, 5, 4);
        let fine = NoiseSource::new(5, 0.01);
        let coarse = NoiseSource { master_seed: 5, dt_fine: 0.01, factor: 4 };
        let mut sum = WienerIncrement::zeros(2, 5, 3);
        for s in 4..8 {
            sum.add_assign(&fine.increment(&model, 1, s));
        }
        assert_eq!(coarse.increment(&model, 1, 1), sum);
    }
}
