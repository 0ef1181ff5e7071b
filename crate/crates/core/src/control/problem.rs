//! Cost functional, control immersion and pointwise Hamiltonian minimization.

use nalgebra::{DMatrix, DVector};

use crate::delay::FullLayout;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sde::SdeModel;

/// Golden-section iterations; shrinks the bracket by about `1e-42`.
const GOLDEN_ITERS: usize = 200;

/// Control penalty in the running cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlPenalty {
    /// `q_z |z|^2`.
    Quadratic,
    /// `q_z sum z_alpha^4`.
    Quartic,
}

/// Running cost `q_x |X|^2 + q_z pen(z)` and terminal cost `q_t |X|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights<T: Real> {
    pub penalty: ControlPenalty,
    pub q_x: T,
    pub q_z: T,
    pub q_t: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem<T: Real> {
    pub weights: CostWeights<T>,
    /// Box half-width; `Z = [-z_max, z_max]^n`.
    pub z_max: T,
    /// Immersion of `R^n` into the state: node rows and the `theta = 0` slot rows.
    pub r: DMatrix<T>,
    /// Diagonal of the state norm: grid weights on `(u, d)`, zero on the history.
    pub state_weights: DVector<T>,
}

impl<T: Real> ControlProblem<T> {
    pub fn new(layout: &FullLayout, weights: CostWeights<T>, z_max: T) -> Result<Self> {
        if !(z_max >= T::zero()) || !z_max.is_finite() {
            return Err(Error::EmptyControlDomain(z_max.as_f64()));
        }
        for (name, q) in [("q_x", weights.q_x), ("q_z", weights.q_z), ("q_t", weights.q_t)] {
            if !(q >= T::zero()) || !q.is_finite() {
                return Err(Error::InvalidArgument(format!("cost weight {name} must be finite and >= 0, got {}", q.as_f64())));
            }
        }
        let n = layout.grid.n_vertices;
        let mut r = DMatrix::zeros(layout.dim(), n);
        for alpha in 0..n {
            r[(layout.grid.node_row(alpha), alpha)] = T::one();
            r[(layout.segment_row(alpha, layout.n_theta), alpha)] = T::one();
        }
        let mut state_weights = DVector::zeros(layout.dim());
        state_weights.rows_mut(0, layout.dim_a()).copy_from(&layout.grid.weights::<T>());
        Ok(Self { weights, z_max, r, state_weights })
    }

    pub fn for_model(model: &SdeModel<T>, weights: CostWeights<T>, z_max: T) -> Result<Self> {
        Self::new(&model.layout(), weights, z_max)
    }

    pub fn n_controls(&self) -> usize {
        self.r.ncols()
    }

    pub fn state_norm_squared(&self, x: &DVector<T>) -> T {
        x.iter().zip(self.state_weights.iter()).fold(T::zero(), |acc, (&v, &w)| acc + w * v * v)
    }

    fn penalty(&self, z: &DVector<T>) -> T {
        let q = self.weights.q_z;
        match self.weights.penalty {
            ControlPenalty::Quadratic => q * z.norm_squared(),
            ControlPenalty::Quartic => q * z.iter().fold(T::zero(), |acc, &v| acc + v * v * v * v),
        }
    }

    pub fn running_cost(&self, x: &DVector<T>, z: &DVector<T>) -> T {
        self.weights.q_x * self.state_norm_squared(x) + self.penalty(z)
    }

    pub fn terminal_cost(&self, x: &DVector<T>) -> T {
        self.weights.q_t * self.state_norm_squared(x)
    }

    /// Projection onto the control box.
    pub fn project(&self, z: &DVector<T>) -> DVector<T> {
        z.map(|v| v.max(-self.z_max).min(self.z_max))
    }

    fn check_shapes(&self, x: &DVector<T>, y: &DVector<T>) -> Result<()> {
        if x.len() != self.r.nrows() || y.len() != self.r.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "state/costate of lengths {}/{} for a {}-dimensional state",
                x.len(),
                y.len(),
                self.r.nrows()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianValue<T: Real> {
    pub psi: T,
    pub z_star: DVector<T>,
}

/// Minimizes `q z^4 + a z` over `[-z_max, z_max]` by golden section, then keeps
/// the best of the result and both endpoints.
fn quartic_argmin<T: Real>(q: T, a: T, z_max: T) -> T {
    let f = |z: T| q * z * z * z * z + a * z;
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let (mut lo, mut hi) = (-z_max, z_max);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_ITERS {
        if hi - lo <= T::default_epsilon() * z_max {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = (lo + hi) * T::lit(0.5);
    [mid, -z_max, z_max].into_iter().fold(mid, |best, z| if f(z) < f(best) { z } else { best })
}

/// `psi = -inf_z { l(t, X, z) + Y . R z }` with its minimizer over the box.
///
/// The running cost separates into a state part and a per-component control
/// part, so the infimum is taken component by component.
pub fn hamiltonian<T: Real>(prob: &ControlProblem<T>, x: &DVector<T>, y: &DVector<T>) -> Result<HamiltonianValue<T>> {
    if !(prob.z_max >= T::zero()) {
        return Err(Error::EmptyControlDomain(prob.z_max.as_f64()));
    }
    prob.check_shapes(x, y)?;
    let a = prob.r.tr_mul(y);
    let q = prob.weights.q_z;
    let zm = prob.z_max;
    let z_star = a.map(|ai| {
        if q == T::zero() {
            // linear in z: the minimum sits on a face of the box
            if ai > T::zero() {
                -zm
            } else if ai < T::zero() {
                zm
            } else {
                T::zero()
            }
        } else {
            match prob.weights.penalty {
                ControlPenalty::Quadratic => (-ai / (q + q)).max(-zm).min(zm),
                ControlPenalty::Quartic => quartic_argmin(q, ai, zm),
            }
        }
    });
    let psi = -(prob.running_cost(x, &z_star) + a.dot(&z_star));
    Ok(HamiltonianValue { psi, z_star })
}

/// `l(t, X, z) + Y . R z`, the quantity minimized by [`hamiltonian`].
pub fn hamiltonian_objective<T: Real>(prob: &ControlProblem<T>, x: &DVector<T>, y: &DVector<T>, z: &DVector<T>) -> T {
    prob.running_cost(x, z) + y.dot(&(&prob.r * z))
}
