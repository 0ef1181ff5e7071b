//! Continuous algebraic Riccati equation by the matrix sign function, and the
//! linear costate proxy built from it.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sde::{FullState, SdeModel};

use super::problem::{ControlPenalty, ControlProblem};

const SIGN_MAX_ITERS: usize = 100;
const SIGN_TOL: f64 = 1e-13;

fn norm1<T: Real>(m: &DMatrix<T>) -> T {
    m.column_iter()
        .map(|c| c.iter().fold(T::zero(), |acc, &x| acc + x.abs()))
        .fold(T::zero(), |a, b| a.max(b))
}

/// `sign(H)` by the determinant-scaled Newton iteration.
pub fn matrix_sign<T: Real>(h: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = h.nrows();
    let mut z = h.clone();
    for _ in 0..SIGN_MAX_ITERS {
        let lu = z.clone().lu();
        // |det Z|^(-1/n) balances the eigenvalue moduli around 1
        let log_det: f64 = lu.u().diagonal().iter().map(|d| d.abs().as_f64().ln()).sum();
        let inv = lu.try_inverse().ok_or(Error::EigenFailure)?;
        let c = T::lit((-log_det / n as f64).exp());
        let next = (&z * c + inv / c) * T::lit(0.5);
        let change = norm1(&(&next - &z));
        z = next;
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::EigenFailure);
        }
        if change <= T::lit(SIGN_TOL) * norm1(&z) {
            return Ok(z);
        }
    }
    Err(Error::EigenFailure)
}

/// Stabilizing solution of `A^T P + P A - P B S^-1 B^T P + Q = 0`
/// with `S = s I`.
pub fn solve_care<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, q: &DMatrix<T>, s: T) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) {
        return Err(Error::ShapeMismatch("Riccati blocks do not conform".into()));
    }
    if !(s > T::zero()) {
        return Err(Error::InvalidArgument(format!("control weight must be > 0, got {}", s.as_f64())));
    }
    let g = b * b.transpose() / s;
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let w = matrix_sign(&h)?;
    let id = DMatrix::<T>::identity(n, n);
    // [W12; W22 + I] P = -[W11 + I; W21]
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w.view((n, n), (n, n)) + &id));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w.view((0, 0), (n, n)) + &id)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));
    let qr = lhs.qr();
    let qtb = qr.q().transpose() * rhs;
    let p = qr.r().solve_upper_triangular(&qtb).ok_or(Error::EigenFailure)?;
    let p = (&p + p.transpose()) * T::lit(0.5);
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteEntries("Riccati solution"));
    }
    Ok(p)
}

/// `A^T P + P A - P B S^-1 B^T P + Q`.
pub fn care_residual<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, q: &DMatrix<T>, s: T, p: &DMatrix<T>) -> DMatrix<T> {
    a.transpose() * p + p * a - p * b * b.transpose() * p / s + q
}

/// Linear costate proxy `Y = M X` from the deterministic LQ problem on the
/// full generator.
///
/// The `theta = 0` slots repeat the node values, so `d - eta(0)` is a fixed
/// mode that no control moves; the Riccati equation is solved on the reduced
/// state without those slots. The actuator is `B = g~` on the node rows with
/// the noise coefficients taken at `x0`, and `M = 2 G P` lifted back to the
/// full state, so that the Hamiltonian minimizer `-R^T M X / (2 q_z)`
/// reproduces the LQ feedback `-B^T P X / q_z` before clipping.
pub fn riccati_proxy<T: Real>(prob: &ControlProblem<T>, model: &SdeModel<T>, x0: &FullState<T>) -> Result<DMatrix<T>> {
    if prob.weights.penalty != ControlPenalty::Quadratic {
        return Err(Error::InvalidArgument("the Riccati proxy needs the quadratic control penalty".into()));
    }
    let phi = model.phi(x0)?;
    let gt = model.noise.node_coefficients(&x0.d, &phi);
    let layout = model.layout();
    let n = layout.grid.n_vertices;
    let dim = layout.dim();
    let slaved: Vec<usize> = (0..n).map(|a| layout.segment_row(a, layout.n_theta)).collect();
    let kept: Vec<usize> = (0..dim).filter(|i| !slaved.contains(i)).collect();
    let reduced_index = |i: usize| kept.iter().position(|&k| k == i).expect("kept row");
    let full = &model.generator.full;
    let k = kept.len();
    // E lifts a reduced vector by copying each node value into its slaved slot
    let mut a = DMatrix::from_fn(k, k, |i, j| full[(kept[i], kept[j])]);
    for alpha in 0..n {
        let node = reduced_index(layout.grid.node_row(alpha));
        for i in 0..k {
            a[(i, node)] += full[(kept[i], slaved[alpha])];
        }
    }
    let mut b = DMatrix::zeros(k, n);
    for alpha in 0..n {
        b[(reduced_index(layout.grid.node_row(alpha)), alpha)] = gt[alpha];
    }
    let q = DMatrix::from_fn(k, k, |i, j| if i == j { prob.state_weights[kept[i]] * prob.weights.q_x } else { T::zero() });
    let p = solve_care(&a, &b, &q, prob.weights.q_z)?;
    let mut m = DMatrix::zeros(dim, dim);
    for alpha in 0..n {
        let row = layout.grid.node_row(alpha);
        let ri = reduced_index(row);
        let scale = gt[alpha] * T::lit(2.0);
        for (j, &col) in kept.iter().enumerate() {
            m[(row, col)] = scale * p[(ri, j)];
        }
    }
    Ok(m)
}
