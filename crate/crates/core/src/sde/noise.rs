//! Catalog of bounded Lipschitz coefficient functions for noise and drift.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::state::FullState;
use super::wiener::WienerIncrement;

/// Scalar coefficient `g(u)` from the built-in catalog.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarFn<T: Real> {
    Zero,
    Constant(T),
    /// `clamp(sigma u, -cap, cap)`.
    ClippedLinear { sigma: T, cap: T },
    /// `sigma sin(u)`.
    SinModulated(T),
}

impl<T: Real> ScalarFn<T> {
    pub fn eval(&self, u: T) -> T {
        match *self {
            ScalarFn::Zero => T::zero(),
            ScalarFn::Constant(s) => s,
            ScalarFn::ClippedLinear { sigma, cap } => (sigma * u).max(-cap).min(cap),
            ScalarFn::SinModulated(s) => s * u.sin(),
        }
    }

    /// Declared bound `C` with `|g| <= C`.
    pub fn bound(&self) -> T {
        match *self {
            ScalarFn::Zero => T::zero(),
            ScalarFn::Constant(s) | ScalarFn::SinModulated(s) => s.abs(),
            ScalarFn::ClippedLinear { cap, .. } => cap,
        }
    }

    /// Declared Lipschitz constant `K`.
    pub fn lipschitz(&self) -> T {
        match *self {
            ScalarFn::Zero | ScalarFn::Constant(_) => T::zero(),
            ScalarFn::ClippedLinear { sigma, .. } | ScalarFn::SinModulated(sigma) => sigma.abs(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            ScalarFn::Zero => true,
            ScalarFn::Constant(s) | ScalarFn::SinModulated(s) => s == T::zero(),
            ScalarFn::ClippedLinear { sigma, cap } => sigma == T::zero() || cap == T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let params: &[T] = match self {
            ScalarFn::Zero => &[],
            ScalarFn::Constant(s) | ScalarFn::SinModulated(s) => std::slice::from_ref(s),
            ScalarFn::ClippedLinear { sigma, cap } => {
                if *cap < T::zero() {
                    return Err(Error::InvalidArgument(format!("clipped_linear cap must be >= 0, got {}", cap.as_f64())));
                }
                return if sigma.is_finite() && cap.is_finite() {
                    Ok(())
                } else {
                    Err(Error::NonFiniteEntries("noise parameters"))
                };
            }
        };
        if params.iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteEntries("noise parameters"))
        }
    }
}

/// Node coefficient `g~_alpha(t, d, eta)` seen through the summary `(d^alpha, Phi(eta)_alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeFn<T: Real> {
    /// Function of the current node value.
    Value(ScalarFn<T>),
    /// Function of the delayed term `Phi(eta)_alpha`.
    Delayed(ScalarFn<T>),
}

impl<T: Real> NodeFn<T> {
    pub fn eval(&self, d: T, phi: T) -> T {
        match self {
            NodeFn::Value(f) => f.eval(d),
            NodeFn::Delayed(f) => f.eval(phi),
        }
    }

    pub fn inner(&self) -> &ScalarFn<T> {
        match self {
            NodeFn::Value(f) | NodeFn::Delayed(f) => f,
        }
    }
}

/// Noise map `G`: per-edge `g_j` and per-node `g~_alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec<T: Real> {
    pub edge: Vec<ScalarFn<T>>,
    pub node: Vec<NodeFn<T>>,
}

impl<T: Real> NoiseSpec<T> {
    pub fn zero(n_edges: usize, n_vertices: usize) -> Self {
        Self { edge: vec![ScalarFn::Zero; n_edges], node: vec![NodeFn::Value(ScalarFn::Zero); n_vertices] }
    }

    pub fn new(edge: Vec<ScalarFn<T>>, node: Vec<NodeFn<T>>) -> Result<Self> {
        for f in edge.iter().chain(node.iter().map(|n| n.inner())) {
            f.validate()?;
        }
        Ok(Self { edge, node })
    }

    pub fn is_zero(&self) -> bool {
        self.edge.iter().all(|f| f.is_zero()) && self.node.iter().all(|f| f.inner().is_zero())
    }

    /// `g~_alpha(d^alpha, Phi_alpha)` for every node.
    pub fn node_coefficients(&self, d: &DVector<T>, phi: &DVector<T>) -> DVector<T> {
        DVector::from_fn(d.len(), |a, _| self.node[a].eval(d[a], phi[a]))
    }
}

/// Drift `F = (f(u), 0, 0)` acting on the edge values.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec<T: Real> {
    pub edge: Vec<ScalarFn<T>>,
}

impl<T: Real> DriftSpec<T> {
    pub fn zero(n_edges: usize) -> Self {
        Self { edge: vec![ScalarFn::Zero; n_edges] }
    }

    pub fn new(edge: Vec<ScalarFn<T>>) -> Result<Self> {
        for f in &edge {
            f.validate()?;
        }
        Ok(Self { edge })
    }

    pub fn is_zero(&self) -> bool {
        self.edge.iter().all(|f| f.is_zero())
    }

    /// `f_j(u_j(x_k))` on every grid point; endpoint entries are unused.
    pub fn eval(&self, u: &DMatrix<T>) -> DMatrix<T> {
        DMatrix::from_fn(u.nrows(), u.ncols(), |j, k| self.edge[j].eval(u[(j, k)]))
    }
}

/// State-shaped noise increment; the segment component is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement<T: Real> {
    /// Edge part on every grid point; endpoints are zero (they are node unknowns).
    pub du: DMatrix<T>,
    pub dd: DVector<T>,
}

/// `G(t, X) dW`: pointwise `g_j(u_j) dW1` on interior points and `g~_alpha dW2_alpha` on nodes.
///
/// `phi` is the delay term `Phi(eta)` of the current state.
pub fn apply_noise<T: Real>(
    spec: &NoiseSpec<T>,
    x: &FullState<T>,
    phi: &DVector<T>,
    inc: &WienerIncrement<T>,
) -> Result<NoiseIncrement<T>> {
    let (m, n_x) = x.u.shape();
    if inc.dw1.shape() != (m, n_x) || inc.dw2.len() != x.d.len() || spec.edge.len() != m || spec.node.len() != x.d.len() {
        return Err(Error::ShapeMismatch("noise spec, state and increment disagree".into()));
    }
    let du = DMatrix::from_fn(m, n_x, |j, k| {
        if k == 0 || k == n_x - 1 {
            T::zero()
        } else {
            spec.edge[j].eval(x.u[(j, k)]) * inc.dw1[(j, k)]
        }
    });
    let coeff = spec.node_coefficients(&x.d, phi);
    let dd = coeff.component_mul(&inc.dw2);
    Ok(NoiseIncrement { du, dd })
}
