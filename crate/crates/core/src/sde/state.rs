use nalgebra::{DMatrix, DVector};

use crate::delay::{FullLayout, SegmentBuffer};
use crate::error::{Error, Result};
use crate::graph::MetricGraph;
use crate::scalar::Real;
use crate::spatial::{boundary_trace, weighted_dot, EdgeField};

/// Discretized state `(u, d, eta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState<T: Real> {
    /// Edge profiles, endpoints included.
    pub u: EdgeField<T>,
    pub d: DVector<T>,
    pub segment: SegmentBuffer<T>,
}

impl<T: Real> FullState<T> {
    /// Builds a state from edge profiles and a history, taking node values from the trace.
    pub fn new(u: EdgeField<T>, segment: SegmentBuffer<T>, g: &MetricGraph) -> Result<Self> {
        let d = boundary_trace(&u, g)?;
        if segment.n_vertices() != g.n_vertices() {
            return Err(Error::ShapeMismatch(format!(
                "segment has {} rows for {} vertices",
                segment.n_vertices(),
                g.n_vertices()
            )));
        }
        let mut state = Self { u, d, segment };
        state.segment.set_current(&state.d);
        state.check_finite()?;
        Ok(state)
    }

    /// Builds a state from independent node values; edge endpoints are overwritten by `d`.
    pub fn from_parts(mut u: EdgeField<T>, d: DVector<T>, mut segment: SegmentBuffer<T>, g: &MetricGraph) -> Result<Self> {
        if u.nrows() != g.n_edges() || d.len() != g.n_vertices() || segment.n_vertices() != g.n_vertices() {
            return Err(Error::ShapeMismatch("state parts do not match the graph".into()));
        }
        refresh_endpoints(&mut u, &d, g);
        segment.set_current(&d);
        let state = Self { u, d, segment };
        state.check_finite()?;
        Ok(state)
    }

    pub fn check_finite(&self) -> Result<()> {
        let finite = self.u.iter().chain(self.d.iter()).chain(self.segment.data().iter()).all(|x| x.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::NonFiniteEntries("state"))
        }
    }

    /// Full state vector in the generator's row order.
    pub fn to_vector(&self, layout: &FullLayout) -> DVector<T> {
        let mut x = DVector::zeros(layout.dim());
        let ud = layout.grid.pack(&self.u, &self.d);
        x.rows_mut(0, ud.len()).copy_from(&ud);
        let seg = self.segment.data();
        for alpha in 0..layout.grid.n_vertices {
            for i in 0..=layout.n_theta {
                x[layout.segment_row(alpha, i)] = seg[(alpha, i)];
            }
        }
        x
    }

    /// Inverse of [`FullState::to_vector`]; the result satisfies the trace and alignment invariants.
    pub fn from_vector(x: &DVector<T>, layout: &FullLayout, g: &MetricGraph, r: T) -> Result<Self> {
        if x.len() != layout.dim() {
            return Err(Error::ShapeMismatch(format!("vector of length {} for dimension {}", x.len(), layout.dim())));
        }
        let ud = x.rows(0, layout.dim_a()).into_owned();
        let (u, d) = layout.grid.unpack(g, &ud);
        let seg = DMatrix::from_fn(layout.grid.n_vertices, layout.n_theta + 1, |a, i| x[layout.segment_row(a, i)]);
        Self::from_parts(u, d, SegmentBuffer::from_matrix(r, seg)?, g)
    }

    /// `(u, d)` block in the generator's row order.
    pub fn ud_vector(&self, layout: &FullLayout) -> DVector<T> {
        layout.grid.pack(&self.u, &self.d)
    }

    /// `h sum(interior u) + sum(d)`, conserved by the flow when `B = 0` and `mu = 0`.
    pub fn total_mass(&self, layout: &FullLayout) -> T {
        let w = layout.grid.weights::<T>();
        let ud = self.ud_vector(layout);
        w.dot(&ud)
    }

    /// Squared weighted norm of the `(u, d)` block.
    pub fn ud_norm_squared(&self, layout: &FullLayout) -> T {
        let w = layout.grid.weights::<T>();
        let ud = self.ud_vector(layout);
        weighted_dot(&w, &ud, &ud)
    }

    pub fn max_abs(&self) -> T {
        self.u.amax().max(self.d.amax()).max(self.segment.data().amax())
    }
}

/// Overwrites edge endpoint samples with the node values.
pub fn refresh_endpoints<T: Real>(u: &mut EdgeField<T>, d: &DVector<T>, g: &MetricGraph) {
    let last = u.ncols() - 1;
    for (j, e) in g.edges().iter().enumerate() {
        u[(j, 0)] = d[e.tail];
        u[(j, last)] = d[e.head];
    }
}
