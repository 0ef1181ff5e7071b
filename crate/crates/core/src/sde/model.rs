use nalgebra::DVector;

use crate::delay::{assemble_full_generator, delay_integral, BlockGenerator, DelayMeasure, FullLayout};
use crate::error::{Error, Result};
use crate::graph::MetricGraph;
use crate::scalar::Real;
use crate::spatial::{assemble_a_frak, AfrakOptions, AssembledAfrak, EdgeCoefficient, NodeMatrixB};

use super::noise::{DriftSpec, NoiseSpec};
use super::state::FullState;

/// Everything needed to integrate the stochastic system on one graph.
#[derive(Debug, Clone)]
pub struct SdeModel<T: Real> {
    pub graph: MetricGraph,
    pub coeff: EdgeCoefficient<T>,
    pub b: NodeMatrixB<T>,
    pub afrak: AssembledAfrak<T>,
    pub mu: DelayMeasure<T>,
    pub generator: BlockGenerator<T>,
    pub noise: NoiseSpec<T>,
    pub drift: DriftSpec<T>,
}

impl<T: Real> SdeModel<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        graph: MetricGraph,
        coeff: EdgeCoefficient<T>,
        b: NodeMatrixB<T>,
        options: AfrakOptions,
        mu: DelayMeasure<T>,
        n_theta: usize,
        noise: NoiseSpec<T>,
        drift: DriftSpec<T>,
    ) -> Result<Self> {
        if noise.edge.len() != graph.n_edges() || noise.node.len() != graph.n_vertices() {
            return Err(Error::ShapeMismatch("noise catalog does not match the graph".into()));
        }
        if drift.edge.len() != graph.n_edges() {
            return Err(Error::ShapeMismatch("drift catalog does not match the graph".into()));
        }
        let afrak = assemble_a_frak(&graph, &coeff, &b, options)?;
        let generator = assemble_full_generator(&afrak, &mu, n_theta)?;
        Ok(Self { graph, coeff, b, afrak, mu, generator, noise, drift })
    }

    pub fn layout(&self) -> FullLayout {
        self.generator.layout
    }

    pub fn dtheta(&self) -> T {
        self.generator.dtheta()
    }

    pub fn h(&self) -> T {
        self.layout().grid.h()
    }

    /// Delay term `Phi(eta)` of a state.
    pub fn phi(&self, x: &FullState<T>) -> Result<DVector<T>> {
        delay_integral(&self.mu, &x.segment)
    }

    /// State with edge profiles `u0(edge, x)`, a history `eta0(vertex, theta)` and
    /// node values taken from the edge trace.
    pub fn initial_state(
        &self,
        u0: impl Fn(usize, T) -> T,
        eta0: impl Fn(usize, T) -> T,
    ) -> Result<FullState<T>> {
        let l = self.layout();
        let h = self.h();
        let u = nalgebra::DMatrix::from_fn(l.grid.n_edges, l.grid.n_x, |j, k| u0(j, T::from_count(k) * h));
        let seg = crate::delay::SegmentBuffer::from_fn(self.mu.horizon(), l.n_theta, l.grid.n_vertices, eta0)?;
        let d = crate::spatial::boundary_trace(&u, &self.graph)?;
        FullState::from_parts(u, d, seg, &self.graph)
    }
}
