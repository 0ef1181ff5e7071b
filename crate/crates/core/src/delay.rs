//! Delay measure, history segments and the full block generator.
//!
//! Segment slot `i` of vertex `alpha` sits at `theta_i = -r + i dtheta`; slot
//! `N_theta` is `theta = 0` and always equals the current node value.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::{AssembledAfrak, GridLayout, NodeMatrixB};

/// Relative tolerance for deciding that a time or location sits on the delay grid.
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density<T: Real> {
    None,
    /// Constant density `mass / r` on `[-r, 0]`.
    Uniform { mass: T },
}

/// Signed measure `mu` on `[-r, 0]`: point masses plus an optional density.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMeasure<T: Real> {
    r: T,
    atoms: Vec<(T, T)>,
    density: Density<T>,
}

impl<T: Real> DelayMeasure<T> {
    pub fn new(r: T, atoms: Vec<(T, T)>, density: Density<T>) -> Result<Self> {
        if !(r > T::zero()) || !r.is_finite() {
            return Err(Error::InvalidArgument(format!("delay horizon must be positive, got {}", r.as_f64())));
        }
        let slack = T::lit(GRID_TOL) * r;
        for &(theta, w) in &atoms {
            if !(theta >= -r - slack && theta <= slack) || !w.is_finite() {
                return Err(Error::AtomOutOfRange { theta: theta.as_f64(), r: r.as_f64() });
            }
        }
        if let Density::Uniform { mass } = density {
            if !mass.is_finite() {
                return Err(Error::NonFiniteEntries("delay density"));
            }
        }
        Ok(Self { r, atoms, density })
    }

    pub fn zero(r: T) -> Result<Self> {
        Self::new(r, Vec::new(), Density::None)
    }

    /// Point mass of weight 1 at `-r`.
    pub fn discrete(r: T) -> Result<Self> {
        Self::new(r, vec![(-r, T::one())], Density::None)
    }

    pub fn horizon(&self) -> T {
        self.r
    }

    pub fn atoms(&self) -> &[(T, T)] {
        &self.atoms
    }

    pub fn density(&self) -> Density<T> {
        self.density
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.iter().all(|&(_, w)| w == T::zero())
            && !matches!(self.density, Density::Uniform { mass } if mass != T::zero())
    }

    pub fn total_variation(&self) -> T {
        let atoms = self.atoms.iter().fold(T::zero(), |acc, &(_, w)| acc + w.abs());
        match self.density {
            Density::None => atoms,
            Density::Uniform { mass } => atoms + mass.abs(),
        }
    }

    /// Weights `w_i` with `Phi(eta) = sum_i w_i eta(theta_i)` on an `n_theta` grid.
    ///
    /// Atoms on a grid point hit that slot exactly; others are split linearly
    /// between the neighbours. The density uses the trapezoid rule.
    pub fn quadrature_weights(&self, n_theta: usize) -> Vec<T> {
        let mut w = vec![T::zero(); n_theta + 1];
        let dtheta = self.r / T::from_count(n_theta);
        for &(theta, weight) in &self.atoms {
            let pos = ((theta + self.r) / dtheta).as_f64().clamp(0.0, n_theta as f64);
            let nearest = pos.round();
            if (pos - nearest).abs() <= GRID_TOL * n_theta as f64 {
                w[nearest as usize] += weight;
            } else {
                let lo = pos.floor() as usize;
                let frac = T::lit(pos - lo as f64);
                w[lo] += weight * (T::one() - frac);
                w[lo + 1] += weight * frac;
            }
        }
        if let Density::Uniform { mass } = self.density {
            let cell = mass / T::from_count(n_theta);
            for (i, wi) in w.iter_mut().enumerate() {
                let end = i == 0 || i == n_theta;
                *wi += if end { cell * T::lit(0.5) } else { cell };
            }
        }
        w
    }
}

/// Node histories on the delay grid, one row per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentBuffer<T: Real> {
    r: T,
    data: DMatrix<T>,
}

impl<T: Real> SegmentBuffer<T> {
    /// Samples `history(vertex, theta)` on the grid.
    pub fn from_fn(r: T, n_theta: usize, n_vertices: usize, history: impl Fn(usize, T) -> T) -> Result<Self> {
        if n_theta == 0 {
            return Err(Error::InvalidArgument("n_theta must be at least 1".into()));
        }
        if !(r > T::zero()) {
            return Err(Error::InvalidArgument(format!("delay horizon must be positive, got {}", r.as_f64())));
        }
        let dtheta = r / T::from_count(n_theta);
        let data = DMatrix::from_fn(n_vertices, n_theta + 1, |a, i| history(a, -r + T::from_count(i) * dtheta));
        Ok(Self { r, data })
    }

    pub fn from_matrix(r: T, data: DMatrix<T>) -> Result<Self> {
        if data.ncols() < 2 {
            return Err(Error::InvalidArgument("segment needs at least two slots".into()));
        }
        Ok(Self { r, data })
    }

    pub fn horizon(&self) -> T {
        self.r
    }

    pub fn n_theta(&self) -> usize {
        self.data.ncols() - 1
    }

    pub fn n_vertices(&self) -> usize {
        self.data.nrows()
    }

    pub fn dtheta(&self) -> T {
        self.r / T::from_count(self.n_theta())
    }

    pub fn data(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut DMatrix<T> {
        &mut self.data
    }

    /// Values at `theta = 0`.
    pub fn current(&self) -> DVector<T> {
        self.data.column(self.n_theta()).into_owned()
    }

    pub fn set_current(&mut self, d: &DVector<T>) {
        let last = self.n_theta();
        self.data.set_column(last, d);
    }

    /// Advances the history by `dt = k dtheta`, entering `new_value` at `theta = 0`.
    ///
    /// Slots uncovered by a multi-slot push interpolate linearly between the old
    /// and new node values.
    pub fn push(&mut self, new_value: &DVector<T>, dt: T) -> Result<()> {
        if new_value.len() != self.n_vertices() {
            return Err(Error::ShapeMismatch(format!(
                "pushed {} values into a {}-vertex segment",
                new_value.len(),
                self.n_vertices()
            )));
        }
        let k = grid_steps(dt, self.dtheta())?;
        let n = self.n_theta();
        let old = self.data.clone();
        let kt = T::from_count(k);
        for i in 0..=n {
            if i + k <= n {
                self.data.set_column(i, &old.column(i + k));
            } else {
                let frac = T::from_count(i + k - n) / kt;
                for a in 0..self.n_vertices() {
                    let prev = old[(a, n)];
                    self.data[(a, i)] = prev + (new_value[a] - prev) * frac;
                }
            }
        }
        // exact copy so the alignment invariant holds bit for bit
        self.set_current(new_value);
        Ok(())
    }
}

/// Number of delay-grid cells in `dt`, or an error when `dt` is off the grid.
pub fn grid_steps<T: Real>(dt: T, dtheta: T) -> Result<usize> {
    let ratio = (dt / dtheta).as_f64();
    let k = ratio.round();
    if !(ratio >= 0.0) || (ratio - k).abs() > GRID_TOL * ratio.max(1.0) {
        return Err(Error::StepNotMultipleOfDelayGrid { dt: dt.as_f64(), spacing: dtheta.as_f64() });
    }
    Ok(k as usize)
}

/// `Phi(eta)_alpha = sum_i w_i eta_alpha(theta_i)` for every vertex.
pub fn delay_integral<T: Real>(mu: &DelayMeasure<T>, seg: &SegmentBuffer<T>) -> Result<DVector<T>> {
    let (rs, rm) = (seg.horizon(), mu.horizon());
    if (rs - rm).abs() > T::lit(GRID_TOL) * rm {
        return Err(Error::HorizonMismatch { segment: rs.as_f64(), measure: rm.as_f64() });
    }
    let w = DVector::from_vec(mu.quadrature_weights(seg.n_theta()));
    Ok(seg.data() * w)
}

/// Row numbering of the full state `(u, d, eta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FullLayout {
    pub grid: GridLayout,
    pub n_theta: usize,
}

impl FullLayout {
    pub fn dim_a(&self) -> usize {
        self.grid.dim()
    }

    pub fn dim(&self) -> usize {
        self.grid.dim() + self.grid.n_vertices * (self.n_theta + 1)
    }

    pub fn segment_row(&self, vertex: usize, slot: usize) -> usize {
        self.grid.dim() + vertex * (self.n_theta + 1) + slot
    }

    /// Inner-product weights: the spatial weights, then `dtheta` on every segment slot.
    pub fn weights<T: Real>(&self, dtheta: T) -> DVector<T> {
        let wa = self.grid.weights::<T>();
        DVector::from_fn(self.dim(), |i, _| if i < wa.len() { wa[i] } else { dtheta })
    }
}

/// Full generator `A = A_0 + A_1` on `(u, d, eta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGenerator<T: Real> {
    pub layout: FullLayout,
    pub r: T,
    /// `diag(A_afrak, A_theta)` with the `theta = 0` rows slaved to the node rows.
    pub a0: DMatrix<T>,
    /// Delay coupling: quadrature weights of `Phi` in the node rows.
    pub a1: DMatrix<T>,
    pub full: DMatrix<T>,
    pub weights: DVector<T>,
    pub phi_weights: Vec<T>,
}

/// Builds `A_0` (upwind shift toward `theta = -r`) and the `Phi` perturbation `A_1`.
///
/// The `theta = 0` slot row repeats the node row in both parts, so the slaved
/// slot moves with `d` under either generator.
pub fn assemble_full_generator<T: Real>(
    a: &AssembledAfrak<T>,
    mu: &DelayMeasure<T>,
    n_theta: usize,
) -> Result<BlockGenerator<T>> {
    if n_theta == 0 {
        return Err(Error::InvalidArgument("n_theta must be at least 1".into()));
    }
    let layout = FullLayout { grid: a.layout, n_theta };
    let (da, dim, n) = (layout.dim_a(), layout.dim(), a.layout.n_vertices);
    let r = mu.horizon();
    let dtheta = r / T::from_count(n_theta);
    let inv = T::one() / dtheta;

    let mut a0 = DMatrix::zeros(dim, dim);
    a0.view_mut((0, 0), (da, da)).copy_from(&a.matrix);
    for alpha in 0..n {
        for i in 0..n_theta {
            let row = layout.segment_row(alpha, i);
            a0[(row, row)] = -inv;
            a0[(row, layout.segment_row(alpha, i + 1))] = inv;
        }
        let slot = layout.segment_row(alpha, n_theta);
        let node = a.layout.node_row(alpha);
        for j in 0..da {
            a0[(slot, j)] = a.matrix[(node, j)];
        }
    }

    let phi_weights = mu.quadrature_weights(n_theta);
    let mut a1 = DMatrix::zeros(dim, dim);
    for alpha in 0..n {
        let rows = [a.layout.node_row(alpha), layout.segment_row(alpha, n_theta)];
        for (i, &w) in phi_weights.iter().enumerate() {
            for &row in &rows {
                a1[(row, layout.segment_row(alpha, i))] += w;
            }
        }
    }
    let full = &a0 + &a1;
    let weights = layout.weights(dtheta);
    Ok(BlockGenerator { layout, r, a0, a1, full, weights, phi_weights })
}

impl<T: Real> BlockGenerator<T> {
    /// `A` when `perturbed`, otherwise `A_0`.
    pub fn matrix(&self, perturbed: bool) -> &DMatrix<T> {
        if perturbed {
            &self.full
        } else {
            &self.a0
        }
    }

    pub fn dtheta(&self) -> T {
        self.r / T::from_count(self.layout.n_theta)
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn afrak_block(&self) -> DMatrix<T> {
        let da = self.layout.dim_a();
        self.a0.view((0, 0), (da, da)).into_owned()
    }

    /// Node-row by segment-column view of `A_1`.
    pub fn phi_block(&self) -> DMatrix<T> {
        let g = self.layout.grid;
        let da = g.dim();
        self.a1.view((g.node_row(0), da), (g.n_vertices, self.dim() - da)).into_owned()
    }

    /// Segment-row by segment-column view of `A_0`.
    pub fn shift_block(&self) -> DMatrix<T> {
        let da = self.layout.dim_a();
        let ns = self.dim() - da;
        self.a0.view((da, da), (ns, ns)).into_owned()
    }
}

/// `q = sqrt(t0) K |mu|` with `K = sup_{s in [0, r]} |e^{sB}|`.
pub fn miyadera_voigt_bound<T: Real>(mu: &DelayMeasure<T>, b: &NodeMatrixB<T>, t0: T) -> Result<T> {
    if !(t0 > T::zero()) {
        return Err(Error::NonPositiveT0(t0.as_f64()));
    }
    // e^{sB} is diagonal, so its norm is max_alpha e^{s b_alpha}; the sup over s
    // sits at an endpoint of [0, r].
    let r = mu.horizon();
    let k = b.diag().iter().fold(T::one(), |acc, &bv| acc.max((r * bv).exp()));
    Ok(t0.sqrt() * k * mu.total_variation())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MetricGraph;
    use crate::spatial::{assemble_a_frak, AfrakOptions, EdgeCoefficient};
    use proptest::prelude::*;

    fn linear_segment(r: f64, n_theta: usize) -> SegmentBuffer<f64> {
        SegmentBuffer::from_fn(r, n_theta, 1, |_, th| th).unwrap()
    }

    #[test]
    fn point_evaluation_at_minus_r() {
        let mu = DelayMeasure::discrete(0.5).unwrap();
        let phi = delay_integral(&mu, &linear_segment(0.5, 8)).unwrap();
        assert_eq!(phi[0], -0.5);
        assert_eq!(mu.quadrature_weights(8)[0], 1.0);
    }

    #[test]
    fn uniform_density_averages_constants() {
        let mu = DelayMeasure::new(2.0, vec![], Density::Uniform { mass: 1.0 }).unwrap();
        let seg = SegmentBuffer::from_fn(2.0, 10, 2, |_, _| 3.0).unwrap();
        let phi: DVector<f64> = delay_integral(&mu, &seg).unwrap();
        assert!((phi[0] - 3.0).abs() < 1e-14 && (phi[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn interpolated_atom_is_second_order_accurate() {
        let mu = DelayMeasure::new(1.0, vec![(-0.5, 1.0)], Density::None).unwrap();
        let seg = SegmentBuffer::from_fn(1.0, 100, 1, |_, th| th * th).unwrap();
        assert!((delay_integral(&mu, &seg).unwrap()[0] - 0.25f64).abs() < 1e-4);

        // off-grid location: the interpolation error of theta^2 is at most dtheta^2 / 4
        let mu = DelayMeasure::new(1.0, vec![(-0.503, 1.0)], Density::None).unwrap();
        let err = (delay_integral(&mu, &seg).unwrap()[0] - 0.503f64.powi(2)).abs();
        assert!(err > 0.0 && err <= 0.25e-4 + 1e-15);
    }

    #[test]
    fn rejects_bad_measures() {
        assert!(matches!(
            DelayMeasure::new(1.0, vec![(-1.5, 1.0)], Density::None),
            Err(Error::AtomOutOfRange { .. })
        ));
        let mu = DelayMeasure::discrete(1.0).unwrap();
        let seg = linear_segment(2.0, 4);
        assert!(matches!(delay_integral(&mu, &seg), Err(Error::HorizonMismatch { .. })));
    }

    #[test]
    fn total_variation_counts_signs() {
        let mu = DelayMeasure::new(1.0, vec![(-1.0, -2.0), (0.0, 0.5)], Density::Uniform { mass: -1.0 }).unwrap();
        assert_eq!(mu.total_variation(), 3.5);
    }

    #[test]
    fn push_examples() {
        let mut seg = SegmentBuffer::from_fn(1.0, 4, 1, |_, _| 2.0).unwrap();
        seg.push(&DVector::from_element(1, 2.0), 0.25).unwrap();
        assert!(seg.data().iter().all(|&x| x == 2.0));

        let mut seg = SegmentBuffer::from_matrix(2.0, DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 2.0])).unwrap();
        seg.push(&DVector::from_element(1, 3.0), 1.0).unwrap();
        assert_eq!(seg.data().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);

        assert!(matches!(
            seg.push(&DVector::from_element(1, 3.0), 0.4),
            Err(Error::StepNotMultipleOfDelayGrid { .. })
        ));
    }

    #[test]
    fn multi_slot_push_interpolates() {
        let mut seg = SegmentBuffer::from_matrix(4.0, DMatrix::from_row_slice(1, 5, &[0.0, 0.0, 0.0, 0.0, 1.0])).unwrap();
        seg.push(&DVector::from_element(1, 3.0), 2.0).unwrap();
        assert_eq!(seg.data().row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn slot_minus_r_holds_delayed_value() {
        // d(t) = t pushed on the grid: after N_theta steps slot 0 holds d(t - r)
        let (r, n) = (1.0, 8);
        let dt = r / n as f64;
        let mut seg = SegmentBuffer::from_fn(r, n, 1, |_, th| th).unwrap();
        for step in 1..=20 {
            let t = step as f64 * dt;
            seg.push(&DVector::from_element(1, t), dt).unwrap();
            assert!((seg.data()[(0, 0)] - (t - r)).abs() < 1e-12);
            assert_eq!(seg.current()[0], t);
        }
    }

    #[test]
    fn miyadera_voigt_examples() {
        let zero_b = NodeMatrixB::zeros(2);
        let one = DelayMeasure::discrete(1.0).unwrap();
        assert_eq!(miyadera_voigt_bound(&one, &zero_b, 0.25).unwrap(), 0.5);
        let two = DelayMeasure::new(1.0, vec![(-1.0, 2.0)], Density::None).unwrap();
        assert_eq!(miyadera_voigt_bound(&two, &zero_b, 1.0).unwrap(), 2.0);
        let decaying = NodeMatrixB::new(vec![-1.0], false).unwrap();
        let mu = DelayMeasure::discrete(3.7).unwrap();
        assert!((miyadera_voigt_bound(&mu, &decaying, 0.81).unwrap() - 0.9f64).abs() < 1e-15);
        assert!(matches!(miyadera_voigt_bound(&mu, &decaying, 0.0), Err(Error::NonPositiveT0(_))));
    }

    fn single_edge_generator(mu: &DelayMeasure<f64>, zero_flux: bool, n_theta: usize) -> BlockGenerator<f64> {
        let g = MetricGraph::new(2, &[(1, 2)]).unwrap();
        let c = EdgeCoefficient::constant(1, 5, 1.0).unwrap();
        let a = assemble_a_frak(&g, &c, &NodeMatrixB::zeros(2), AfrakOptions { zero_flux }).unwrap();
        assemble_full_generator(&a, mu, n_theta).unwrap()
    }

    #[test]
    fn zero_measure_leaves_generator_unperturbed() {
        let gen = single_edge_generator(&DelayMeasure::zero(1.0).unwrap(), false, 4);
        assert_eq!(gen.full, gen.a0);
        assert!(gen.phi_block().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_flux_reduces_to_scalar_dde() {
        let n_theta = 4;
        let gen = single_edge_generator(&DelayMeasure::discrete(1.0).unwrap(), true, n_theta);
        let l = gen.layout;
        let node = l.grid.node_row(0);
        let nonzero: Vec<_> = (0..gen.dim()).filter(|&j| gen.full[(node, j)] != 0.0).collect();
        // d' = eta(-r), nothing else
        assert_eq!(nonzero, vec![l.segment_row(0, 0)]);
        assert_eq!(gen.full[(node, l.segment_row(0, 0))], 1.0);
    }

    #[test]
    fn only_node_rows_touch_segment_columns() {
        let mu = DelayMeasure::new(1.0, vec![(-0.3, 0.7)], Density::Uniform { mass: 0.5 }).unwrap();
        let gen = single_edge_generator(&mu, false, 6);
        let l = gen.layout;
        for row in 0..l.dim_a() {
            let touches = (l.dim_a()..l.dim()).any(|j| gen.full[(row, j)] != 0.0);
            let is_node = row >= l.grid.node_row(0);
            assert_eq!(touches, is_node, "row {row}");
        }
    }

    #[test]
    fn discrete_dde_matches_method_of_steps() {
        // x' = x(t - 1), x = 1 on [-1, 0]: x(t) = 1 + t on [0, 1]; integrate with
        // forward Euler on A_h and compare at t = 1
        let n_theta = 64;
        let gen = single_edge_generator(&DelayMeasure::discrete(1.0).unwrap(), true, n_theta);
        let mut y = DVector::from_element(gen.dim(), 1.0);
        let dt = 1.0 / 4096.0;
        for _ in 0..4096 {
            y += dt * (&gen.full * &y);
        }
        let node = gen.layout.grid.node_row(0);
        assert!((y[node] - 2.0).abs() < 2.0 / n_theta as f64);
    }

    proptest! {
        #[test]
        fn delay_integral_is_linear_and_bounded(
            atoms in proptest::collection::vec((-1.0f64..=0.0, -2.0f64..2.0), 0..4),
            mass in -1.0f64..1.0,
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            s1 in 0.0f64..10.0,
            s2 in 0.0f64..10.0,
        ) {
            let mu = DelayMeasure::new(1.0, atoms, Density::Uniform { mass }).unwrap();
            let e1 = SegmentBuffer::from_fn(1.0, 16, 2, |v, th| (s1 * th + v as f64).sin()).unwrap();
            let e2 = SegmentBuffer::from_fn(1.0, 16, 2, |v, th| (s2 * th * th - v as f64).cos()).unwrap();
            let mix = SegmentBuffer::from_matrix(1.0, e1.data() * a + e2.data() * b).unwrap();
            let lhs = delay_integral(&mu, &mix).unwrap();
            let rhs = delay_integral(&mu, &e1).unwrap() * a + delay_integral(&mu, &e2).unwrap() * b;
            prop_assert!((lhs - rhs).amax() <= 1e-12);
            let bound = mu.total_variation() * e1.data().amax();
            prop_assert!(delay_integral(&mu, &e1).unwrap().amax() <= bound + 1e-12);
        }

        #[test]
        fn repeated_pushes_equal_one_long_shift(k in 1usize..6, reps in 1usize..4) {
            let n = 12;
            let dtheta = 1.0 / n as f64;
            let start = SegmentBuffer::from_fn(1.0, n, 1, |_, th: f64| (3.0 * th).sin()).unwrap();
            let mut stepwise = start.clone();
            for _ in 0..reps * k {
                let d = stepwise.current();
                stepwise.push(&d, dtheta).unwrap();
            }
            let mut once = start.clone();
            once.push(&start.current(), (reps * k) as f64 * dtheta).unwrap();
            prop_assert_eq!(stepwise.data(), once.data());
        }
    }
}
