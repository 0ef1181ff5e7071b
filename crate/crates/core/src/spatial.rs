//! Finite-difference discretization of the edge diffusion, the node trace and
//! flux, and the dissipative node matrix `B`.
//!
//! The `(u, d)` unknown vector stores interior edge values first (edge-major,
//! `N_x - 2` per edge) followed by one value per vertex. Endpoint samples of an
//! edge are never stored separately: they are the node values.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::MetricGraph;
use crate::scalar::Real;

/// Edge profiles, one row per edge and one column per grid point (endpoints included).
pub type EdgeField<T> = DMatrix<T>;

/// Diffusion coefficient samples `c_j(x_k)` on the uniform edge grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCoefficient<T: Real> {
    samples: DMatrix<T>,
}

impl<T: Real> EdgeCoefficient<T> {
    /// Wraps an `m x N_x` sample matrix after checking positivity and grid size.
    pub fn from_samples(samples: DMatrix<T>) -> Result<Self> {
        if samples.ncols() < 3 {
            return Err(Error::InvalidGrid(samples.ncols()));
        }
        for j in 0..samples.nrows() {
            for k in 0..samples.ncols() {
                let c = samples[(j, k)];
                if !(c > T::zero()) || !c.is_finite() {
                    return Err(Error::NonPositiveCoefficient { edge: j + 1, point: k });
                }
            }
        }
        Ok(Self { samples })
    }

    pub fn constant(n_edges: usize, n_x: usize, c: T) -> Result<Self> {
        Self::from_samples(DMatrix::from_element(n_edges, n_x, c))
    }

    /// Samples `f(edge, x)` at `x_k = k h`.
    pub fn from_fn(n_edges: usize, n_x: usize, f: impl Fn(usize, T) -> T) -> Result<Self> {
        if n_x < 3 {
            return Err(Error::InvalidGrid(n_x));
        }
        let h = grid_spacing::<T>(n_x);
        Self::from_samples(DMatrix::from_fn(n_edges, n_x, |j, k| f(j, T::from_count(k) * h)))
    }

    pub fn n_edges(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_x(&self) -> usize {
        self.samples.ncols()
    }

    pub fn h(&self) -> T {
        grid_spacing(self.n_x())
    }

    pub fn sample(&self, edge: usize, k: usize) -> T {
        self.samples[(edge, k)]
    }

    /// Midpoint average `c_{k+1/2} = (c_k + c_{k+1}) / 2`.
    pub fn midpoint(&self, edge: usize, k: usize) -> T {
        (self.samples[(edge, k)] + self.samples[(edge, k + 1)]) * T::lit(0.5)
    }
}

pub fn grid_spacing<T: Real>(n_x: usize) -> T {
    T::one() / T::from_count(n_x - 1)
}

/// Diagonal node matrix `B = diag(b_1, ..., b_n)` with `b_alpha <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMatrixB<T: Real> {
    diag: Vec<T>,
    conservative: bool,
}

impl<T: Real> NodeMatrixB<T> {
    /// Without the `conservative` flag at least one entry must be strictly negative.
    pub fn new(diag: Vec<T>, conservative: bool) -> Result<Self> {
        for (i, &b) in diag.iter().enumerate() {
            if b > T::zero() || !b.is_finite() {
                return Err(Error::PositiveBoundaryCoefficient { index: i + 1, value: b.as_f64() });
            }
        }
        if !conservative && !diag.iter().any(|&b| b < T::zero()) {
            return Err(Error::NoDissipativeNode);
        }
        Ok(Self { diag, conservative })
    }

    pub fn zeros(n: usize) -> Self {
        Self { diag: vec![T::zero(); n], conservative: true }
    }

    pub fn diag(&self) -> &[T] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn is_conservative(&self) -> bool {
        self.conservative
    }
}

/// Row numbering of the `(u, d)` unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLayout {
    pub n_edges: usize,
    pub n_vertices: usize,
    pub n_x: usize,
}

impl GridLayout {
    pub fn new(g: &MetricGraph, n_x: usize) -> Result<Self> {
        if n_x < 3 {
            return Err(Error::InvalidGrid(n_x));
        }
        Ok(Self { n_edges: g.n_edges(), n_vertices: g.n_vertices(), n_x })
    }

    pub fn n_interior(&self) -> usize {
        self.n_x - 2
    }

    /// Dimension `m (N_x - 2) + n` of the `(u, d)` block.
    pub fn dim(&self) -> usize {
        self.n_edges * self.n_interior() + self.n_vertices
    }

    /// Row of interior grid point `k` (1..=N_x-2) on `edge`.
    pub fn interior_row(&self, edge: usize, k: usize) -> usize {
        debug_assert!(k >= 1 && k + 1 < self.n_x);
        edge * self.n_interior() + (k - 1)
    }

    pub fn node_row(&self, vertex: usize) -> usize {
        self.n_edges * self.n_interior() + vertex
    }

    /// Row holding grid point `k` of `edge`, resolving endpoints to their vertex.
    pub fn point_row(&self, g: &MetricGraph, edge: usize, k: usize) -> usize {
        let e = g.edges()[edge];
        if k == 0 {
            self.node_row(e.tail)
        } else if k == self.n_x - 1 {
            self.node_row(e.head)
        } else {
            self.interior_row(edge, k)
        }
    }

    pub fn h<T: Real>(&self) -> T {
        grid_spacing(self.n_x)
    }

    /// Quadrature weights of the discrete inner product: `h` on interior rows, 1 on nodes.
    pub fn weights<T: Real>(&self) -> DVector<T> {
        let h = self.h::<T>();
        let ni = self.n_edges * self.n_interior();
        DVector::from_fn(self.dim(), |i, _| if i < ni { h } else { T::one() })
    }

    /// Packs an edge field and node values into a `(u, d)` vector.
    pub fn pack<T: Real>(&self, u: &EdgeField<T>, d: &DVector<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.dim());
        for j in 0..self.n_edges {
            for k in 1..self.n_x - 1 {
                out[self.interior_row(j, k)] = u[(j, k)];
            }
        }
        for a in 0..self.n_vertices {
            out[self.node_row(a)] = d[a];
        }
        out
    }

    /// Inverse of [`GridLayout::pack`]; edge endpoints are filled from the node values.
    pub fn unpack<T: Real>(&self, g: &MetricGraph, x: &DVector<T>) -> (EdgeField<T>, DVector<T>) {
        let u = DMatrix::from_fn(self.n_edges, self.n_x, |j, k| x[self.point_row(g, j, k)]);
        let d = DVector::from_fn(self.n_vertices, |a, _| x[self.node_row(a)]);
        (u, d)
    }
}

/// Per-edge operator `u -> (c u')'` on interior rows.
///
/// Returns an `(N_x - 2) x N_x` matrix whose columns are all grid points of the
/// edge; columns 0 and `N_x - 1` are the couplings to the endpoint nodes.
pub fn assemble_edge_operator<T: Real>(coeff: &EdgeCoefficient<T>, edge: usize) -> DMatrix<T> {
    let n_x = coeff.n_x();
    let h = coeff.h();
    let h2 = h * h;
    let mut block = DMatrix::zeros(n_x - 2, n_x);
    for k in 1..n_x - 1 {
        let left = coeff.midpoint(edge, k - 1);
        let right = coeff.midpoint(edge, k);
        block[(k - 1, k - 1)] = left / h2;
        block[(k - 1, k)] = -(left + right) / h2;
        block[(k - 1, k + 1)] = right / h2;
    }
    block
}

/// Common endpoint value at every vertex, checked across all incident edges.
pub fn boundary_trace<T: Real>(u: &EdgeField<T>, g: &MetricGraph) -> Result<DVector<T>> {
    check_field_shape(u, g)?;
    let last = u.ncols() - 1;
    let tol = T::lit(1e-12);
    let mut d: Vec<Option<T>> = vec![None; g.n_vertices()];
    for (j, e) in g.edges().iter().enumerate() {
        for (v, value) in [(e.tail, u[(j, 0)]), (e.head, u[(j, last)])] {
            match d[v] {
                None => d[v] = Some(value),
                Some(prev) => {
                    let gap = (prev - value).abs();
                    if !(gap <= tol * (T::one() + prev.abs())) {
                        return Err(Error::TraceMismatch { vertex: v + 1, gap: gap.as_f64() });
                    }
                }
            }
        }
    }
    Ok(DVector::from_iterator(d.len(), d.into_iter().map(|x| x.unwrap_or_else(T::zero))))
}

fn check_field_shape<T: Real>(u: &EdgeField<T>, g: &MetricGraph) -> Result<()> {
    if u.nrows() != g.n_edges() || u.ncols() < 3 {
        return Err(Error::ShapeMismatch(format!(
            "edge field is {}x{}, graph has {} edges",
            u.nrows(),
            u.ncols(),
            g.n_edges()
        )));
    }
    Ok(())
}

/// Second-order one-sided derivatives `(u'_j(0), u'_j(1))` for every edge.
pub fn endpoint_derivatives<T: Real>(u: &EdgeField<T>) -> Vec<(T, T)> {
    let n = u.ncols() - 1;
    let two_h = T::lit(2.0) * grid_spacing::<T>(u.ncols());
    let (three, four) = (T::lit(3.0), T::lit(4.0));
    (0..u.nrows())
        .map(|j| {
            let left = (-three * u[(j, 0)] + four * u[(j, 1)] - u[(j, 2)]) / two_h;
            let right = (three * u[(j, n)] - four * u[(j, n - 1)] + u[(j, n - 2)]) / two_h;
            (left, right)
        })
        .collect()
}

/// Node flux `sum_j phi_{alpha j} c_j(v_alpha) u'_j(v_alpha)`.
///
/// With `phi = +1` at the tail this is the inward flux `c u'(0)` at a tail and
/// `-c u'(1)` at a head, so positive values drive the node value up.
pub fn flux_operator<T: Real>(
    u: &EdgeField<T>,
    g: &MetricGraph,
    coeff: &EdgeCoefficient<T>,
) -> Result<DVector<T>> {
    check_field_shape(u, g)?;
    if coeff.n_edges() != g.n_edges() || coeff.n_x() != u.ncols() {
        return Err(Error::ShapeMismatch("coefficient grid does not match edge field".into()));
    }
    let last = u.ncols() - 1;
    let mut flux = DVector::zeros(g.n_vertices());
    for (j, (e, (left, right))) in g.edges().iter().zip(endpoint_derivatives(u)).enumerate() {
        flux[e.tail] += coeff.sample(j, 0) * left;
        flux[e.head] -= coeff.sample(j, last) * right;
    }
    Ok(flux)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AfrakOptions {
    /// Drops the flux from the node rows, leaving each node an isolated ODE.
    pub zero_flux: bool,
}

/// The discretized `A_afrak` acting on `(u, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledAfrak<T: Real> {
    pub matrix: DMatrix<T>,
    pub layout: GridLayout,
    pub weights: DVector<T>,
}

/// Assembles `A_afrak = [[A_m, 0], [C, B]]` with continuity built into the index map.
///
/// Node rows use the two-point conservative flux `c_{1/2} (u_1 - d) / h`, the
/// exact adjoint of the interior stencil under the weighted inner product.
pub fn assemble_a_frak<T: Real>(
    g: &MetricGraph,
    coeff: &EdgeCoefficient<T>,
    b: &NodeMatrixB<T>,
    options: AfrakOptions,
) -> Result<AssembledAfrak<T>> {
    if coeff.n_edges() != g.n_edges() {
        return Err(Error::ShapeMismatch(format!(
            "{} coefficient rows for {} edges",
            coeff.n_edges(),
            g.n_edges()
        )));
    }
    if b.len() != g.n_vertices() {
        return Err(Error::ShapeMismatch(format!("{} entries in B for {} vertices", b.len(), g.n_vertices())));
    }
    let layout = GridLayout::new(g, coeff.n_x())?;
    let n_x = layout.n_x;
    let h = layout.h::<T>();
    let mut a = DMatrix::zeros(layout.dim(), layout.dim());
    for j in 0..g.n_edges() {
        let block = assemble_edge_operator(coeff, j);
        for k in 1..n_x - 1 {
            let row = layout.interior_row(j, k);
            for col in k - 1..=k + 1 {
                a[(row, layout.point_row(g, j, col))] += block[(k - 1, col)];
            }
        }
        if !options.zero_flux {
            let e = g.edges()[j];
            let tail_c = coeff.midpoint(j, 0) / h;
            let head_c = coeff.midpoint(j, n_x - 2) / h;
            let (tail, head) = (layout.node_row(e.tail), layout.node_row(e.head));
            a[(tail, layout.point_row(g, j, 1))] += tail_c;
            a[(tail, tail)] -= tail_c;
            a[(head, layout.point_row(g, j, n_x - 2))] += head_c;
            a[(head, head)] -= head_c;
        }
    }
    for (alpha, &bv) in b.diag().iter().enumerate() {
        let row = layout.node_row(alpha);
        a[(row, row)] += bv;
    }
    let weights = layout.weights();
    Ok(AssembledAfrak { matrix: a, layout, weights })
}

impl<T: Real> AssembledAfrak<T> {
    /// `max |W A - (W A)^T| / max |W A|`, zero for an exactly self-adjoint matrix.
    pub fn symmetry_residual(&self) -> T {
        let wa = weighted_rows(&self.matrix, &self.weights);
        let scale = wa.amax();
        if scale == T::zero() {
            return T::zero();
        }
        (&wa - wa.transpose()).amax() / scale
    }

    /// `max_i |(w^T A)_i|`, zero when total mass is conserved.
    pub fn mass_residual(&self) -> T {
        (self.weights.transpose() * &self.matrix).amax()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

fn weighted_rows<T: Real>(m: &DMatrix<T>, w: &DVector<T>) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| w[i] * m[(i, j)])
}

/// Weighted inner product `sum_i w_i x_i y_i`.
pub fn weighted_dot<T: Real>(w: &DVector<T>, x: &DVector<T>, y: &DVector<T>) -> T {
    w.iter().zip(x.iter().zip(y.iter())).fold(T::zero(), |acc, (&wi, (&xi, &yi))| acc + wi * xi * yi)
}

/// Grid derivative: central differences inside, second-order one-sided at the ends.
fn grid_derivative<T: Real>(u: &EdgeField<T>, j: usize) -> Vec<T> {
    let n_x = u.ncols();
    let two_h = T::lit(2.0) * grid_spacing::<T>(n_x);
    let (left, right) = endpoint_derivatives(&u.rows(j, 1).into_owned())[0];
    let mut du = vec![left; n_x];
    for k in 1..n_x - 1 {
        du[k] = (u[(j, k + 1)] - u[(j, k - 1)]) / two_h;
    }
    du[n_x - 1] = right;
    du
}

/// `sum_j int c_j u'_j v'_j dx + sum_alpha b_alpha d^alpha h^alpha` by the trapezoid rule.
pub fn form_energy<T: Real>(
    g: &MetricGraph,
    coeff: &EdgeCoefficient<T>,
    b: &NodeMatrixB<T>,
    x: &EdgeField<T>,
    y: &EdgeField<T>,
) -> Result<T> {
    let dx = boundary_trace(x, g)?;
    let dy = boundary_trace(y, g)?;
    if x.shape() != y.shape() || coeff.n_x() != x.ncols() {
        return Err(Error::ShapeMismatch("form arguments live on different grids".into()));
    }
    let n_x = x.ncols();
    let h = grid_spacing::<T>(n_x);
    let half = T::lit(0.5);
    let mut total = T::zero();
    for j in 0..g.n_edges() {
        let (du, dv) = (grid_derivative(x, j), grid_derivative(y, j));
        for k in 0..n_x {
            let w = if k == 0 || k == n_x - 1 { half * h } else { h };
            total += w * coeff.sample(j, k) * du[k] * dv[k];
        }
    }
    for (alpha, &bv) in b.diag().iter().enumerate() {
        total += bv * dx[alpha] * dy[alpha];
    }
    Ok(total)
}
