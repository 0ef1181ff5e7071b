//! Matrix exponentials, the explicit unperturbed semigroup, Dyson-Phillips
//! truncations and semigroup diagnostics.

use nalgebra::{DMatrix, DVector, Schur};

use crate::delay::{grid_steps, BlockGenerator, FullLayout};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::AssembledAfrak;

/// How a [`SemigroupOperator`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Expm,
    ExplicitBlocks,
    DysonPhillips(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupOperator<T: Real> {
    pub matrix: DMatrix<T>,
    pub t: T,
    pub provenance: Provenance,
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest 1-norm for which the degree-13 Padé approximant is accurate to unit roundoff.
const THETA13: f64 = 5.371920351148152;

fn norm1<T: Real>(m: &DMatrix<T>) -> T {
    m.column_iter()
        .map(|c| c.iter().fold(T::zero(), |acc, &x| acc + x.abs()))
        .fold(T::zero(), |a, b| a.max(b))
}

/// `e^M` by scaling and squaring with the order-13 diagonal Padé approximant.
pub fn expm_matrix<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch(format!("expm of a {}x{} matrix", m.nrows(), m.ncols())));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteEntries("expm input"));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let norm = norm1(m).as_f64();
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = m * T::lit(0.5f64.powi(s));
    let b = |i: usize| T::lit(PADE13[i]);
    let id = DMatrix::<T>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9)) + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8)) + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);
    let lu = (&v - &u).lu();
    let mut r = lu.solve(&(&v + &u)).ok_or(Error::NonFiniteEntries("expm Pade denominator"))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteEntries("expm result"));
    }
    Ok(r)
}

/// `e^{tM}` tagged with its time.
pub fn expm<T: Real>(m: &DMatrix<T>, t: T) -> Result<SemigroupOperator<T>> {
    if !(t >= T::zero()) {
        return Err(Error::InvalidArgument(format!("semigroup time must be >= 0, got {}", t.as_f64())));
    }
    Ok(SemigroupOperator { matrix: expm_matrix(&(m * t))?, t, provenance: Provenance::Expm })
}

/// Largest real part of the eigenvalues of `m`.
pub fn spectral_abscissa<T: Real>(m: &DMatrix<T>) -> Result<T> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch("spectral abscissa of a non-square matrix".into()));
    }
    if m.nrows() == 0 {
        return Ok(T::zero());
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteEntries("spectral abscissa input"));
    }
    // Long Jordan chains from the delay transport can stall QR deflation at
    // machine precision; a slightly looser deflation test converges.
    let eps = T::default_epsilon();
    let schur = [T::one(), T::lit(64.0), T::lit(4096.0)]
        .into_iter()
        .find_map(|k| Schur::try_new(m.clone(), eps * k, 10_000))
        .ok_or(Error::EigenFailure)?;
    let eig = schur.complex_eigenvalues();
    Ok(eig.iter().map(|z| z.re).fold(T::min_value().unwrap_or(-T::max_value().unwrap()), |a, b| a.max(b)))
}

/// Spectral abscissa of a matrix that is self-adjoint under the weights `w`,
/// computed from the symmetric similarity transform `W^1/2 M W^-1/2`.
pub fn weighted_symmetric_abscissa<T: Real>(m: &DMatrix<T>, w: &DVector<T>) -> T {
    let s = weighted_similarity(m, w);
    let sym = (&s + s.transpose()) * T::lit(0.5);
    sym.symmetric_eigenvalues().max()
}

fn weighted_similarity<T: Real>(m: &DMatrix<T>, w: &DVector<T>) -> DMatrix<T> {
    let sq: Vec<T> = w.iter().map(|x| x.sqrt()).collect();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| sq[i] * m[(i, j)] / sq[j])
}

/// Operator norm induced by the weighted inner product: `|W^1/2 M W^-1/2|_2`.
pub fn weighted_norm<T: Real>(m: &DMatrix<T>, w: &DVector<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    weighted_similarity(m, w).singular_values().max()
}

/// Precomputed node rows of `T_afrak(j dtheta)` for `j` in `first..=last`.
struct NodeRowTable<T: Real> {
    first: usize,
    rows: Vec<DMatrix<T>>,
}

impl<T: Real> NodeRowTable<T> {
    fn new(a: &AssembledAfrak<T>, dtheta: T, first: usize, last: usize) -> Result<Self> {
        let g = a.layout;
        let node_rows = |m: &DMatrix<T>| m.rows(g.node_row(0), g.n_vertices).into_owned();
        let step = expm_matrix(&(&a.matrix * dtheta))?;
        let mut current = node_rows(&expm_matrix(&(&a.matrix * (dtheta * T::from_count(first))))?);
        let mut rows = Vec::with_capacity(last + 1 - first);
        for _ in first..=last {
            let next = &current * &step;
            rows.push(std::mem::replace(&mut current, next));
        }
        Ok(Self { first, rows })
    }

    fn get(&self, j: usize) -> &DMatrix<T> {
        &self.rows[j - self.first]
    }
}

/// Explicit `T_0(t)` for `t = k dtheta`, given `T_afrak(t)` and the node-row table.
///
/// Slot `i` copies slot `i + k` while that stays inside the window; slots fed
/// after time 0 take the node rows of `T_afrak((i + k - N) dtheta)`.
fn explicit_blocks<T: Real>(
    layout: &FullLayout,
    t_afrak: &DMatrix<T>,
    table: &NodeRowTable<T>,
    k: usize,
) -> DMatrix<T> {
    let (da, dim, n_theta) = (layout.dim_a(), layout.dim(), layout.n_theta);
    let mut out = DMatrix::zeros(dim, dim);
    out.view_mut((0, 0), (da, da)).copy_from(t_afrak);
    for alpha in 0..layout.grid.n_vertices {
        for i in 0..=n_theta {
            let row = layout.segment_row(alpha, i);
            if i + k <= n_theta {
                out[(row, layout.segment_row(alpha, i + k))] = T::one();
            } else {
                let src = table.get(i + k - n_theta);
                out.view_mut((row, 0), (1, da)).copy_from(&src.row(alpha));
            }
        }
    }
    out
}

/// Unperturbed semigroup `T_0(t)` assembled block by block.
///
/// The segment-to-segment block is the exact left shift, so it vanishes
/// identically once `t > r`.
pub fn explicit_unperturbed<T: Real>(
    a: &AssembledAfrak<T>,
    n_theta: usize,
    r: T,
    t: T,
) -> Result<SemigroupOperator<T>> {
    if n_theta == 0 {
        return Err(Error::InvalidArgument("n_theta must be at least 1".into()));
    }
    let dtheta = r / T::from_count(n_theta);
    let k = grid_steps(t, dtheta)?;
    let layout = FullLayout { grid: a.layout, n_theta };
    let t_afrak = expm_matrix(&(&a.matrix * t))?;
    let first = k.saturating_sub(n_theta).max(1);
    let table = NodeRowTable::new(a, dtheta, first, k.max(first))?;
    Ok(SemigroupOperator {
        matrix: explicit_blocks(&layout, &t_afrak, &table, k),
        t,
        provenance: Provenance::ExplicitBlocks,
    })
}

/// Which unperturbed semigroup the Dyson-Phillips terms are built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DysonBase {
    /// Exact-shift blocks of [`explicit_unperturbed`]; quadrature step `dtheta`.
    ExplicitBlocks,
    /// `e^{s A_0}`; quadrature step `dtheta / substeps`.
    MatrixExponential { substeps: usize },
}

/// Partial sums `sum_{k <= N} T^k(t)` for `N = 0..=n_terms`.
///
/// `A_1 = L R` has rank `n`, so each term is carried as `D x n` slices
/// `T^k(tau) L` and only the final convolution is formed at full size.
pub fn dyson_phillips_partial_sums<T: Real>(
    gen: &BlockGenerator<T>,
    a: &AssembledAfrak<T>,
    t: T,
    n_terms: usize,
    base: DysonBase,
) -> Result<Vec<SemigroupOperator<T>>> {
    let layout = gen.layout;
    let dtheta = gen.dtheta();
    let (n, n_theta, dim) = (layout.grid.n_vertices, layout.n_theta, layout.dim());
    let substeps = match base {
        DysonBase::ExplicitBlocks => 1,
        DysonBase::MatrixExponential { substeps } => substeps.max(1),
    };
    let delta = dtheta / T::from_count(substeps);
    let steps = grid_steps(t, delta)?;

    let t0: Vec<DMatrix<T>> = match base {
        DysonBase::ExplicitBlocks => (0..=steps)
            .map(|k| explicit_unperturbed(a, n_theta, gen.r, dtheta * T::from_count(k)).map(|op| op.matrix))
            .collect::<Result<_>>()?,
        DysonBase::MatrixExponential { .. } => {
            let step = expm_matrix(&(&gen.a0 * delta))?;
            let mut out = Vec::with_capacity(steps + 1);
            out.push(DMatrix::identity(dim, dim));
            for k in 1..=steps {
                out.push(&out[k - 1] * &step);
            }
            out
        }
    };

    let mut left = DMatrix::zeros(dim, n);
    let mut right = DMatrix::zeros(n, dim);
    for alpha in 0..n {
        left[(layout.grid.node_row(alpha), alpha)] = T::one();
        left[(layout.segment_row(alpha, n_theta), alpha)] = T::one();
        for (i, &w) in gen.phi_weights.iter().enumerate() {
            right[(alpha, layout.segment_row(alpha, i))] = w;
        }
    }
    let p: Vec<DMatrix<T>> = t0.iter().map(|m| &right * m).collect();
    let small: Vec<DMatrix<T>> = p.iter().map(|m| m * &left).collect();
    let mut q: Vec<DMatrix<T>> = t0.iter().map(|m| m * &left).collect();

    let half = T::lit(0.5);
    let trap = |j: usize, i: usize| if i == 0 || i == j { delta * half } else { delta };

    let mut sum = t0[steps].clone();
    let mut out = vec![SemigroupOperator { matrix: sum.clone(), t, provenance: Provenance::DysonPhillips(0) }];
    for level in 1..=n_terms {
        let mut term = DMatrix::zeros(dim, dim);
        if steps > 0 {
            for i in 0..=steps {
                term += (&q[steps - i] * &p[i]) * trap(steps, i);
            }
        }
        sum += &term;
        out.push(SemigroupOperator { matrix: sum.clone(), t, provenance: Provenance::DysonPhillips(level) });
        if level < n_terms {
            q = (0..=steps)
                .map(|j| {
                    let mut acc = DMatrix::zeros(dim, n);
                    if j > 0 {
                        for i in 0..=j {
                            acc += (&q[j - i] * &small[i]) * trap(j, i);
                        }
                    }
                    acc
                })
                .collect();
        }
    }
    Ok(out)
}

/// Truncated Dyson-Phillips series `sum_{k <= n_terms} T^k(t)`.
pub fn dyson_phillips<T: Real>(
    gen: &BlockGenerator<T>,
    a: &AssembledAfrak<T>,
    t: T,
    n_terms: usize,
    base: DysonBase,
) -> Result<SemigroupOperator<T>> {
    let mut sums = dyson_phillips_partial_sums(gen, a, t, n_terms, base)?;
    Ok(sums.pop().expect("partial sums always contain the zeroth term"))
}

/// `|T(t+s) - T(t) T(s)| / |T(t+s)|` in the weighted norm, with `T(t) = e^{tM}`.
pub fn check_semigroup_property<T: Real>(m: &DMatrix<T>, w: &DVector<T>, t: T, s: T) -> Result<T> {
    let ts = expm(m, t + s)?.matrix;
    let prod = expm(m, t)?.matrix * expm(m, s)?.matrix;
    let denom = weighted_norm(&ts, w);
    Ok(weighted_norm(&(&ts - prod), w) / denom)
}
