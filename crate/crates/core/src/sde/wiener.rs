//! Counter-based Wiener increments.
//!
//! Each `(master_seed, path, step)` key addresses its own position in a ChaCha8
//! stream, so increments can be regenerated in any order and on any thread.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

/// Words reserved per step; far beyond what one increment consumes.
const WORDS_PER_STEP: u128 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedKey {
    pub master_seed: u64,
    pub path: u64,
    pub step: u64,
}

/// Discrete Wiener increments for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrement<T: Real> {
    /// Space-time white noise, one cell per edge grid point, variance `dt / h`.
    pub dw1: DMatrix<T>,
    /// Node noise, variance `dt`.
    pub dw2: DVector<T>,
}

impl<T: Real> WienerIncrement<T> {
    pub fn zeros(n_edges: usize, n_x: usize, n_vertices: usize) -> Self {
        Self { dw1: DMatrix::zeros(n_edges, n_x), dw2: DVector::zeros(n_vertices) }
    }

    /// Accumulates another increment (used to coarsen fine Brownian paths).
    pub fn add_assign(&mut self, other: &Self) {
        self.dw1 += &other.dw1;
        self.dw2 += &other.dw2;
    }
}

fn keyed_rng(key: SeedKey) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key.master_seed);
    rng.set_stream(key.path);
    rng.set_word_pos(u128::from(key.step) * WORDS_PER_STEP);
    rng
}

/// Draws `dW1 ~ N(0, dt/h)` on an `n_edges x n_x` grid and `dW2 ~ N(0, dt)` per node.
pub fn sample_increment<T: Real>(
    key: SeedKey,
    n_edges: usize,
    n_x: usize,
    n_vertices: usize,
    dt: T,
    h: T,
) -> WienerIncrement<T> {
    let mut rng = keyed_rng(key);
    let s1 = (dt / h).sqrt();
    let s2 = dt.sqrt();
    let mut normal = || T::lit(rng.sample::<f64, _>(StandardNormal));
    let dw1 = DMatrix::from_fn(n_edges, n_x, |_, _| normal() * s1);
    let dw2 = DVector::from_fn(n_vertices, |_, _| normal() * s2);
    WienerIncrement { dw1, dw2 }
}
