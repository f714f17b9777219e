//! Fixtures shared by the benchmarks.

use dmfsgd::{Coordinate, DMatrix, PartialMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n x n` matrix `100 * U V^T` with `U, V` of rank `r` drawn from `U[0, 1)`.
pub fn low_rank(n: usize, r: usize, seed: u64) -> PartialMatrix {
    let mut g = rng(seed);
    let u: Vec<Coordinate> = (0..n).map(|_| Coordinate::random(r, false, &mut g)).collect();
    PartialMatrix::from_fn(n, |i, j| Some(100.0 * dmfsgd::model::dot(&u[i].x, &u[j].y)))
        .expect("finite entries")
}

pub fn dense(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut g = rng(seed);
    DMatrix::from_fn(rows, cols, |_, _| g.random_range(0.0..100.0))
}
