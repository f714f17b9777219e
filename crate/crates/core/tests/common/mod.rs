#![allow(dead_code)]

use dmfsgd::{DMatrix, PartialMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `X Y^T` with `X`, `Y` entries uniform in `[0, 1)`: exactly rank `r`,
/// nonnegative, asymmetric.
pub fn synthetic_low_rank(n: usize, r: usize, seed: u64) -> PartialMatrix {
    let mut g = rng(seed);
    let x = DMatrix::from_fn(n, r, |_, _| g.random::<f64>());
    let y = DMatrix::from_fn(n, r, |_, _| g.random::<f64>());
    let d = &x * y.transpose();
    PartialMatrix::from_fn(n, |i, j| Some(d[(i, j)])).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, g: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| g.random::<f64>() * 2.0 - 1.0)
}

/// One-sided Jacobi SVD (Hestenes). Returns singular values, nonincreasing.
pub fn jacobi_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = m.shape();
    let mut a: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| m[(r, c)]).collect()).collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha: f64 = a[p].iter().map(|v| v * v).sum();
                let beta: f64 = a[q].iter().map(|v| v * v).sum();
                let gamma: f64 = a[p].iter().zip(&a[q]).map(|(u, v)| u * v).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let (u, v) = (a[p][r], a[q][r]);
                    a[p][r] = c * u - s * v;
                    a[q][r] = s * u + c * v;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = a.iter().map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv.truncate(rows.min(cols));
    sv
}
