//! Reference methods the decentralized factorization is compared against:
//! truncated SVD of a complete matrix (the optimal rank-r fit) and the Vivaldi
//! Euclidean embedding update.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

fn max_iterations(m: &DMatrix<f64>) -> usize {
    200 * m.nrows().max(m.ncols()).max(1)
}

/// Singular values in nonincreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let iterations = max_iterations(m);
    let svd = m
        .clone()
        .try_svd(false, false, f64::EPSILON, iterations)
        .ok_or(Error::SvdNoConvergence { iterations })?;
    Ok(svd.singular_values.iter().copied().collect())
}

/// Rank-`r` factors `X = U S_r^{1/2}`, `Y = V S_r^{1/2}` so that `X Y^T` is the
/// best rank-`r` approximation in Frobenius norm.
#[derive(Debug, Clone)]
pub struct LowRank {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Full spectrum of the input, nonincreasing.
    pub singular_values: Vec<f64>,
}

impl LowRank {
    pub fn rank(&self) -> usize {
        self.x.ncols()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.x * self.y.transpose()
    }

    /// `sqrt(sum_{i > r} sigma_i^2)`, the Frobenius error the factors attain.
    pub fn tail_norm(&self) -> f64 {
        self.singular_values[self.rank()..]
            .iter()
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt()
    }
}

pub fn svd_lowrank(m: &DMatrix<f64>, r: usize) -> Result<LowRank> {
    let k = m.nrows().min(m.ncols());
    if r < 1 || r > k {
        return Err(Error::contract(format!("rank must lie in 1..={k}, got {r}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("matrix contains non-finite entries"));
    }
    let iterations = max_iterations(m);
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, iterations)
        .ok_or(Error::SvdNoConvergence { iterations })?;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();

    let mut x = u.columns(0, r).into_owned();
    let mut y = v_t.rows(0, r).transpose();
    for (c, s) in sigma.iter().take(r).enumerate() {
        let root = s.sqrt();
        x.column_mut(c).scale_mut(root);
        y.column_mut(c).scale_mut(root);
    }
    Ok(LowRank {
        x,
        y,
        singular_values: sigma,
    })
}

/// Euclidean coordinate with an optional nonnegative height.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanCoord {
    pub x: Vec<f64>,
    pub height: Option<f64>,
}

impl EuclideanCoord {
    pub fn new(x: Vec<f64>) -> Self {
        Self { x, height: None }
    }

    pub fn with_height(mut self, height: f64) -> Self {
        self.height = Some(height.max(0.0));
        self
    }

    /// Entries uniform in `[0, 1)`; the height, if any, starts at 0.
    pub fn random<R: Rng + ?Sized>(dim: usize, with_height: bool, rng: &mut R) -> Self {
        Self {
            x: (0..dim).map(|_| rng.random::<f64>()).collect(),
            height: with_height.then_some(0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite()) && self.height.is_none_or(f64::is_finite)
    }
}

fn planar_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Predicted distance: Euclidean norm of the difference plus both heights.
pub fn euclidean_distance(a: &EuclideanCoord, b: &EuclideanCoord) -> f64 {
    planar_distance(&a.x, &b.x) + (a.height.unwrap_or(0.0) + b.height.unwrap_or(0.0))
}

/// One Vivaldi move of `xi` toward (or away from) `xj` to fit `d_ij`:
/// `xi' = xi + eta * (d - dhat) * u(xi - xj)`.
///
/// When the two points coincide the direction is a random unit vector. With heights
/// enabled, `h_i' = max(0, h_i + eta * (d - dhat) / 2)`.
pub fn vivaldi_step<R: Rng + ?Sized>(
    xi: &EuclideanCoord,
    xj: &EuclideanCoord,
    d_ij: f64,
    eta: f64,
    rng: &mut R,
) -> Result<EuclideanCoord> {
    if xi.dim() != xj.dim() || xi.dim() == 0 {
        return Err(Error::contract(format!(
            "dimension mismatch: {} vs {}",
            xi.dim(),
            xj.dim()
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::contract("learning rate must be > 0"));
    }
    let planar = planar_distance(&xi.x, &xj.x);
    let residual = d_ij - euclidean_distance(xi, xj);
    let direction: Vec<f64> = if planar > 0.0 {
        xi.x.iter().zip(&xj.x).map(|(a, b)| (a - b) / planar).collect()
    } else {
        random_unit(xi.dim(), rng)
    };
    let x = xi
        .x
        .iter()
        .zip(&direction)
        .map(|(v, u)| v + eta * residual * u)
        .collect();
    let height = xi.height.map(|h| (h + 0.5 * eta * residual).max(0.0));
    let next = EuclideanCoord { x, height };
    if !next.is_finite() {
        return Err(Error::Overflow { eta });
    }
    Ok(next)
}

fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_one_is_reproduced() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let lr = svd_lowrank(&m, 1).unwrap();
        assert!((lr.reconstruct() - &m).norm() < 1e-10);
        assert!(lr.tail_norm() < 1e-10);
    }

    #[test]
    fn full_rank_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DMatrix::from_fn(6, 6, |_, _| rng.random::<f64>() * 100.0);
        let lr = svd_lowrank(&m, 6).unwrap();
        assert!((lr.reconstruct() - &m).norm() < 1e-9);
    }

    #[test]
    fn rank_bounds_are_checked() {
        let m = DMatrix::<f64>::identity(3, 3);
        assert!(svd_lowrank(&m, 0).is_err());
        assert!(svd_lowrank(&m, 4).is_err());
    }

    #[test]
    fn vivaldi_moves_away_when_too_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xi = EuclideanCoord::new(vec![0.0, 0.0]);
        let xj = EuclideanCoord::new(vec![3.0, 4.0]);
        let next = vivaldi_step(&xi, &xj, 10.0, 0.1, &mut rng).unwrap();
        assert!((next.x[0] + 0.3).abs() < 1e-12 && (next.x[1] + 0.4).abs() < 1e-12);
    }

    #[test]
    fn vivaldi_zero_residual_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xi = EuclideanCoord::new(vec![0.0, 0.0]);
        let xj = EuclideanCoord::new(vec![3.0, 4.0]);
        let next = vivaldi_step(&xi, &xj, 5.0, 0.1, &mut rng).unwrap();
        assert_eq!(next, xi);
    }

    #[test]
    fn vivaldi_coincident_points_take_a_unit_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = EuclideanCoord::new(vec![1.0, 1.0, 1.0]);
        let next = vivaldi_step(&p, &p, 2.0, 0.5, &mut rng).unwrap();
        // residual 2, eta 0.5: moves exactly 1 unit
        assert!((planar_distance(&next.x, &p.x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vivaldi_height_tracks_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xi = EuclideanCoord::new(vec![0.0, 0.0]).with_height(1.0);
        let xj = EuclideanCoord::new(vec![3.0, 4.0]).with_height(0.0);
        // dhat = 5 + 1 = 6, residual 4
        let next = vivaldi_step(&xi, &xj, 10.0, 0.1, &mut rng).unwrap();
        assert!((next.height.unwrap() - 1.2).abs() < 1e-12);
        let shrink = vivaldi_step(&xi, &xj, 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(shrink.height, Some(0.0));
    }

    #[test]
    fn vivaldi_rejects_dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = EuclideanCoord::new(vec![0.0]);
        let b = EuclideanCoord::new(vec![0.0, 1.0]);
        assert!(vivaldi_step(&a, &b, 1.0, 0.1, &mut rng).is_err());
    }
}
