//! Node coordinates, loss functions, their (sub)gradients and the distance
//! functions that turn a pair of coordinates into a latency prediction.
//!
//! A node `i` owns an outgoing factor `x_i` and an incoming factor `y_i`; the raw
//! prediction of the distance from `i` to `j` is `x_i . y_j`. Gradients follow the
//! usual convention of dropping the factor 2 of the square loss, so the L2
//! gradient here is the gradient of `(d - dhat)^2 / 2`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Factor pair of one node plus an optional height (ms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub height: Option<f64>,
}

impl Coordinate {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::contract("coordinate rank must be at least 1"));
        }
        if x.len() != y.len() {
            return Err(Error::contract(format!(
                "x has rank {} but y has rank {}",
                x.len(),
                y.len()
            )));
        }
        Ok(Self { x, y, height: None })
    }

    pub fn with_height(mut self, height: f64) -> Result<Self> {
        if !(height >= 0.0) || !height.is_finite() {
            return Err(Error::contract(format!("height must be finite and >= 0, got {height}")));
        }
        self.height = Some(height);
        Ok(self)
    }

    /// Entries drawn uniformly from `[0, 1)`; the height, if requested, starts at 0.
    pub fn random<R: Rng + ?Sized>(rank: usize, with_height: bool, rng: &mut R) -> Self {
        let x = (0..rank).map(|_| rng.random::<f64>()).collect();
        let y = (0..rank).map(|_| rng.random::<f64>()).collect();
        Self {
            x,
            y,
            height: with_height.then_some(0.0),
        }
    }

    pub fn rank(&self) -> usize {
        self.x.len()
    }

    /// Height in ms, 0 when the coordinate carries none.
    pub fn height_or_zero(&self) -> f64 {
        self.height.unwrap_or(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
            && self.height.is_none_or(f64::is_finite)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.x.iter().chain(&self.y).all(|&v| v >= 0.0) && self.height.is_none_or(|h| h >= 0.0)
    }

    /// Smallest entry across `x`, `y` and the height.
    pub fn min_entry(&self) -> f64 {
        self.x
            .iter()
            .chain(&self.y)
            .chain(self.height.as_ref())
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum LossKind {
    /// Square loss `(d - dhat)^2`.
    L2,
    /// Absolute loss `|d - dhat|`, robust to outliers.
    #[default]
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum DistanceModel {
    /// `x_i . y_j`
    #[default]
    Raw,
    /// `(x_i . y_j + x_j . y_i) / 2`
    Symmetric,
    /// Symmetric value plus `h_i + h_j`.
    HeightSymmetric,
}

impl DistanceModel {
    pub fn uses_height(self) -> bool {
        matches!(self, DistanceModel::HeightSymmetric)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::contract(format!(
            "rank mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Predicted distance from the node owning `ci` to the node owning `cj`.
pub fn predict(model: DistanceModel, ci: &Coordinate, cj: &Coordinate) -> Result<f64> {
    check_same_len(&ci.x, &cj.y)?;
    check_same_len(&ci.y, &cj.x)?;
    if model.uses_height() && (ci.height.is_none() || cj.height.is_none()) {
        return Err(Error::contract(
            "height-augmented prediction requires a height on both coordinates",
        ));
    }
    Ok(predict_unchecked(model, ci, cj))
}

pub(crate) fn predict_unchecked(model: DistanceModel, ci: &Coordinate, cj: &Coordinate) -> f64 {
    match model {
        DistanceModel::Raw => dot(&ci.x, &cj.y),
        DistanceModel::Symmetric => 0.5 * (dot(&ci.x, &cj.y) + dot(&cj.x, &ci.y)),
        DistanceModel::HeightSymmetric => {
            0.5 * (dot(&ci.x, &cj.y) + dot(&cj.x, &ci.y))
                + ci.height_or_zero()
                + cj.height_or_zero()
        }
    }
}

pub fn loss(kind: LossKind, d: f64, dhat: f64) -> f64 {
    match kind {
        LossKind::L2 => (d - dhat) * (d - dhat),
        LossKind::L1 => (d - dhat).abs(),
    }
}

/// Sign with `sign(0) = 0`, the subgradient chosen at the L1 kink.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The multiplier applied to the descent direction: the residual itself for L2,
/// its sign for L1.
pub fn residual_factor(kind: LossKind, d: f64, dhat: f64) -> f64 {
    match kind {
        LossKind::L2 => d - dhat,
        LossKind::L1 => sign(d - dhat),
    }
}

/// (Sub)gradient of the loss of `d_ij` against `x_i . y_j` with respect to `x_i`.
pub fn gradient_x(kind: LossKind, d: f64, xi: &[f64], yj: &[f64]) -> Result<Vec<f64>> {
    check_same_len(xi, yj)?;
    let factor = residual_factor(kind, d, dot(xi, yj));
    Ok(yj.iter().map(|v| -factor * v).collect())
}

/// (Sub)gradient of the loss of `d_ji` against `x_j . y_i` with respect to `y_i`.
pub fn gradient_y(kind: LossKind, d: f64, xj: &[f64], yi: &[f64]) -> Result<Vec<f64>> {
    check_same_len(xj, yi)?;
    let factor = residual_factor(kind, d, dot(xj, yi));
    Ok(xj.iter().map(|v| -factor * v).collect())
}

/// Regularized local loss of one node: `sum_j w_j * loss(d_j, dhat_j) + lambda * |own|^2`.
///
/// `terms` yields `(weight, measured, predicted)` triples. `own` is the factor being
/// optimized (`x_i` for the outgoing loss, `y_i` for the incoming one).
pub fn local_loss<I>(kind: LossKind, terms: I, own: &[f64], lambda: f64) -> f64
where
    I: IntoIterator<Item = (f64, f64, f64)>,
{
    let data: f64 = terms
        .into_iter()
        .map(|(w, d, dhat)| w * loss(kind, d, dhat))
        .sum();
    data + lambda * dot(own, own)
}
