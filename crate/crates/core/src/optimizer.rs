//! Coordinate update rules: single-sample and minibatch SGD for the L2 and L1
//! losses, the backtracking line search that picks the learning rate, and the
//! nonnegativity projection.
//!
//! All functions are pure; callers own coordinate state.

use crate::error::{Error, Result};
use crate::model::{dot, local_loss, residual_factor, Coordinate, DistanceModel, LossKind};

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateConfig {
    /// Regularization coefficient.
    pub lambda: f64,
    pub rank: usize,
    pub loss: LossKind,
    /// Project coordinates onto the nonnegative orthant after every update.
    pub nonneg: bool,
    /// First learning rate tried by the line search.
    pub eta_init: f64,
    pub max_line_search: u32,
    /// Relative line-search slack; a trial is accepted when its loss is below
    /// `l0 + delta * max(1, l0)`.
    pub delta: f64,
    pub model: DistanceModel,
}

impl UpdateConfig {
    pub const DEFAULT_LAMBDA: f64 = 1.0;
    pub const DEFAULT_RANK: usize = 10;
    pub const DEFAULT_MAX_LINE_SEARCH: u32 = 20;
    pub const DEFAULT_DELTA: f64 = 1e-4;

    /// Defaults for the given loss: `eta_init` is 1e-3 for L2 and 1e-2 for L1.
    pub fn for_loss(loss: LossKind) -> Self {
        Self {
            lambda: Self::DEFAULT_LAMBDA,
            rank: Self::DEFAULT_RANK,
            loss,
            nonneg: true,
            eta_init: default_eta(loss),
            max_line_search: Self::DEFAULT_MAX_LINE_SEARCH,
            delta: Self::DEFAULT_DELTA,
            model: DistanceModel::Raw,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank < 1 {
            return Err(Error::config("rank must be >= 1"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::config("lambda must be finite and >= 0"));
        }
        if !(self.eta_init > 0.0) || !self.eta_init.is_finite() {
            return Err(Error::config("eta_init must be finite and > 0"));
        }
        if self.max_line_search < 1 {
            return Err(Error::config("max_line_search must be >= 1"));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::config("delta must be finite and >= 0"));
        }
        Ok(())
    }

    /// Absolute slack allowed over a starting loss `l0`.
    pub fn slack(&self, l0: f64) -> f64 {
        self.delta * l0.max(1.0)
    }
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self::for_loss(LossKind::default())
    }
}

pub fn default_eta(loss: LossKind) -> f64 {
    match loss {
        LossKind::L2 => 1e-3,
        LossKind::L1 => 1e-2,
    }
}

/// What node `i` knows about neighbour `j` when updating.
#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    /// Height of `j`; ignored unless the distance model uses heights.
    pub height: f64,
    /// Measured distance from `i` to `j`.
    pub d_ij: f64,
    /// Measured distance from `j` to `i`.
    pub d_ji: f64,
    pub weight: f64,
}

/// Predicted `d_ij` (outgoing edge of the updating node).
fn outgoing(model: DistanceModel, own: &Coordinate, nb: &Neighbor<'_>) -> f64 {
    match model {
        DistanceModel::Raw => dot(&own.x, nb.y),
        DistanceModel::Symmetric => 0.5 * (dot(&own.x, nb.y) + dot(nb.x, &own.y)),
        DistanceModel::HeightSymmetric => {
            0.5 * (dot(&own.x, nb.y) + dot(nb.x, &own.y)) + own.height_or_zero() + nb.height
        }
    }
}

/// Predicted `d_ji` (incoming edge of the updating node).
fn incoming(model: DistanceModel, own: &Coordinate, nb: &Neighbor<'_>) -> f64 {
    match model {
        DistanceModel::Raw => dot(nb.x, &own.y),
        _ => outgoing(model, own, nb),
    }
}

/// Scale of the factor gradient: the symmetric models split each product in two.
fn direction_scale(model: DistanceModel) -> f64 {
    match model {
        DistanceModel::Raw => 1.0,
        DistanceModel::Symmetric | DistanceModel::HeightSymmetric => 0.5,
    }
}

fn check_neighbors(own: &Coordinate, neighbors: &[Neighbor<'_>]) -> Result<()> {
    let r = own.rank();
    if own.y.len() != r {
        return Err(Error::contract("own x and y differ in rank"));
    }
    for nb in neighbors {
        if nb.x.len() != r || nb.y.len() != r {
            return Err(Error::contract(format!(
                "neighbour rank {} differs from own rank {r}",
                nb.x.len()
            )));
        }
    }
    Ok(())
}

fn finish(mut v: Vec<f64>, eta: f64, nonneg: bool) -> Result<Vec<f64>> {
    if v.iter().any(|e| !e.is_finite()) {
        return Err(Error::Overflow { eta });
    }
    if nonneg {
        project_nonnegative(&mut v);
    }
    Ok(v)
}

/// Replaces negative entries with 0.
pub fn project_nonnegative(v: &mut [f64]) {
    for e in v {
        if *e < 0.0 {
            *e = 0.0;
        }
    }
}

/// Minibatch update of the outgoing factor:
/// `x' = (1 - eta*lambda) x + eta * sum_j w_j * res_ij * y_j`.
pub fn minibatch_x(
    own: &Coordinate,
    neighbors: &[Neighbor<'_>],
    eta: f64,
    cfg: &UpdateConfig,
) -> Result<Vec<f64>> {
    check_neighbors(own, neighbors)?;
    let scale = direction_scale(cfg.model);
    let mut acc = vec![0.0; own.rank()];
    for nb in neighbors {
        let res = residual_factor(cfg.loss, nb.d_ij, outgoing(cfg.model, own, nb));
        let c = nb.weight * res * scale;
        for (a, v) in acc.iter_mut().zip(nb.y) {
            *a += c * v;
        }
    }
    let shrink = 1.0 - eta * cfg.lambda;
    let next = own.x.iter().zip(&acc).map(|(x, a)| shrink * x + eta * a).collect();
    finish(next, eta, cfg.nonneg)
}

/// Minibatch update of the incoming factor:
/// `y' = (1 - eta*lambda) y + eta * sum_j w_j * res_ji * x_j`.
pub fn minibatch_y(
    own: &Coordinate,
    neighbors: &[Neighbor<'_>],
    eta: f64,
    cfg: &UpdateConfig,
) -> Result<Vec<f64>> {
    check_neighbors(own, neighbors)?;
    let scale = direction_scale(cfg.model);
    let mut acc = vec![0.0; own.rank()];
    for nb in neighbors {
        let res = residual_factor(cfg.loss, nb.d_ji, incoming(cfg.model, own, nb));
        let c = nb.weight * res * scale;
        for (a, v) in acc.iter_mut().zip(nb.x) {
            *a += c * v;
        }
    }
    let shrink = 1.0 - eta * cfg.lambda;
    let next = own.y.iter().zip(&acc).map(|(y, a)| shrink * y + eta * a).collect();
    finish(next, eta, cfg.nonneg)
}

/// Height update for the height-augmented model. Heights are not regularized and
/// always stay nonnegative.
pub fn minibatch_height(
    own: &Coordinate,
    neighbors: &[Neighbor<'_>],
    eta: f64,
    cfg: &UpdateConfig,
) -> Result<f64> {
    check_neighbors(own, neighbors)?;
    let acc: f64 = neighbors
        .iter()
        .map(|nb| nb.weight * residual_factor(cfg.loss, nb.d_ij, outgoing(cfg.model, own, nb)))
        .sum();
    let h = own.height_or_zero() + eta * acc;
    if !h.is_finite() {
        return Err(Error::Overflow { eta });
    }
    Ok(h.max(0.0))
}

/// Updates `x` and `y` (and the height, for the height model) simultaneously from
/// the current coordinate.
pub fn minibatch_step(
    own: &Coordinate,
    neighbors: &[Neighbor<'_>],
    eta: f64,
    cfg: &UpdateConfig,
) -> Result<Coordinate> {
    if !(eta > 0.0) {
        return Err(Error::contract("learning rate must be > 0"));
    }
    let x = minibatch_x(own, neighbors, eta, cfg)?;
    let y = minibatch_y(own, neighbors, eta, cfg)?;
    let height = if cfg.model.uses_height() {
        Some(minibatch_height(own, neighbors, eta, cfg)?)
    } else {
        own.height
    };
    Ok(Coordinate { x, y, height })
}

/// Single-sample SGD step of node `i` against neighbour `j`; returns `(x_i', y_i')`.
#[allow(clippy::too_many_arguments)]
pub fn sgd_step(
    xi: &[f64],
    yi: &[f64],
    xj: &[f64],
    yj: &[f64],
    d_ij: f64,
    d_ji: f64,
    eta: f64,
    cfg: &UpdateConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let own = Coordinate::new(xi.to_vec(), yi.to_vec())?;
    let nb = Neighbor {
        x: xj,
        y: yj,
        height: 0.0,
        d_ij,
        d_ji,
        weight: 1.0,
    };
    let next = minibatch_step(&own, &[nb], eta, cfg)?;
    Ok((next.x, next.y))
}

/// Local loss of the outgoing edges, minimized over `x_i`.
pub fn x_objective(own: &Coordinate, neighbors: &[Neighbor<'_>], cfg: &UpdateConfig) -> f64 {
    local_loss(
        cfg.loss,
        neighbors.iter().map(|nb| (nb.weight, nb.d_ij, outgoing(cfg.model, own, nb))),
        &own.x,
        cfg.lambda,
    )
}

/// Local loss of the incoming edges, minimized over `y_i`.
pub fn y_objective(own: &Coordinate, neighbors: &[Neighbor<'_>], cfg: &UpdateConfig) -> f64 {
    local_loss(
        cfg.loss,
        neighbors.iter().map(|nb| (nb.weight, nb.d_ji, incoming(cfg.model, own, nb))),
        &own.y,
        cfg.lambda,
    )
}

pub fn height_objective(own: &Coordinate, neighbors: &[Neighbor<'_>], cfg: &UpdateConfig) -> f64 {
    local_loss(
        cfg.loss,
        neighbors.iter().map(|nb| (nb.weight, nb.d_ij, outgoing(cfg.model, own, nb))),
        &[],
        0.0,
    )
}

/// Result of one backtracking line search.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome<T> {
    pub value: T,
    /// Accepted learning rate; 0 when every trial was rejected.
    pub eta: f64,
    pub loss_before: f64,
    pub loss_after: f64,
    pub slack: f64,
    pub trials: u32,
}

impl<T> LineSearchOutcome<T> {
    pub fn accepted(&self) -> bool {
        self.eta > 0.0
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> LineSearchOutcome<U> {
        LineSearchOutcome {
            value: f(self.value),
            eta: self.eta,
            loss_before: self.loss_before,
            loss_after: self.loss_after,
            slack: self.slack,
            trials: self.trials,
        }
    }
}

/// Backtracking line search.
///
/// Starting at `cfg.eta_init`, the learning rate is halved up to
/// `cfg.max_line_search` times; the first candidate whose objective is below
/// `l0 + slack` is returned. A trial whose step overflows or whose objective is
/// not finite counts as rejected. On exhaustion `current` comes back unchanged
/// with `eta == 0`.
pub fn line_search<T, O, S>(
    current: T,
    cfg: &UpdateConfig,
    mut objective: O,
    mut step: S,
) -> LineSearchOutcome<T>
where
    O: FnMut(&T) -> f64,
    S: FnMut(f64) -> Result<T>,
{
    let loss_before = objective(&current);
    let slack = cfg.slack(loss_before);
    let mut eta = cfg.eta_init;
    for trial in 1..=cfg.max_line_search {
        if let Ok(candidate) = step(eta) {
            let l = objective(&candidate);
            if l.is_finite() && l < loss_before + slack {
                return LineSearchOutcome {
                    value: candidate,
                    eta,
                    loss_before,
                    loss_after: l,
                    slack,
                    trials: trial,
                };
            }
        }
        eta *= 0.5;
    }
    LineSearchOutcome {
        value: current,
        eta: 0.0,
        loss_before,
        loss_after: loss_before,
        slack,
        trials: cfg.max_line_search,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(loss: LossKind, lambda: f64) -> UpdateConfig {
        UpdateConfig {
            lambda,
            loss,
            nonneg: false,
            ..UpdateConfig::for_loss(loss)
        }
    }

    #[test]
    fn defaults() {
        let c = UpdateConfig::default();
        assert_eq!(c.lambda, 1.0);
        assert_eq!(c.rank, 10);
        assert_eq!(c.loss, LossKind::L1);
        assert_eq!(c.eta_init, 1e-2);
        assert_eq!(UpdateConfig::for_loss(LossKind::L2).eta_init, 1e-3);
        assert!(c.validate().is_ok());
        assert!(UpdateConfig { rank: 0, ..c.clone() }.validate().is_err());
        assert!(UpdateConfig { max_line_search: 0, ..c }.validate().is_err());
    }

    #[test]
    fn sgd_step_plain() {
        let c = cfg(LossKind::L2, 0.0);
        let (x, _) =
            sgd_step(&[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[2.0, 1.0], 10.0, 0.0, 0.1, &c)
                .unwrap();
        assert!((x[0] - 2.6).abs() < 1e-12 && (x[1] - 0.8).abs() < 1e-12, "{x:?}");
    }

    #[test]
    fn sgd_step_regularized() {
        let c = cfg(LossKind::L2, 1.0);
        let (x, _) =
            sgd_step(&[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[2.0, 1.0], 10.0, 0.0, 0.1, &c)
                .unwrap();
        assert!((x[0] - 2.5).abs() < 1e-12 && (x[1] - 0.8).abs() < 1e-12, "{x:?}");
    }

    #[test]
    fn sgd_step_clamps_when_nonnegative() {
        // prediction -0.15, residual -1.5: x + 0.1 * -1.5 * [2, -1] = [-0.2, 0.5]
        let mut c = cfg(LossKind::L2, 0.0);
        let (raw, _) =
            sgd_step(&[0.1, 0.35], &[0.0, 0.0], &[0.0, 0.0], &[2.0, -1.0], -1.65, 0.0, 0.1, &c)
                .unwrap();
        assert!((raw[0] + 0.2).abs() < 1e-12 && (raw[1] - 0.5).abs() < 1e-12, "{raw:?}");
        c.nonneg = true;
        let (x, _) =
            sgd_step(&[0.1, 0.35], &[0.0, 0.0], &[0.0, 0.0], &[2.0, -1.0], -1.65, 0.0, 0.1, &c)
                .unwrap();
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn l1_step_uses_sign_only() {
        let c = cfg(LossKind::L1, 0.0);
        let (x, y) =
            sgd_step(&[1.0, 0.0], &[1.0, 1.0], &[1.0, 1.0], &[2.0, 1.0], 10.0, 1.0, 0.1, &c)
                .unwrap();
        assert!((x[0] - 1.2).abs() < 1e-12 && (x[1] - 0.1).abs() < 1e-12);
        // d_ji = 1 < x_j . y_i = 2, so y moves against x_j
        assert!((y[0] - 0.9).abs() < 1e-12 && (y[1] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn shrinkage_with_zero_residual() {
        let c = cfg(LossKind::L2, 2.0);
        // x . y_j = 3 = d_ij and x_j . y = 4 = d_ji
        let (x, y) =
            sgd_step(&[1.0, 1.0], &[2.0, 0.0], &[2.0, 5.0], &[1.0, 2.0], 3.0, 4.0, 0.05, &c)
                .unwrap();
        assert_eq!(x, vec![0.9, 0.9]);
        assert_eq!(y, vec![1.8, 0.0]);
    }

    #[test]
    fn overflow_is_reported() {
        let c = cfg(LossKind::L2, 0.0);
        let err =
            sgd_step(&[1.0], &[1.0], &[1.0], &[1e200], 1e300, 0.0, 1e300, &c).unwrap_err();
        assert!(matches!(err, Error::Overflow { .. }));
    }

    #[test]
    fn cancelling_minibatch_leaves_x_unchanged() {
        let c = cfg(LossKind::L2, 0.0);
        let own = Coordinate::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let y = [2.0, 1.0];
        let x = [0.0, 0.0];
        // prediction is 2: residuals +8 and -8
        let nbs = [
            Neighbor { x: &x, y: &y, height: 0.0, d_ij: 10.0, d_ji: 0.0, weight: 1.0 },
            Neighbor { x: &x, y: &y, height: 0.0, d_ij: -6.0, d_ji: 0.0, weight: 1.0 },
        ];
        let next = minibatch_step(&own, &nbs, 0.1, &c).unwrap();
        assert_eq!(next.x, own.x);
    }

    #[test]
    fn single_neighbor_minibatch_equals_sgd() {
        let c = cfg(LossKind::L1, 0.5);
        let own = Coordinate::new(vec![0.3, 0.7], vec![0.2, 0.9]).unwrap();
        let (xj, yj) = ([0.4, 0.1], [0.8, 0.6]);
        let nb = Neighbor { x: &xj, y: &yj, height: 0.0, d_ij: 3.0, d_ji: 0.1, weight: 1.0 };
        let mb = minibatch_step(&own, &[nb], 0.05, &c).unwrap();
        let (x, y) = sgd_step(&own.x, &own.y, &xj, &yj, 3.0, 0.1, 0.05, &c).unwrap();
        assert_eq!(mb.x, x);
        assert_eq!(mb.y, y);
    }

    #[test]
    fn rank_mismatch_rejected() {
        let c = cfg(LossKind::L2, 0.0);
        let own = Coordinate::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let short = [1.0];
        let nb = Neighbor { x: &short, y: &short, height: 0.0, d_ij: 1.0, d_ji: 1.0, weight: 1.0 };
        assert!(matches!(minibatch_step(&own, &[nb], 0.1, &c), Err(Error::Contract(_))));
    }

    /// One neighbour, L2, lambda = 0, r = 1: the residual after a step is
    /// `res * (1 - eta * y^2)`, so with y = 2.5 the trials eta = 1 and 0.5 overshoot
    /// and eta = 0.25 is the first to reduce the loss.
    #[test]
    fn line_search_backtracks_twice() {
        let c = UpdateConfig {
            eta_init: 1.0,
            delta: 0.0,
            ..cfg(LossKind::L2, 0.0)
        };
        let own = Coordinate::new(vec![0.0], vec![0.0]).unwrap();
        let (xj, yj) = ([0.0], [2.5]);
        let nbs = [Neighbor { x: &xj, y: &yj, height: 0.0, d_ij: 10.0, d_ji: 0.0, weight: 1.0 }];
        let out = line_search(
            own.x.clone(),
            &c,
            |x: &Vec<f64>| {
                let probe = Coordinate { x: x.clone(), ..own.clone() };
                x_objective(&probe, &nbs, &c)
            },
            |eta| minibatch_x(&own, &nbs, eta, &c),
        );
        assert_eq!(out.eta, 0.25);
        assert_eq!(out.trials, 3);
        // direct evaluation: before (10 - 0)^2, after x = 6.25, (10 - 15.625)^2
        assert_eq!(out.loss_before, 100.0);
        assert!((out.value[0] - 6.25).abs() < 1e-12);
        assert!((out.loss_after - 31.640625).abs() < 1e-9);
    }

    #[test]
    fn line_search_accepts_first_trial() {
        let c = UpdateConfig { eta_init: 0.01, ..cfg(LossKind::L2, 0.0) };
        let out = line_search(5.0_f64, &c, |v| v * v, |eta| Ok(5.0 - eta * 5.0));
        assert_eq!(out.eta, 0.01);
        assert_eq!(out.trials, 1);
        assert!(out.loss_after < out.loss_before);
    }

    #[test]
    fn line_search_exhaustion_is_noop() {
        let c = UpdateConfig { delta: 0.0, max_line_search: 5, ..cfg(LossKind::L2, 0.0) };
        let out = line_search(1.0_f64, &c, |v| v * v, |eta| Ok(1.0 + eta));
        assert_eq!(out.value, 1.0);
        assert_eq!(out.eta, 0.0);
        assert!(!out.accepted());
        assert_eq!(out.trials, 5);
    }

    #[test]
    fn line_search_skips_overflowing_trials() {
        let c = UpdateConfig { eta_init: 1.0, ..cfg(LossKind::L2, 0.0) };
        let out = line_search(
            1.0_f64,
            &c,
            |v| v * v,
            |eta| if eta > 0.3 { Err(Error::Overflow { eta }) } else { Ok(1.0 - eta) },
        );
        assert_eq!(out.eta, 0.25);
    }
}
