//! Deterministic simulator.
//!
//! Static matrices are run in rounds: every node, in a seeded shuffled order,
//! probes one of its candidates and updates. Traces are replayed in time order
//! through a per-pair median filter. Metrics are evaluated every
//! `snapshot_every` measurements.
//!
//! Random streams (ChaCha8, one per purpose, all derived from `seed`):
//! 0 initial coordinates, 1 neighbour lists, 2 round order and probe targets,
//! 3 Vivaldi tie-breaking directions, 4 landmark choice.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{euclidean_distance, vivaldi_step, EuclideanCoord};
use crate::data::{ground_truth, PairFilter, TraceDataset};
use crate::error::{Error, Result};
use crate::matrix::PartialMatrix;
use crate::metrics::{mae, ree_values, stress, EvalPairSet};
use crate::model::{predict_unchecked, Coordinate, NodeId};
use crate::optimizer::UpdateConfig;
use crate::protocol::{
    on_contact, pick_uniform, ContactReport, NodeState, ProbeMode, Retention, DEFAULT_K,
    DEFAULT_WINDOW_SECS,
};
use crate::stats::quantile_sorted;

const STREAM_INIT: u64 = 0;
const STREAM_NEIGHBORS: u64 = 1;
const STREAM_PROBES: u64 = 2;
const STREAM_VIVALDI: u64 = 3;
const STREAM_LANDMARKS: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Active,
    PassiveReplay,
    Landmark,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub mode: SimMode,
    /// Neighbours per node in active mode.
    pub k: usize,
    /// Landmark ids (landmark mode only).
    pub landmarks: Vec<NodeId>,
    pub update: UpdateConfig,
    pub seed: u64,
    /// Probing rounds for static matrices; ignored when replaying a trace.
    pub rounds: usize,
    /// Total measurements between snapshots; 0 means one snapshot per `n`.
    pub snapshot_every: usize,
    /// Passive neighbour retention, seconds.
    pub retention_window: f64,
    /// Passive median-filter window, seconds.
    pub filter_window: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mode: SimMode::Active,
            k: DEFAULT_K,
            landmarks: Vec::new(),
            update: UpdateConfig::default(),
            seed: 0,
            rounds: 100,
            snapshot_every: 0,
            retention_window: DEFAULT_WINDOW_SECS,
            filter_window: DEFAULT_WINDOW_SECS,
        }
    }
}

impl SimConfig {
    fn snapshot_interval(&self, n: usize) -> usize {
        if self.snapshot_every == 0 {
            n.max(1)
        } else {
            self.snapshot_every
        }
    }
}

/// Parameters of the Vivaldi baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VivaldiConfig {
    pub dim: usize,
    /// Constant learning rate.
    pub eta: f64,
    pub height: bool,
}

impl VivaldiConfig {
    pub const DEFAULT_ETA: f64 = 0.25;
}

impl Default for VivaldiConfig {
    fn default() -> Self {
        Self {
            dim: UpdateConfig::DEFAULT_RANK,
            eta: Self::DEFAULT_ETA,
            height: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Measurements processed so far, over all nodes.
    pub measurements: usize,
    pub measurements_per_node: f64,
    pub stress: f64,
    /// Median absolute error, ms.
    pub mae: f64,
    pub ree_p50: f64,
    pub ree_p90: f64,
    /// Stress over the probed pairs (static matrices only).
    pub train_stress: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub contacts: usize,
    /// Line searches that found an acceptable step.
    pub accepted: usize,
    /// Line searches that gave up and left the factor unchanged.
    pub exhausted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult<C> {
    /// In increasing order of `measurements`.
    pub snapshots: Vec<Snapshot>,
    pub coords: Vec<C>,
    /// Sorted REE values of the last snapshot; empty without snapshots.
    pub final_ree: Vec<f64>,
    /// Whether snapshots were evaluated on held-out pairs. False when every
    /// measured pair was probed (or in trace replay, where the whole
    /// ground-truth matrix is used).
    pub held_out: bool,
    pub stats: UpdateStats,
}

/// Hooks called during a run; both methods default to no-ops.
pub trait Observer<C> {
    /// After node `node` processed a measurement to `peer`. `report` is `None`
    /// for methods without a line search.
    fn contact(&mut self, _node: NodeId, _peer: NodeId, _report: Option<&ContactReport>) {}

    fn snapshot(&mut self, _snapshot: &Snapshot, _coords: &[C]) {}
}

impl<C> Observer<C> for () {}

/// A coordinate system the simulator can drive.
pub trait Learner {
    type Coord: Clone;

    fn coords(&self) -> Vec<Self::Coord>;

    fn into_coords(self) -> Vec<Self::Coord>;

    fn predict(&self, i: NodeId, j: NodeId) -> f64;

    /// Node `i` learns `d_ij`, `d_ji` to node `j` at time `now` (seconds).
    fn contact(
        &mut self,
        i: NodeId,
        j: NodeId,
        d_ij: f64,
        d_ji: f64,
        now: f64,
    ) -> Result<Option<ContactReport>>;
}

/// Decentralized factorization: one protocol state per node.
#[derive(Debug, Clone)]
pub struct DmfLearner {
    nodes: Vec<NodeState>,
    cfg: UpdateConfig,
}

impl DmfLearner {
    /// Random initial coordinates from stream 0 of `seed`, in node order.
    pub fn new(
        cfg: &UpdateConfig,
        seed: u64,
        mode: ProbeMode,
        candidates: Vec<Vec<NodeId>>,
        retention: impl Fn(&[NodeId]) -> Retention,
    ) -> Self {
        let mut rng = stream(seed, STREAM_INIT);
        let nodes = candidates
            .into_iter()
            .enumerate()
            .map(|(id, cand)| {
                let coord = Coordinate::random(cfg.rank, cfg.model.uses_height(), &mut rng);
                let keep = retention(&cand);
                NodeState::new(id, coord, mode, cand, keep)
            })
            .collect();
        Self {
            nodes,
            cfg: cfg.clone(),
        }
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }
}

impl Learner for DmfLearner {
    type Coord = Coordinate;

    fn coords(&self) -> Vec<Coordinate> {
        self.nodes.iter().map(|s| s.coord.clone()).collect()
    }

    fn into_coords(self) -> Vec<Coordinate> {
        self.nodes.into_iter().map(|s| s.coord).collect()
    }

    fn predict(&self, i: NodeId, j: NodeId) -> f64 {
        predict_unchecked(self.cfg.model, &self.nodes[i].coord, &self.nodes[j].coord)
    }

    fn contact(
        &mut self,
        i: NodeId,
        j: NodeId,
        d_ij: f64,
        d_ji: f64,
        now: f64,
    ) -> Result<Option<ContactReport>> {
        let peer = self.nodes[j].coord.clone();
        on_contact(&mut self.nodes[i], j, d_ij, d_ji, &peer, now, &self.cfg).map(Some)
    }
}

/// Constant-step Vivaldi; uses only `d_ij`.
#[derive(Debug, Clone)]
pub struct VivaldiLearner {
    coords: Vec<EuclideanCoord>,
    cfg: VivaldiConfig,
    rng: ChaCha8Rng,
}

impl VivaldiLearner {
    pub fn new(n: usize, cfg: VivaldiConfig, seed: u64) -> Result<Self> {
        if cfg.dim < 1 {
            return Err(Error::config("Vivaldi dimension must be >= 1"));
        }
        if !(cfg.eta > 0.0) || !cfg.eta.is_finite() {
            return Err(Error::config("Vivaldi learning rate must be finite and > 0"));
        }
        let mut init = stream(seed, STREAM_INIT);
        let coords = (0..n)
            .map(|_| EuclideanCoord::random(cfg.dim, cfg.height, &mut init))
            .collect();
        Ok(Self {
            coords,
            cfg,
            rng: stream(seed, STREAM_VIVALDI),
        })
    }
}

impl Learner for VivaldiLearner {
    type Coord = EuclideanCoord;

    fn coords(&self) -> Vec<EuclideanCoord> {
        self.coords.clone()
    }

    fn into_coords(self) -> Vec<EuclideanCoord> {
        self.coords
    }

    fn predict(&self, i: NodeId, j: NodeId) -> f64 {
        euclidean_distance(&self.coords[i], &self.coords[j])
    }

    fn contact(
        &mut self,
        i: NodeId,
        j: NodeId,
        d_ij: f64,
        _d_ji: f64,
        _now: f64,
    ) -> Result<Option<ContactReport>> {
        let next = vivaldi_step(&self.coords[i], &self.coords[j], d_ij, self.cfg.eta, &mut self.rng)?;
        self.coords[i] = next;
        Ok(None)
    }
}

/// Who probes whom on a static matrix, and which pairs are scored.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbePlan {
    pub candidates: Vec<Vec<NodeId>>,
    /// `(i, j, d_ij)` scored at each snapshot.
    pub eval: Vec<(NodeId, NodeId, f64)>,
    /// `(i, j, d_ij)` for every `j` in `candidates[i]`.
    pub train: Vec<(NodeId, NodeId, f64)>,
    pub held_out: bool,
}

impl ProbePlan {
    /// Active mode: each node draws `min(k, available)` distinct measured peers
    /// from stream 1. Landmark mode: each node's candidates are the landmarks
    /// other than itself.
    ///
    /// A pair `(i, j)` is held out when neither endpoint lists the other.
    pub fn build(cfg: &SimConfig, truth: &PartialMatrix) -> Result<Self> {
        let n = truth.n();
        if n < 2 {
            return Err(Error::config("need at least two nodes"));
        }
        let candidates = match cfg.mode {
            SimMode::Active => {
                if cfg.k < 1 {
                    return Err(Error::config("k must be >= 1"));
                }
                let mut rng = stream(cfg.seed, STREAM_NEIGHBORS);
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    let measured: Vec<NodeId> =
                        (0..n).filter(|&j| j != i && truth.is_measured(i, j)).collect();
                    if measured.is_empty() {
                        return Err(Error::config(format!("node {i} has no measured neighbours")));
                    }
                    let take = cfg.k.min(measured.len());
                    let mut picked: Vec<NodeId> = index::sample(&mut rng, measured.len(), take)
                        .into_iter()
                        .map(|idx| measured[idx])
                        .collect();
                    picked.sort_unstable();
                    out.push(picked);
                }
                out
            }
            SimMode::Landmark => {
                let mut landmarks = cfg.landmarks.clone();
                landmarks.sort_unstable();
                landmarks.dedup();
                if landmarks.is_empty() {
                    return Err(Error::config("landmark mode needs at least one landmark"));
                }
                if landmarks.len() != cfg.landmarks.len() {
                    return Err(Error::config("duplicate landmark ids"));
                }
                if let Some(&bad) = landmarks.iter().find(|&&l| l >= n) {
                    return Err(Error::config(format!("landmark {bad} out of range for n = {n}")));
                }
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    let cand: Vec<NodeId> = landmarks.iter().copied().filter(|&l| l != i).collect();
                    if let Some(&l) = cand.iter().find(|&&l| !truth.is_measured(i, l)) {
                        return Err(Error::config(format!(
                            "distance from node {i} to landmark {l} is not measured"
                        )));
                    }
                    out.push(cand);
                }
                out
            }
            SimMode::PassiveReplay => {
                return Err(Error::config("passive replay needs a trace, not a matrix"));
            }
        };

        let mut probed = vec![false; n * n];
        let mut train = Vec::new();
        for (i, cand) in candidates.iter().enumerate() {
            for &j in cand {
                probed[i * n + j] = true;
                train.push((i, j, truth.get(i, j).expect("candidates are measured")));
            }
        }
        let held: Vec<(NodeId, NodeId, f64)> = truth
            .measured()
            .filter(|&(i, j, _)| !probed[i * n + j] && !probed[j * n + i])
            .collect();
        let (eval, held_out) = if held.is_empty() {
            (truth.measured().collect(), false)
        } else {
            (held, true)
        };
        Ok(Self {
            candidates,
            eval,
            train,
            held_out,
        })
    }
}

fn evaluate<L: Learner>(
    learner: &L,
    pairs: &[(NodeId, NodeId, f64)],
    train: Option<&[(NodeId, NodeId, f64)]>,
    measurements: usize,
    n: usize,
) -> Result<(Snapshot, Vec<f64>)> {
    let set: EvalPairSet = pairs.iter().map(|&(i, j, d)| (d, learner.predict(i, j))).collect();
    if set.is_empty() {
        return Err(Error::config("no pairs with positive distance to evaluate"));
    }
    let mut ree = ree_values(&set);
    ree.sort_by(f64::total_cmp);
    let train_stress = match train {
        Some(t) => {
            let tset: EvalPairSet = t.iter().map(|&(i, j, d)| (d, learner.predict(i, j))).collect();
            if tset.is_empty() {
                None
            } else {
                Some(stress(&tset)?)
            }
        }
        None => None,
    };
    let snap = Snapshot {
        measurements,
        measurements_per_node: measurements as f64 / n as f64,
        stress: stress(&set)?,
        mae: mae(&set)?,
        ree_p50: quantile_sorted(&ree, 0.5).unwrap_or(f64::NAN),
        ree_p90: quantile_sorted(&ree, 0.9).unwrap_or(f64::NAN),
        train_stress,
    };
    Ok((snap, ree))
}

struct Recorder<'a, L: Learner, O> {
    learner: L,
    observer: &'a mut O,
    n: usize,
    interval: usize,
    measurements: usize,
    snapshots: Vec<Snapshot>,
    final_ree: Vec<f64>,
    stats: UpdateStats,
}

impl<L: Learner, O: Observer<L::Coord>> Recorder<'_, L, O> {
    fn contact(&mut self, i: NodeId, j: NodeId, d_ij: f64, d_ji: f64, now: f64) -> Result<()> {
        let report = self.learner.contact(i, j, d_ij, d_ji, now)?;
        self.stats.contacts += 1;
        if let Some(r) = &report {
            for audit in r.audits() {
                if audit.accepted() {
                    self.stats.accepted += 1;
                } else {
                    self.stats.exhausted += 1;
                }
            }
        }
        self.observer.contact(i, j, report.as_ref());
        self.measurements += 1;
        Ok(())
    }

    fn due(&self) -> bool {
        self.measurements > 0 && self.measurements % self.interval == 0
    }

    fn snapshot(
        &mut self,
        eval: &[(NodeId, NodeId, f64)],
        train: Option<&[(NodeId, NodeId, f64)]>,
    ) -> Result<()> {
        if self.snapshots.last().is_some_and(|s| s.measurements == self.measurements) {
            return Ok(());
        }
        let (snap, ree) = evaluate(&self.learner, eval, train, self.measurements, self.n)?;
        self.observer.snapshot(&snap, &self.learner.coords());
        log::debug!(
            "measurements/node {:.2}: stress {:.6}",
            snap.measurements_per_node,
            snap.stress
        );
        self.snapshots.push(snap);
        self.final_ree = ree;
        Ok(())
    }

    fn finish(self, held_out: bool) -> SimResult<L::Coord> {
        SimResult {
            snapshots: self.snapshots,
            coords: self.learner.into_coords(),
            final_ree: self.final_ree,
            held_out,
            stats: self.stats,
        }
    }
}

/// Runs `cfg.rounds` probing rounds of `learner` over `truth` following `plan`.
///
/// `d_ji` is read from `truth(j, i)` when measured and falls back to `d_ij`.
pub fn simulate_matrix<L, O>(
    cfg: &SimConfig,
    truth: &PartialMatrix,
    plan: &ProbePlan,
    learner: L,
    observer: &mut O,
) -> Result<SimResult<L::Coord>>
where
    L: Learner,
    O: Observer<L::Coord>,
{
    let n = truth.n();
    let mut rec = Recorder {
        learner,
        observer,
        n,
        interval: cfg.snapshot_interval(n),
        measurements: 0,
        snapshots: Vec::new(),
        final_ree: Vec::new(),
        stats: UpdateStats::default(),
    };
    let mut rng = stream(cfg.seed, STREAM_PROBES);
    let mut order: Vec<NodeId> = (0..n).collect();
    for round in 0..cfg.rounds {
        let now = round as f64;
        order.shuffle(&mut rng);
        for &i in &order {
            if plan.candidates[i].is_empty() {
                continue;
            }
            let j = pick_uniform(&plan.candidates[i], &mut rng)?;
            let d_ij = truth.get(i, j).expect("candidates are measured");
            let d_ji = truth.get(j, i).unwrap_or(d_ij);
            rec.contact(i, j, d_ij, d_ji, now)?;
            if rec.due() {
                rec.snapshot(&plan.eval, Some(&plan.train))?;
            }
        }
    }
    if rec.measurements > 0 {
        rec.snapshot(&plan.eval, Some(&plan.train))?;
    }
    Ok(rec.finish(plan.held_out))
}

/// Replays `trace` in time order. Each event feeds the pair's median filter and
/// the filtered value is passed to the source node. Scoring uses the per-pair
/// medians of the whole trace.
pub fn simulate_trace<L, O>(
    cfg: &SimConfig,
    trace: &TraceDataset,
    learner: L,
    observer: &mut O,
) -> Result<SimResult<L::Coord>>
where
    L: Learner,
    O: Observer<L::Coord>,
{
    let n = trace.n();
    let truth = ground_truth(trace);
    let eval: Vec<(NodeId, NodeId, f64)> = truth.measured().collect();
    let window_ms = cfg.filter_window * 1000.0;
    let mut filter = PairFilter::new(window_ms);
    let mut rec = Recorder {
        learner,
        observer,
        n,
        interval: cfg.snapshot_interval(n),
        measurements: 0,
        snapshots: Vec::new(),
        final_ree: Vec::new(),
        stats: UpdateStats::default(),
    };
    for e in trace.events() {
        let d_ij = filter.push(e.src, e.dst, e.t, e.rtt);
        let d_ji = filter.value(e.dst, e.src, e.t).unwrap_or(d_ij);
        rec.contact(e.src, e.dst, d_ij, d_ji, e.t / 1000.0)?;
        if rec.due() {
            rec.snapshot(&eval, None)?;
        }
    }
    if rec.measurements > 0 {
        rec.snapshot(&eval, None)?;
    }
    Ok(rec.finish(false))
}

fn check_mode(cfg: &SimConfig, expected: SimMode) -> Result<()> {
    if cfg.mode != expected {
        return Err(Error::config(format!(
            "configuration is for {:?} mode, not {expected:?}",
            cfg.mode
        )));
    }
    cfg.update.validate()
}

fn dmf_for_plan(cfg: &SimConfig, plan: &ProbePlan, mode: ProbeMode) -> DmfLearner {
    DmfLearner::new(&cfg.update, cfg.seed, mode, plan.candidates.clone(), |c| {
        Retention::Capacity(c.len().max(1))
    })
}

pub fn run_active(cfg: &SimConfig, truth: &PartialMatrix) -> Result<SimResult<Coordinate>> {
    run_active_observed(cfg, truth, &mut ())
}

pub fn run_active_observed<O: Observer<Coordinate>>(
    cfg: &SimConfig,
    truth: &PartialMatrix,
    observer: &mut O,
) -> Result<SimResult<Coordinate>> {
    check_mode(cfg, SimMode::Active)?;
    let plan = ProbePlan::build(cfg, truth)?;
    let learner = dmf_for_plan(cfg, &plan, ProbeMode::Active);
    simulate_matrix(cfg, truth, &plan, learner, observer)
}

/// Active mode with every node probing only landmarks. A landmark with no other
/// landmark to probe stays idle.
pub fn run_landmark(cfg: &SimConfig, truth: &PartialMatrix) -> Result<SimResult<Coordinate>> {
    run_landmark_observed(cfg, truth, &mut ())
}

pub fn run_landmark_observed<O: Observer<Coordinate>>(
    cfg: &SimConfig,
    truth: &PartialMatrix,
    observer: &mut O,
) -> Result<SimResult<Coordinate>> {
    check_mode(cfg, SimMode::Landmark)?;
    let plan = ProbePlan::build(cfg, truth)?;
    let learner = dmf_for_plan(cfg, &plan, ProbeMode::Landmark);
    simulate_matrix(cfg, truth, &plan, learner, observer)
}

pub fn run_passive(cfg: &SimConfig, trace: &TraceDataset) -> Result<SimResult<Coordinate>> {
    run_passive_observed(cfg, trace, &mut ())
}

pub fn run_passive_observed<O: Observer<Coordinate>>(
    cfg: &SimConfig,
    trace: &TraceDataset,
    observer: &mut O,
) -> Result<SimResult<Coordinate>> {
    check_mode(cfg, SimMode::PassiveReplay)?;
    if !(cfg.retention_window > 0.0) || !(cfg.filter_window > 0.0) {
        return Err(Error::config("retention and filter windows must be > 0"));
    }
    let window = cfg.retention_window;
    let learner = DmfLearner::new(
        &cfg.update,
        cfg.seed,
        ProbeMode::Passive,
        vec![Vec::new(); trace.n()],
        |_| Retention::Window(window),
    );
    simulate_trace(cfg, trace, learner, observer)
}

/// Vivaldi on a static matrix with the same probe plan and schedule as the
/// factorization run of `cfg` (active or landmark).
pub fn run_vivaldi(
    cfg: &SimConfig,
    vivaldi: VivaldiConfig,
    truth: &PartialMatrix,
) -> Result<SimResult<EuclideanCoord>> {
    let plan = ProbePlan::build(cfg, truth)?;
    let learner = VivaldiLearner::new(truth.n(), vivaldi, cfg.seed)?;
    simulate_matrix(cfg, truth, &plan, learner, &mut ())
}

pub fn run_vivaldi_passive(
    cfg: &SimConfig,
    vivaldi: VivaldiConfig,
    trace: &TraceDataset,
) -> Result<SimResult<EuclideanCoord>> {
    let learner = VivaldiLearner::new(trace.n(), vivaldi, cfg.seed)?;
    simulate_trace(cfg, trace, learner, &mut ())
}

/// `count` distinct landmark ids drawn from stream 4 of `seed`, sorted.
pub fn choose_landmarks(n: usize, count: usize, seed: u64) -> Result<Vec<NodeId>> {
    if count < 1 || count > n {
        return Err(Error::config(format!("landmark count must lie in 1..={n}, got {count}")));
    }
    let mut rng = stream(seed, STREAM_LANDMARKS);
    let mut ids = index::sample(&mut rng, n, count).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// Dispatches on `cfg.mode` for a static matrix.
pub fn run_matrix(cfg: &SimConfig, truth: &PartialMatrix) -> Result<SimResult<Coordinate>> {
    match cfg.mode {
        SimMode::Active => run_active(cfg, truth),
        SimMode::Landmark => run_landmark(cfg, truth),
        SimMode::PassiveReplay => Err(Error::config("passive replay needs a trace, not a matrix")),
    }
}
