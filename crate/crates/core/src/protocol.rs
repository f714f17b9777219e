//! Per-node protocol state: the neighbour cache, age-based decay weights and the
//! update a node performs each time it learns a fresh measurement to a peer.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Coordinate, NodeId};
use crate::optimizer::{
    height_objective, line_search, minibatch_height, minibatch_x, minibatch_y, x_objective,
    y_objective, LineSearchOutcome, Neighbor, UpdateConfig,
};

/// Default active-mode neighbour count.
pub const DEFAULT_K: usize = 32;
/// Default passive-mode retention window, in seconds.
pub const DEFAULT_WINDOW_SECS: f64 = 1800.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeMode {
    /// Probes a fixed random set of `k` peers.
    Active,
    /// Updates from whatever measurements arrive; keeps recently seen peers.
    Passive,
    /// Probes only landmark nodes.
    Landmark,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Retention {
    /// Keep at most this many records.
    Capacity(usize),
    /// Drop records older than this many seconds.
    Window(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborRecord {
    pub node: NodeId,
    pub d_ij: f64,
    pub d_ji: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub height: f64,
    /// Simulation time (s) of the last refresh.
    pub refreshed_at: f64,
}

impl NeighborRecord {
    pub fn age(&self, now: f64) -> f64 {
        (now - self.refreshed_at).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    records: Vec<NeighborRecord>,
    retention: Retention,
}

impl NeighborSet {
    pub fn new(retention: Retention) -> Self {
        Self {
            records: Vec::new(),
            retention,
        }
    }

    pub fn retention(&self) -> Retention {
        self.retention
    }

    pub fn records(&self) -> &[NeighborRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, node: NodeId) -> Option<&NeighborRecord> {
        self.records.iter().find(|r| r.node == node)
    }

    /// Inserts or replaces the record for `record.node`.
    pub fn upsert(&mut self, record: NeighborRecord) {
        match self.records.iter_mut().find(|r| r.node == record.node) {
            Some(slot) => *slot = record,
            None => self.records.push(record),
        }
    }

    /// Applies the retention policy at time `now`; `keep` is never evicted.
    pub fn evict(&mut self, now: f64, keep: NodeId) {
        match self.retention {
            Retention::Window(window) => {
                self.records.retain(|r| r.node == keep || r.age(now) <= window);
            }
            Retention::Capacity(k) => {
                while self.records.len() > k.max(1) {
                    let oldest = self
                        .records
                        .iter()
                        .enumerate()
                        .filter(|(_, r)| r.node != keep)
                        .min_by(|a, b| a.1.refreshed_at.total_cmp(&b.1.refreshed_at))
                        .map(|(idx, _)| idx);
                    match oldest {
                        Some(idx) => {
                            self.records.remove(idx);
                        }
                        None => break,
                    }
                }
            }
        }
    }

    fn retain_rank(&mut self, rank: usize) {
        self.records.retain(|r| r.x.len() == rank && r.y.len() == rank);
    }

    pub fn ages(&self, now: f64) -> Vec<f64> {
        self.records.iter().map(|r| r.age(now)).collect()
    }
}

/// Age-based neighbour weights: `w_j = (a_max - a_j) / sum_k (a_max - a_k)`.
///
/// The oldest record gets weight 0. When every age is equal (including the
/// single-record case) the formula is 0/0 and uniform weights are returned.
pub fn decay_weights(ages: &[f64]) -> Result<Vec<f64>> {
    if ages.is_empty() {
        return Err(Error::contract("decay weights need at least one neighbour"));
    }
    let a_max = ages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = ages.iter().map(|a| a_max - a).sum();
    if !(total > 0.0) {
        let w = 1.0 / ages.len() as f64;
        return Ok(vec![w; ages.len()]);
    }
    Ok(ages.iter().map(|a| (a_max - a) / total).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    pub coord: Coordinate,
    pub neighbors: NeighborSet,
    pub mode: ProbeMode,
    /// Peers this node may probe (active and landmark modes), fixed at bootstrap.
    pub candidates: Vec<NodeId>,
}

impl NodeState {
    pub fn new(
        id: NodeId,
        coord: Coordinate,
        mode: ProbeMode,
        candidates: Vec<NodeId>,
        retention: Retention,
    ) -> Self {
        Self {
            id,
            coord,
            neighbors: NeighborSet::new(retention),
            mode,
            candidates,
        }
    }
}

/// Line-search summary of one factor update.
pub type StepAudit = LineSearchOutcome<()>;

/// What happened during one [`on_contact`].
#[derive(Debug, Clone, PartialEq)]
pub struct ContactReport {
    pub x: StepAudit,
    pub y: StepAudit,
    pub height: Option<StepAudit>,
}

impl ContactReport {
    pub fn audits(&self) -> impl Iterator<Item = &StepAudit> {
        [&self.x, &self.y].into_iter().chain(self.height.as_ref())
    }
}

/// Node `state` learns `d_ij`, `d_ji` and the current coordinate of `peer`, then
/// updates its own coordinate.
///
/// The peer's record is refreshed (age 0) and the retention policy applied. Weights
/// are age-decayed in passive mode and all 1 otherwise. `x` is then updated by a
/// line-searched minibatch step, followed by `y` (and the height, for the height
/// model). Records whose rank differs from the node's own are dropped.
pub fn on_contact(
    state: &mut NodeState,
    peer: NodeId,
    d_ij: f64,
    d_ji: f64,
    peer_coord: &Coordinate,
    now: f64,
    cfg: &UpdateConfig,
) -> Result<ContactReport> {
    if peer == state.id {
        return Err(Error::contract("a node cannot contact itself"));
    }
    for d in [d_ij, d_ji] {
        if !d.is_finite() || d < 0.0 {
            return Err(Error::contract(format!("measurement must be finite and >= 0, got {d}")));
        }
    }
    let rank = state.coord.rank();
    if peer_coord.rank() != rank || peer_coord.y.len() != rank {
        return Err(Error::contract(format!(
            "peer {peer} has rank {} but node {} has rank {rank}",
            peer_coord.rank(),
            state.id
        )));
    }

    let NodeState {
        coord, neighbors, mode, ..
    } = state;
    neighbors.retain_rank(rank);
    neighbors.upsert(NeighborRecord {
        node: peer,
        d_ij,
        d_ji,
        x: peer_coord.x.clone(),
        y: peer_coord.y.clone(),
        height: peer_coord.height_or_zero(),
        refreshed_at: now,
    });
    neighbors.evict(now, peer);

    let weights = match mode {
        ProbeMode::Passive => decay_weights(&neighbors.ages(now))?,
        ProbeMode::Active | ProbeMode::Landmark => vec![1.0; neighbors.len()],
    };
    let views: Vec<Neighbor<'_>> = neighbors
        .records()
        .iter()
        .zip(&weights)
        .map(|(r, &weight)| Neighbor {
            x: &r.x,
            y: &r.y,
            height: r.height,
            d_ij: r.d_ij,
            d_ji: r.d_ji,
            weight,
        })
        .collect();

    let mut probe = coord.clone();
    let x = line_search(
        coord.x.clone(),
        cfg,
        |cand: &Vec<f64>| {
            probe.x.copy_from_slice(cand);
            x_objective(&probe, &views, cfg)
        },
        |eta| minibatch_x(coord, &views, eta, cfg),
    );
    let x = x.map(|v| coord.x = v);

    let mut probe = coord.clone();
    let y = line_search(
        coord.y.clone(),
        cfg,
        |cand: &Vec<f64>| {
            probe.y.copy_from_slice(cand);
            y_objective(&probe, &views, cfg)
        },
        |eta| minibatch_y(coord, &views, eta, cfg),
    );
    let y = y.map(|v| coord.y = v);

    let height = if cfg.model.uses_height() {
        if coord.height.is_none() {
            coord.height = Some(0.0);
        }
        let mut probe = coord.clone();
        let h = line_search(
            coord.height_or_zero(),
            cfg,
            |cand: &f64| {
                probe.height = Some(*cand);
                height_objective(&probe, &views, cfg)
            },
            |eta| minibatch_height(coord, &views, eta, cfg),
        );
        Some(h.map(|v| coord.height = Some(v)))
    } else {
        None
    };

    Ok(ContactReport { x, y, height })
}

/// Uniformly random member of `candidates`.
pub fn pick_uniform<R: Rng + ?Sized>(candidates: &[NodeId], rng: &mut R) -> Result<NodeId> {
    if candidates.is_empty() {
        return Err(Error::contract("no probe candidates"));
    }
    Ok(candidates[rng.random_range(0..candidates.len())])
}

/// Chooses the next peer for an active or landmark node to probe.
pub fn select_probe_target<R: Rng + ?Sized>(state: &NodeState, rng: &mut R) -> Result<NodeId> {
    if state.mode == ProbeMode::Passive {
        return Err(Error::contract("passive nodes do not choose probe targets"));
    }
    if state.candidates.contains(&state.id) {
        return Err(Error::contract("a node cannot list itself as a probe candidate"));
    }
    pick_uniform(&state.candidates, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LossKind;
    use crate::optimizer::sgd_step;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn node(mode: ProbeMode, retention: Retention, rank: usize) -> NodeState {
        let coord = Coordinate::new(vec![0.5; rank], vec![0.25; rank]).unwrap();
        NodeState::new(0, coord, mode, vec![1, 2, 3], retention)
    }

    #[test]
    fn decay_weight_cases() {
        let w = decay_weights(&[0.0, 10.0, 20.0]).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
        assert_eq!(decay_weights(&[7.0]).unwrap(), vec![1.0]);
        assert_eq!(decay_weights(&[3.0, 3.0, 3.0, 3.0]).unwrap(), vec![0.25; 4]);
        assert!(decay_weights(&[]).is_err());
    }

    #[test]
    fn first_contact_is_a_line_searched_sgd_step() {
        let cfg = UpdateConfig { nonneg: false, ..UpdateConfig::for_loss(LossKind::L2) };
        let mut st = node(ProbeMode::Active, Retention::Capacity(4), 2);
        let before = st.coord.clone();
        let peer = Coordinate::new(vec![0.3, 0.9], vec![0.7, 0.2]).unwrap();
        let report = on_contact(&mut st, 1, 5.0, 4.0, &peer, 0.0, &cfg).unwrap();
        assert!(report.x.accepted() && report.y.accepted());
        let (x, _) =
            sgd_step(&before.x, &before.y, &peer.x, &peer.y, 5.0, 4.0, report.x.eta, &cfg).unwrap();
        let (_, y) =
            sgd_step(&before.x, &before.y, &peer.x, &peer.y, 5.0, 4.0, report.y.eta, &cfg).unwrap();
        assert_eq!(st.coord.x, x);
        assert_eq!(st.coord.y, y);
        assert_eq!(st.neighbors.len(), 1);
    }

    #[test]
    fn symmetric_measurements_move_both_factors_toward_fit() {
        let cfg = UpdateConfig { lambda: 0.0, ..UpdateConfig::for_loss(LossKind::L2) };
        let mut st = node(ProbeMode::Active, Retention::Capacity(4), 2);
        let peer = Coordinate::new(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let d = 20.0;
        let before_out = crate::model::dot(&st.coord.x, &peer.y);
        let before_in = crate::model::dot(&peer.x, &st.coord.y);
        on_contact(&mut st, 1, d, d, &peer, 0.0, &cfg).unwrap();
        let after_out = crate::model::dot(&st.coord.x, &peer.y);
        let after_in = crate::model::dot(&peer.x, &st.coord.y);
        assert!((d - after_out).abs() < (d - before_out).abs());
        assert!((d - after_in).abs() < (d - before_in).abs());
    }

    #[test]
    fn capacity_policy_bounds_records() {
        let cfg = UpdateConfig::default();
        let mut st = node(ProbeMode::Active, Retention::Capacity(2), 3);
        let peer = Coordinate::new(vec![0.1; 3], vec![0.2; 3]).unwrap();
        for (t, p) in [1, 2, 3, 1, 4].into_iter().enumerate() {
            on_contact(&mut st, p, 1.0, 1.0, &peer, t as f64, &cfg).unwrap();
            assert!(st.neighbors.len() <= 2);
            assert!(st.neighbors.get(p).is_some());
        }
        let nodes: Vec<_> = st.neighbors.records().iter().map(|r| r.node).collect();
        assert_eq!(nodes, vec![1, 4]);
    }

    #[test]
    fn window_policy_drops_stale_records() {
        let cfg = UpdateConfig::default();
        let mut st = node(ProbeMode::Passive, Retention::Window(100.0), 2);
        let peer = Coordinate::new(vec![0.1; 2], vec![0.2; 2]).unwrap();
        on_contact(&mut st, 1, 1.0, 1.0, &peer, 0.0, &cfg).unwrap();
        on_contact(&mut st, 2, 1.0, 1.0, &peer, 50.0, &cfg).unwrap();
        on_contact(&mut st, 3, 1.0, 1.0, &peer, 120.0, &cfg).unwrap();
        let nodes: Vec<_> = st.neighbors.records().iter().map(|r| r.node).collect();
        assert_eq!(nodes, vec![2, 3]);
        assert!(st.neighbors.ages(120.0).iter().all(|&a| a <= 100.0));
    }

    #[test]
    fn mismatched_peer_rank_is_an_error_and_stale_ranks_are_dropped() {
        let cfg = UpdateConfig::default();
        let mut st = node(ProbeMode::Active, Retention::Capacity(4), 2);
        let wrong = Coordinate::new(vec![0.1; 3], vec![0.2; 3]).unwrap();
        assert!(on_contact(&mut st, 1, 1.0, 1.0, &wrong, 0.0, &cfg).is_err());

        st.neighbors.upsert(NeighborRecord {
            node: 2,
            d_ij: 1.0,
            d_ji: 1.0,
            x: vec![0.0; 5],
            y: vec![0.0; 5],
            height: 0.0,
            refreshed_at: 0.0,
        });
        let ok = Coordinate::new(vec![0.1; 2], vec![0.2; 2]).unwrap();
        on_contact(&mut st, 1, 1.0, 1.0, &ok, 1.0, &cfg).unwrap();
        assert!(st.neighbors.get(2).is_none());
        assert!(st.neighbors.get(1).is_some());
    }

    #[test]
    fn rejects_bad_measurements() {
        let cfg = UpdateConfig::default();
        let mut st = node(ProbeMode::Active, Retention::Capacity(4), 2);
        let peer = Coordinate::new(vec![0.1; 2], vec![0.2; 2]).unwrap();
        assert!(on_contact(&mut st, 1, -1.0, 1.0, &peer, 0.0, &cfg).is_err());
        assert!(on_contact(&mut st, 1, f64::NAN, 1.0, &peer, 0.0, &cfg).is_err());
        assert!(on_contact(&mut st, 0, 1.0, 1.0, &peer, 0.0, &cfg).is_err());
    }

    #[test]
    fn height_model_keeps_height_nonnegative() {
        let cfg = UpdateConfig {
            model: crate::model::DistanceModel::HeightSymmetric,
            ..UpdateConfig::for_loss(LossKind::L2)
        };
        let mut st = node(ProbeMode::Active, Retention::Capacity(4), 2);
        let peer = Coordinate::new(vec![0.1; 2], vec![0.2; 2]).unwrap().with_height(0.0).unwrap();
        for t in 0..50 {
            let report = on_contact(&mut st, 1, 30.0, 30.0, &peer, t as f64, &cfg).unwrap();
            assert!(report.height.is_some());
        }
        let h = st.coord.height.unwrap();
        assert!(h > 0.0, "height should grow toward the large residual, got {h}");
    }

    #[test]
    fn probe_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let st = NodeState::new(
            0,
            Coordinate::new(vec![0.0], vec![0.0]).unwrap(),
            ProbeMode::Active,
            vec![1],
            Retention::Capacity(1),
        );
        for _ in 0..20 {
            assert_eq!(select_probe_target(&st, &mut rng).unwrap(), 1);
        }
        let landmarks = NodeState { mode: ProbeMode::Landmark, candidates: vec![4, 7, 9], ..st.clone() };
        for _ in 0..100 {
            assert!([4, 7, 9].contains(&select_probe_target(&landmarks, &mut rng).unwrap()));
        }
        let empty = NodeState { candidates: vec![], ..st.clone() };
        assert!(select_probe_target(&empty, &mut rng).is_err());
        let passive = NodeState { mode: ProbeMode::Passive, ..st };
        assert!(select_probe_target(&passive, &mut rng).is_err());
    }
}
