//! Decentralized matrix factorization for network latency prediction.
//!
//! Every node keeps a pair of low-rank factors `(x_i, y_i)` and predicts the RTT
//! to node `j` as `x_i . y_j`. Nodes refine their own factors from measurements to
//! a few peers with line-searched stochastic gradient steps; no node ever sees the
//! full matrix. The crate also ships a truncated-SVD reference, a Vivaldi
//! baseline, dataset loaders, accuracy metrics and a deterministic simulator.

pub mod baselines;
pub mod data;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod protocol;
pub mod report;
pub mod sim;
pub mod stats;

pub use nalgebra::DMatrix;

pub use baselines::{euclidean_distance, svd_lowrank, vivaldi_step, EuclideanCoord, LowRank};
pub use data::{
    ground_truth, load_matrix, load_trace, median_filter, save_matrix, singular_profile,
    tiv_ratio, MeasurementEvent, TraceDataset,
};
pub use error::{Error, Result};
pub use matrix::PartialMatrix;
pub use metrics::{mae, ree_values, stress, EvalPairSet};
pub use model::{
    gradient_x, gradient_y, local_loss, loss, predict, Coordinate, DistanceModel, LossKind,
    NodeId,
};
pub use optimizer::{line_search, minibatch_step, sgd_step, Neighbor, UpdateConfig};
pub use protocol::{
    decay_weights, on_contact, select_probe_target, ContactReport, NeighborRecord, NeighborSet,
    NodeState, ProbeMode, Retention,
};
pub use sim::{
    choose_landmarks, run_active, run_landmark, run_matrix, run_passive, run_vivaldi,
    run_vivaldi_passive, SimConfig, SimMode, SimResult, Snapshot, VivaldiConfig,
};
