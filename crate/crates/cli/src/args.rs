use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmfsgd::optimizer::default_eta;
use dmfsgd::{DistanceModel, LossKind, SimConfig, SimMode, UpdateConfig, VivaldiConfig};

#[derive(Debug, Parser)]
#[command(name = "dmfsgd", version, about = "Network latency prediction by decentralized matrix factorization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one method and write its snapshot series as CSV.
    Run(RunArgs),
    /// Report node count, density and triangle-inequality violations.
    Analyze(AnalyzeArgs),
    /// Write the normalized singular values of a complete matrix.
    SvdProfile(ProfileArgs),
    /// Run factorization, Vivaldi and landmark factorization side by side.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Active,
    Passive,
    Landmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Raw,
    Symmetric,
    Height,
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("expected a finite value >= 0, got {s}"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("expected a finite value > 0, got {s}"))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Matrix file (active, landmark) or CSV trace (passive).
    #[arg(long)]
    pub dataset: PathBuf,

    #[arg(long, value_enum, default_value_t = ModeArg::Active)]
    pub mode: ModeArg,

    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub rank: u32,

    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    pub lambda: f64,

    #[arg(long, value_enum, default_value_t = LossArg::L1)]
    pub loss: LossArg,

    /// Keep coordinates nonnegative (the default).
    #[arg(long, conflicts_with = "allow_negative")]
    pub nonneg: bool,

    /// Allow negative coordinate entries.
    #[arg(long)]
    pub allow_negative: bool,

    /// Initial line-search learning rate [default: 0.01 for l1, 0.001 for l2].
    #[arg(long, value_parser = positive)]
    pub eta: Option<f64>,

    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_line_search: u32,

    /// Relative line-search slack.
    #[arg(long, default_value_t = 1e-4, value_parser = non_negative)]
    pub delta: f64,

    /// Neighbours per node in active mode.
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,

    /// Number of randomly chosen landmarks (landmark mode).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub landmarks: Option<u64>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Probing rounds on a matrix [default: 10 * k].
    #[arg(long)]
    pub rounds: Option<usize>,

    /// Measurements between snapshots; 0 takes one snapshot per n measurements.
    #[arg(long, default_value_t = 0)]
    pub snapshot_every: usize,

    /// Passive neighbour retention window, seconds.
    #[arg(long, default_value_t = 1800.0, value_parser = positive)]
    pub window_secs: f64,

    /// Passive median-filter window, seconds.
    #[arg(long, default_value_t = 1800.0, value_parser = positive)]
    pub filter_window_secs: f64,

    #[arg(long, value_enum, default_value_t = ModelArg::Raw)]
    pub model: ModelArg,
}

impl SimArgs {
    pub fn sim_mode(&self) -> SimMode {
        match self.mode {
            ModeArg::Active => SimMode::Active,
            ModeArg::Passive => SimMode::PassiveReplay,
            ModeArg::Landmark => SimMode::Landmark,
        }
    }

    pub fn update_config(&self) -> UpdateConfig {
        let loss = match self.loss {
            LossArg::L1 => LossKind::L1,
            LossArg::L2 => LossKind::L2,
        };
        UpdateConfig {
            lambda: self.lambda,
            rank: self.rank as usize,
            loss,
            nonneg: !self.allow_negative,
            eta_init: self.eta.unwrap_or_else(|| default_eta(loss)),
            max_line_search: self.max_line_search,
            delta: self.delta,
            model: match self.model {
                ModelArg::Raw => DistanceModel::Raw,
                ModelArg::Symmetric => DistanceModel::Symmetric,
                ModelArg::Height => DistanceModel::HeightSymmetric,
            },
        }
    }

    /// Everything except the landmark ids, which need the node count.
    pub fn sim_config(&self) -> SimConfig {
        let k = self.k as usize;
        SimConfig {
            mode: self.sim_mode(),
            k,
            landmarks: Vec::new(),
            update: self.update_config(),
            seed: self.seed,
            rounds: self.rounds.unwrap_or(10 * k),
            snapshot_every: self.snapshot_every,
            retention_window: self.window_secs,
            filter_window: self.filter_window_secs,
        }
    }

    /// Cross-flag checks clap cannot express.
    pub fn validate(&self) -> Result<(), String> {
        if self.landmarks.is_some() && self.mode != ModeArg::Landmark {
            return Err("--landmarks only applies to --mode landmark".into());
        }
        if self.mode == ModeArg::Landmark && self.landmarks.is_none() {
            return Err("--mode landmark requires --landmarks N".into());
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub sim: SimArgs,

    /// Output CSV [default: standard output].
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Also write the empirical REE distribution of the final snapshot here.
    #[arg(long)]
    pub ree_cdf: Option<PathBuf>,

    /// REE values at which the distribution is evaluated.
    #[arg(long, value_delimiter = ',', value_parser = non_negative, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    pub ree_grid: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Matrix file, or a CSV trace (reduced to per-pair medians).
    #[arg(long)]
    pub dataset: PathBuf,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Complete matrix file.
    #[arg(long)]
    pub dataset: PathBuf,

    /// Number of singular values to report.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub sim: SimArgs,

    /// Vivaldi learning rate.
    #[arg(long, default_value_t = VivaldiConfig::DEFAULT_ETA, value_parser = positive)]
    pub vivaldi_eta: f64,

    /// Give Vivaldi coordinates a height.
    #[arg(long)]
    pub vivaldi_height: bool,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CompareArgs {
    pub fn vivaldi(&self) -> VivaldiConfig {
        VivaldiConfig {
            dim: self.sim.rank as usize,
            eta: self.vivaldi_eta,
            height: self.vivaldi_height,
        }
    }
}
