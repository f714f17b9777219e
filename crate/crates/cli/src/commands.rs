use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dmfsgd::report::{format_sig, snapshots_to_string};
use dmfsgd::{
    choose_landmarks, ground_truth, load_matrix, load_trace, run_matrix, run_passive, run_vivaldi,
    run_vivaldi_passive, singular_profile, tiv_ratio, PartialMatrix, SimConfig, SimMode, Snapshot,
    TraceDataset,
};
use log::info;

use crate::args::{AnalyzeArgs, CompareArgs, ModeArg, ProfileArgs, RunArgs, SimArgs};

/// A flag combination that only turns out invalid once the dataset is known.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

enum Dataset {
    Matrix(PartialMatrix),
    Trace(TraceDataset),
}

fn is_trace(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn load_dataset(path: &Path, trace: bool) -> Result<Dataset> {
    let data = if trace {
        Dataset::Trace(load_trace(path).with_context(|| format!("reading trace {}", path.display()))?)
    } else {
        Dataset::Matrix(load_matrix(path).with_context(|| format!("reading matrix {}", path.display()))?)
    };
    Ok(data)
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Fills in the landmark ids once `n` is known.
fn resolve_landmarks(cfg: &mut SimConfig, sim: &SimArgs, n: usize) -> Result<()> {
    if let Some(count) = sim.landmarks {
        let count = count as usize;
        if count > n {
            return Err(UsageError(format!("--landmarks {count} exceeds the {n} nodes in the dataset")).into());
        }
        cfg.landmarks = choose_landmarks(n, count, cfg.seed)?;
    }
    Ok(())
}

fn check_update(cfg: &SimConfig) -> Result<()> {
    cfg.update.validate().map_err(|e| UsageError(e.to_string()).into())
}

fn ree_cdf(sorted: &[f64], grid: &[f64]) -> String {
    let mut s = String::from("ree,cdf\n");
    for &g in grid {
        let frac = if sorted.is_empty() {
            f64::NAN
        } else {
            sorted.partition_point(|&v| v <= g) as f64 / sorted.len() as f64
        };
        writeln!(s, "{},{}", format_sig(g), format_sig(frac)).unwrap();
    }
    s
}

pub fn run(args: &RunArgs) -> Result<()> {
    let sim = &args.sim;
    let mut cfg = sim.sim_config();
    check_update(&cfg)?;
    let data = load_dataset(&sim.dataset, sim.mode == ModeArg::Passive)?;
    let result = match &data {
        Dataset::Matrix(m) => {
            resolve_landmarks(&mut cfg, sim, m.n())?;
            info!("{:?} run on {} nodes, {} rounds", cfg.mode, m.n(), cfg.rounds);
            run_matrix(&cfg, m)?
        }
        Dataset::Trace(t) => {
            info!("passive replay of {} events over {} nodes", t.events().len(), t.n());
            run_passive(&cfg, t)?
        }
    };
    info!(
        "{} contacts, {} accepted updates, {} exhausted line searches",
        result.stats.contacts, result.stats.accepted, result.stats.exhausted
    );
    if !result.held_out {
        info!("no held-out pairs; metrics cover the probed pairs");
    }
    let csv = snapshots_to_string(&result.snapshots);
    let cdf = args.ree_cdf.as_ref().map(|_| ree_cdf(&result.final_ree, &args.ree_grid));
    emit(args.out.as_ref(), &csv)?;
    if let (Some(path), Some(cdf)) = (&args.ree_cdf, cdf) {
        fs::write(path, cdf).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let m = match load_dataset(&args.dataset, is_trace(&args.dataset))? {
        Dataset::Matrix(m) => m,
        Dataset::Trace(t) => ground_truth(&t),
    };
    let mut s = String::from("metric,value\n");
    writeln!(s, "n,{}", m.n()).unwrap();
    writeln!(s, "measured_pairs,{}", m.measured_count()).unwrap();
    writeln!(s, "density,{}", format_sig(m.density())).unwrap();
    writeln!(s, "tiv_ratio,{}", format_sig(tiv_ratio(&m))).unwrap();
    emit(args.out.as_ref(), &s)
}

pub fn svd_profile(args: &ProfileArgs) -> Result<()> {
    let m = match load_dataset(&args.dataset, is_trace(&args.dataset))? {
        Dataset::Matrix(m) => m,
        Dataset::Trace(t) => ground_truth(&t),
    };
    let profile = singular_profile(&m, args.count as usize)?;
    let mut s = String::from("index,normalized_singular_value\n");
    for (i, v) in profile.iter().enumerate() {
        writeln!(s, "{},{}", i + 1, format_sig(*v)).unwrap();
    }
    emit(args.out.as_ref(), &s)
}

const METHODS: [&str; 3] = ["dmfsgd", "vivaldi", "landmark"];

pub fn compare(args: &CompareArgs) -> Result<()> {
    let sim = &args.sim;
    if sim.mode == ModeArg::Landmark {
        return Err(UsageError("compare runs the landmark variant itself; use --mode active or passive".into()).into());
    }
    let mut cfg = sim.sim_config();
    check_update(&cfg)?;
    let vivaldi = args.vivaldi();
    let data = load_dataset(&sim.dataset, sim.mode == ModeArg::Passive)?;
    let mut series: Vec<Option<Vec<Snapshot>>> = vec![None; METHODS.len()];
    match &data {
        Dataset::Matrix(m) => {
            let n = m.n();
            series[0] = Some(run_matrix(&cfg, m)?.snapshots);
            series[1] = Some(run_vivaldi(&cfg, vivaldi, m)?.snapshots);
            let count = sim.landmarks.map_or(cfg.k.min(n), |c| c as usize);
            if count > n {
                return Err(UsageError(format!("--landmarks {count} exceeds the {n} nodes in the dataset")).into());
            }
            cfg.mode = SimMode::Landmark;
            cfg.landmarks = choose_landmarks(n, count, cfg.seed)?;
            info!("landmark variant with {count} landmarks");
            series[2] = Some(run_matrix(&cfg, m)?.snapshots);
        }
        Dataset::Trace(t) => {
            series[0] = Some(run_passive(&cfg, t)?.snapshots);
            series[1] = Some(run_vivaldi_passive(&cfg, vivaldi, t)?.snapshots);
            info!("landmark variant needs a static matrix; its columns stay empty");
        }
    }
    emit(args.out.as_ref(), &join_series(&series))
}

/// One row per measurement count, one column group per method; methods without
/// a snapshot at that count leave their cells empty.
fn join_series(series: &[Option<Vec<Snapshot>>]) -> String {
    let mut rows: BTreeMap<usize, (f64, Vec<Option<&Snapshot>>)> = BTreeMap::new();
    for (m, snaps) in series.iter().enumerate() {
        for s in snaps.iter().flatten() {
            let row = rows
                .entry(s.measurements)
                .or_insert_with(|| (s.measurements_per_node, vec![None; series.len()]));
            row.1[m] = Some(s);
        }
    }
    let mut out = String::from("measurements_per_node");
    for name in METHODS {
        for col in ["stress", "mae", "ree_p50", "ree_p90"] {
            write!(out, ",{name}_{col}").unwrap();
        }
    }
    out.push('\n');
    for (per_node, cells) in rows.values() {
        out.push_str(&format_sig(*per_node));
        for cell in cells {
            match cell {
                Some(s) => {
                    for v in [s.stress, s.mae, s.ree_p50, s.ree_p90] {
                        write!(out, ",{}", format_sig(v)).unwrap();
                    }
                }
                None => out.push_str(",,,,"),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(measurements: usize, stress: f64) -> Snapshot {
        Snapshot {
            measurements,
            measurements_per_node: measurements as f64 / 2.0,
            stress,
            mae: 1.0,
            ree_p50: 0.5,
            ree_p90: 0.9,
            train_stress: None,
        }
    }

    #[test]
    fn join_leaves_gaps_empty() {
        let out = join_series(&[Some(vec![snap(2, 0.1), snap(4, 0.05)]), Some(vec![snap(4, 0.2)]), None]);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split(',').count(), 13);
        assert_eq!(lines[1], "1,0.1,1,0.5,0.9,,,,,,,,");
        assert_eq!(lines[2], "2,0.05,1,0.5,0.9,0.2,1,0.5,0.9,,,,");
    }

    #[test]
    fn cdf_counts_values_at_or_below_grid() {
        let out = ree_cdf(&[0.1, 0.2, 0.4, 0.8], &[0.2, 1.0]);
        assert_eq!(out, "ree,cdf\n0.2,0.5\n1,1\n");
    }
}
