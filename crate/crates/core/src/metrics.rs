//! MAPE/MAE scoring of rollouts against observed coarse trajectories.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::coarsen::CoarseTrajectory;
use crate::ebm::{euler_rollout, EbmConfig, EbmParams};
use crate::error::{Error, Result};
use crate::graph::{RegionGraph, SystemState, OUTMIGRATED};
use crate::par::Exec;

/// Observed entries below this many people are left out of MAPE.
pub const DEFAULT_MAPE_FLOOR: f64 = 1000.0;

fn paired_entries<'a>(predicted: &'a [SystemState], observed: &'a [SystemState]) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    if predicted.len() != observed.len() || predicted.iter().zip(observed).any(|(p, o)| p.n_nodes() != o.n_nodes()) {
        return Err(Error::Contract("predicted and observed trajectories differ in shape".into()));
    }
    Ok(predicted
        .iter()
        .zip(observed)
        .flat_map(|(p, o)| p.iter_entries().zip(o.iter_entries())))
}

/// Mean of `|pred - obs| / |obs| * 100` over entries with `|obs| >= floor`.
pub fn mape(predicted: &[SystemState], observed: &[SystemState], floor: f64) -> Result<f64> {
    if !(floor >= 0.0) {
        return Err(Error::Config(format!("MAPE floor must be nonnegative, got {floor}")));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, o) in paired_entries(predicted, observed)? {
        if o.abs() < floor || o == 0.0 {
            continue;
        }
        total += (p - o).abs() / o.abs();
        count += 1;
    }
    if count == 0 {
        return Err(Error::UndefinedMetric(format!("no observed entry reaches the floor of {floor}")));
    }
    Ok(100.0 * total / count as f64)
}

/// Mean absolute error in people.
pub fn mae(predicted: &[SystemState], observed: &[SystemState]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, o) in paired_entries(predicted, observed)? {
        total += (p - o).abs();
        count += 1;
    }
    if count == 0 {
        return Err(Error::UndefinedMetric("empty trajectories".into()));
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub run_id: usize,
    pub mape: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub best: f64,
    pub worst: f64,
}

impl Spread {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Option<Self> {
        let n = values.clone().count();
        if n == 0 {
            return None;
        }
        Some(Self {
            mean: values.clone().sum::<f64>() / n as f64,
            best: values.clone().fold(f64::INFINITY, f64::min),
            worst: values.fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub runs: Vec<RunMetrics>,
    /// Runs whose rollout diverged or whose MAPE was undefined.
    pub flagged: Vec<(usize, String)>,
    pub mape: Spread,
    pub mae: Spread,
}

impl EvalSummary {
    pub fn worst_mape_run(&self) -> Option<&RunMetrics> {
        self.runs.iter().max_by(|a, b| a.mape.total_cmp(&b.mape))
    }
    pub fn best_mape_run(&self) -> Option<&RunMetrics> {
        self.runs.iter().min_by(|a, b| a.mape.total_cmp(&b.mape))
    }
    pub fn worst_mae_run(&self) -> Option<&RunMetrics> {
        self.runs.iter().max_by(|a, b| a.mae.total_cmp(&b.mae))
    }
    pub fn best_mae_run(&self) -> Option<&RunMetrics> {
        self.runs.iter().min_by(|a, b| a.mae.total_cmp(&b.mae))
    }
}

/// Rolls out a run from its observed initial state under its own exogenous series.
pub fn predict(params: &EbmParams, run: &CoarseTrajectory, graph: &RegionGraph, config: &EbmConfig) -> Result<Vec<SystemState>> {
    euler_rollout(run.initial(), params, &run.exogenous, graph, config, run.n_steps())
}

/// Metrics of one run over the predicted years (the initial state is given,
/// not predicted, and is left out).
pub fn score_run(predicted: &[SystemState], run: &CoarseTrajectory, floor: f64) -> Result<RunMetrics> {
    let (p, o) = if run.states.len() > 1 {
        (&predicted[1..], &run.states[1..])
    } else {
        (predicted, &run.states[..])
    };
    Ok(RunMetrics {
        run_id: run.run_id,
        mape: mape(p, o, floor)?,
        mae: mae(p, o)?,
    })
}

pub fn evaluate_split(
    params: &EbmParams,
    split: &[CoarseTrajectory],
    graph: &RegionGraph,
    config: &EbmConfig,
    floor: f64,
    exec: Exec,
) -> Result<EvalSummary> {
    if split.is_empty() {
        return Err(Error::Contract("cannot evaluate an empty split".into()));
    }
    let scored = exec.map(split, |run| predict(params, run, graph, config).and_then(|p| score_run(&p, run, floor)));
    let mut runs = Vec::new();
    let mut flagged = Vec::new();
    for (run, result) in split.iter().zip(scored) {
        match result {
            Ok(m) => runs.push(m),
            Err(e @ (Error::Diverged { .. } | Error::UndefinedMetric(_))) => flagged.push((run.run_id, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    let mape_spread = Spread::of(runs.iter().map(|r| r.mape));
    let mae_spread = Spread::of(runs.iter().map(|r| r.mae));
    match (mape_spread, mae_spread) {
        (Some(mape), Some(mae)) => Ok(EvalSummary {
            runs,
            flagged,
            mape,
            mae,
        }),
        _ => Err(Error::UndefinedMetric("every run in the split was flagged".into())),
    }
}

pub const SUMMARY_HEADER: &str = "split,mape_mean,mape_best,mape_worst,mae_mean,mae_best,mae_worst";

/// One `summary.csv` row. MAPE in percent, MAE in thousands of people.
pub fn summary_row(split: &str, s: &EvalSummary) -> String {
    format!(
        "{split},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
        s.mape.mean,
        s.mape.best,
        s.mape.worst,
        s.mae.mean / 1000.0,
        s.mae.best / 1000.0,
        s.mae.worst / 1000.0
    )
}

pub fn overlay_path(dir: &Path, run: usize) -> PathBuf {
    dir.join(format!("overlay_{run}.csv"))
}

pub fn outmigration_path(dir: &Path, run: usize) -> PathBuf {
    dir.join(format!("outmigration_{run}.csv"))
}

/// Writes `overlay_<run>.csv` (year,node,subpop,observed,predicted) and
/// `outmigration_<run>.csv` (year,cumulative_observed,cumulative_predicted).
pub fn export_series(run: &CoarseTrajectory, predicted: &[SystemState], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if predicted.len() != run.states.len() {
        return Err(Error::Contract("prediction length differs from run".into()));
    }
    let mut overlay = String::from("year,node,subpop,observed,predicted\n");
    let mut outflow = String::from("year,cumulative_observed,cumulative_predicted\n");
    for (y, (o, p)) in run.states.iter().zip(predicted).enumerate() {
        for (node, (oc, pc)) in o.counts.iter().zip(&p.counts).enumerate() {
            for s in 0..oc.len() {
                let _ = writeln!(overlay, "{y},{node},{s},{:?},{:?}", oc[s], pc[s]);
            }
        }
        let total = |x: &SystemState| x.counts.get(OUTMIGRATED).map_or(0.0, |c| c.iter().sum::<f64>());
        let _ = writeln!(outflow, "{y},{:?},{:?}", total(o), total(p));
    }
    let (op, mp) = (overlay_path(dir, run.run_id), outmigration_path(dir, run.run_id));
    fs::write(&op, overlay)?;
    fs::write(&mp, outflow)?;
    Ok((op, mp))
}

/// Parses an overlay file back into (observed, predicted) trajectories.
pub fn read_overlay(path: &Path, n_nodes: usize) -> Result<(Vec<SystemState>, Vec<SystemState>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut observed: Vec<SystemState> = Vec::new();
    let mut predicted: Vec<SystemState> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(path, line, format!("bad column {k}")))
        };
        let (y, node, s) = (num(0)? as usize, num(1)? as usize, num(2)? as usize);
        if y == observed.len() {
            observed.push(SystemState::zeros(n_nodes));
            predicted.push(SystemState::zeros(n_nodes));
        }
        if node >= n_nodes || s >= 3 || y >= observed.len() {
            return Err(Error::parse(path, line, "index out of range"));
        }
        observed[y].counts[node][s] = num(3)?;
        predicted[y].counts[node][s] = num(4)?;
    }
    Ok((observed, predicted))
}

/// Parses an outmigration file into (year, observed, predicted) rows.
pub fn read_outmigration(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let bad = || Error::parse(path, i + 2, "bad outmigration row");
            Ok((
                rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
                rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
                rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
            ))
        })
        .collect()
}
