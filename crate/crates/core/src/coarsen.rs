//! Projection of agent trajectories onto 4 nodes x 3 income groups.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::abm::{AgentRecord, AgentTrajectory, BlockRecord, Location};
use crate::error::{Error, Result};
use crate::graph::{ExogenousSeries, SystemState, N_SUBPOPS, OUTMIGRATED, RURAL, SUBURBAN, URBAN};
use crate::seed::stage_rng;

pub const N_COARSE_NODES: usize = 4;

/// Zone cutoffs on normalized distance to the business district.
pub const REFERENCE_ZONE_THRESHOLDS: (f64, f64) = (0.126, 0.355);
/// Income tertile cutoffs of the reference case study, in dollars per year.
pub const REFERENCE_INCOME_THRESHOLDS: (f64, f64) = (26_500.0, 36_700.0);
/// Train, validation and test fractions of the reference study.
pub const DEFAULT_SPLITS: (f64, f64, f64) = (0.5, 0.15, 0.35);
/// Real-world households behind one representative agent.
pub const DEFAULT_AGENTS_PER_REPRESENTATIVE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregationRules {
    pub zone_thresholds: (f64, f64),
    pub income_thresholds: (f64, f64),
}

impl AggregationRules {
    pub fn new(zone_thresholds: (f64, f64), income_thresholds: (f64, f64)) -> Result<Self> {
        let rules = Self {
            zone_thresholds,
            income_thresholds,
        };
        rules.validate()?;
        Ok(rules)
    }

    pub fn reference() -> Self {
        Self {
            zone_thresholds: REFERENCE_ZONE_THRESHOLDS,
            income_thresholds: REFERENCE_INCOME_THRESHOLDS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (d1, d2) = self.zone_thresholds;
        let (i1, i2) = self.income_thresholds;
        if !(d1 < d2) {
            return Err(Error::Config(format!("zone thresholds must increase, got ({d1}, {d2})")));
        }
        if !(i1 < i2) {
            return Err(Error::Config(format!("income thresholds must increase, got ({i1}, {i2})")));
        }
        Ok(())
    }
}

/// How income cutoffs are chosen for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMode {
    Fixed(AggregationRules),
    /// Tertiles of the run's initial population, frozen for the whole run.
    AutoTertile { zone_thresholds: (f64, f64) },
}

/// Urban up to and including `d1`, suburban up to and including `d2`, rural beyond.
pub fn classify_zone(d: f64, rules: &AggregationRules) -> usize {
    let (d1, d2) = rules.zone_thresholds;
    if d <= d1 {
        URBAN
    } else if d <= d2 {
        SUBURBAN
    } else {
        RURAL
    }
}

/// Low up to and including `i1`, middle up to and including `i2`, high beyond.
pub fn classify_income(income: f64, thresholds: (f64, f64)) -> usize {
    if income <= thresholds.0 {
        0
    } else if income <= thresholds.1 {
        1
    } else {
        2
    }
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Empirical 1/3 and 2/3 quantiles with linear interpolation.
pub fn compute_income_thresholds(incomes: &[f64]) -> Result<(f64, f64)> {
    if incomes.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 incomes, got {}", incomes.len())));
    }
    let mut sorted = incomes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let t = (quantile_sorted(&sorted, 1.0 / 3.0), quantile_sorted(&sorted, 2.0 / 3.0));
    if !(t.0 < t.1) {
        return Err(Error::Domain(format!("degenerate income tertiles ({}, {})", t.0, t.1)));
    }
    Ok(t)
}

/// Counts of people per (zone, income group) in one snapshot. Outmigrated
/// agents land in the last node.
pub fn aggregate_snapshot(agents: &[AgentRecord], blocks: &[BlockRecord], rules: &AggregationRules, factor: f64) -> Result<SystemState> {
    let mut state = SystemState::zeros(N_COARSE_NODES);
    for a in agents {
        let node = match a.location {
            Location::Outmigrated => OUTMIGRATED,
            Location::Housed(bg) => {
                let block = blocks
                    .get(bg)
                    .filter(|b| b.id == bg)
                    .or_else(|| blocks.iter().find(|b| b.id == bg))
                    .ok_or_else(|| Error::Contract(format!("agent {} lives in unknown block group {bg}", a.id)))?;
                classify_zone(block.distance, rules)
            }
        };
        state.counts[node][classify_income(a.income, rules.income_thresholds)] += factor;
    }
    Ok(state)
}

/// Coarse view of one run: states per year plus the exogenous series.
///
/// `exogenous.growth[y]` holds the inmigrants created during the step from
/// year `y` to `y + 1`, by income group, at the node they first settled in
/// (or the outmigrated node if they never found housing). It is zero for the
/// last year.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseTrajectory {
    pub run_id: usize,
    pub states: Vec<SystemState>,
    pub exogenous: ExogenousSeries,
}

impl CoarseTrajectory {
    pub fn n_steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn initial(&self) -> &SystemState {
        &self.states[0]
    }
}

pub fn resolve_rules(run: &AgentTrajectory, mode: &ThresholdMode) -> Result<AggregationRules> {
    match *mode {
        ThresholdMode::Fixed(rules) => {
            rules.validate()?;
            Ok(rules)
        }
        ThresholdMode::AutoTertile { zone_thresholds } => {
            let first = run
                .snapshots
                .first()
                .ok_or_else(|| Error::Contract("run has no snapshots".into()))?;
            let incomes: Vec<f64> = first.agents.iter().map(|a| a.income).collect();
            AggregationRules::new(zone_thresholds, compute_income_thresholds(&incomes)?)
        }
    }
}

pub fn build_coarse_trajectory(run_id: usize, run: &AgentTrajectory, rules: &AggregationRules, factor: f64) -> Result<CoarseTrajectory> {
    rules.validate()?;
    let n_years = run.snapshots.len();
    if n_years == 0 {
        return Err(Error::Contract("run has no snapshots".into()));
    }
    let states = run
        .snapshots
        .iter()
        .map(|s| aggregate_snapshot(&s.agents, &s.blocks, rules, factor))
        .collect::<Result<Vec<_>>>()?;

    let mut growth = vec![vec![[0.0; N_SUBPOPS]; N_COARSE_NODES]; n_years];
    for y in 0..n_years - 1 {
        let before = run.snapshots[y].agents.len();
        let next = &run.snapshots[y + 1];
        for a in next.agents.iter().filter(|a| a.id >= before) {
            let node = match a.location {
                Location::Outmigrated => OUTMIGRATED,
                Location::Housed(bg) => {
                    let block = next
                        .blocks
                        .iter()
                        .find(|b| b.id == bg)
                        .ok_or_else(|| Error::Contract(format!("unknown block group {bg}")))?;
                    classify_zone(block.distance, rules)
                }
            };
            growth[y][node][classify_income(a.income, rules.income_thresholds)] += factor;
        }
    }

    let mut capacity: Vec<Vec<f64>> = run
        .snapshots
        .iter()
        .map(|s| {
            let mut c = vec![0.0; N_COARSE_NODES];
            for b in &s.blocks {
                c[classify_zone(b.distance, rules)] += b.supply as f64 * factor;
            }
            c
        })
        .collect();
    let outmigrated_capacity: f64 = capacity[0][..OUTMIGRATED].iter().sum();
    for (y, c) in capacity.iter_mut().enumerate() {
        c[OUTMIGRATED] = outmigrated_capacity;
        if let Some(z) = c.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Domain(format!("zone {z} has no housing capacity in year {y}")));
        }
    }

    Ok(CoarseTrajectory {
        run_id,
        states,
        exogenous: ExogenousSeries {
            decay: vec![vec![[0.0; N_SUBPOPS]; N_COARSE_NODES]; n_years],
            growth,
            capacity,
        },
    })
}

/// Shuffles by `seed` and cuts at `round(f_train * n)` and
/// `round((f_train + f_val) * n)`, ties to even; test takes the rest.
pub fn split_dataset<T>(mut runs: Vec<T>, fractions: (f64, f64, f64), seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(0.0..=1.0).contains(f)) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be in [0,1] and sum to 1")));
    }
    let n = runs.len() as f64;
    let n_train = (ft * n).round_ties_even() as usize;
    let n_train_val = ((ft + fv) * n).round_ties_even() as usize;
    runs.shuffle(&mut stage_rng(seed, "split", 0));
    let test = runs.split_off(n_train_val.min(runs.len()));
    let val = runs.split_off(n_train.min(runs.len()));
    Ok((runs, val, test))
}

pub fn coarse_path(dir: &Path, run: usize) -> PathBuf {
    dir.join(format!("coarse_{run}.csv"))
}

/// Columns `year,node,subpop,count,G,C`, one row per (year, node, subpop).
pub fn write_coarse_csv(path: &Path, traj: &CoarseTrajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["year", "node", "subpop", "count", "G", "C"])?;
    for (y, state) in traj.states.iter().enumerate() {
        for (node, counts) in state.counts.iter().enumerate() {
            for (s, count) in counts.iter().enumerate() {
                w.write_record([
                    y.to_string(),
                    node.to_string(),
                    s.to_string(),
                    count.to_string(),
                    traj.exogenous.growth[y][node][s].to_string(),
                    traj.exogenous.capacity[y][node].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_coarse_csv(path: &Path, run_id: usize) -> Result<CoarseTrajectory> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["year", "node", "subpop", "count", "G", "C"] {
        return Err(Error::parse(path, 1, "expected header year,node,subpop,count,G,C"));
    }
    let mut states: Vec<SystemState> = Vec::new();
    let mut growth: Vec<Vec<[f64; N_SUBPOPS]>> = Vec::new();
    let mut capacity: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        let get = |k: usize, name: &str| -> Result<&str> {
            rec.get(k).ok_or_else(|| Error::parse(path, line, format!("missing {name}")))
        };
        let int = |k: usize, name: &str| -> Result<usize> {
            get(k, name)?
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad {name}")))
        };
        let real = |k: usize, name: &str| -> Result<f64> {
            get(k, name)?
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad {name}")))
        };
        let (year, node, s) = (int(0, "year")?, int(1, "node")?, int(2, "subpop")?);
        if node >= N_COARSE_NODES || s >= N_SUBPOPS {
            return Err(Error::parse(path, line, format!("node {node} / subpop {s} out of range")));
        }
        if year == states.len() {
            states.push(SystemState::zeros(N_COARSE_NODES));
            growth.push(vec![[0.0; N_SUBPOPS]; N_COARSE_NODES]);
            capacity.push(vec![0.0; N_COARSE_NODES]);
        } else if year + 1 != states.len() {
            return Err(Error::parse(path, line, format!("year {year} out of order")));
        }
        states[year].counts[node][s] = real(3, "count")?;
        growth[year][node][s] = real(4, "G")?;
        let c = real(5, "C")?;
        if s > 0 && capacity[year][node] != c {
            return Err(Error::parse(path, line, "capacity differs between subpopulations of one node"));
        }
        capacity[year][node] = c;
    }
    if states.is_empty() {
        return Err(Error::parse(path, 1, "no data rows"));
    }
    let n = states.len();
    let traj = CoarseTrajectory {
        run_id,
        states,
        exogenous: ExogenousSeries {
            growth,
            decay: vec![vec![[0.0; N_SUBPOPS]; N_COARSE_NODES]; n],
            capacity,
        },
    };
    traj.exogenous
        .validate()
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    Ok(traj)
}
