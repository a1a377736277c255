//! `key=value` run configuration. Command-line flags override file values.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use popflux::coarsen::{AggregationRules, ThresholdMode, DEFAULT_AGENTS_PER_REPRESENTATIVE, DEFAULT_SPLITS, REFERENCE_ZONE_THRESHOLDS};
use popflux::ebm::{BetaForm, EbmConfig, FluxScale};
use popflux::graph::RegionGraph;
use popflux::metrics::DEFAULT_MAPE_FLOOR;
use popflux::train::{TrainConfig, DEFAULT_EPS, DEFAULT_TOLERANCE};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

pub const KEYS: &[&str] = &[
    "seed",
    "n_runs",
    "years",
    "n_block_groups",
    "thresholds",
    "agents_per_representative",
    "splits",
    "topology",
    "dt",
    "beta",
    "flux_scale",
    "learning_rate",
    "patience",
    "max_epochs",
    "checkpoint_every",
    "mape_floor",
    "grad_instances",
    "grad_tolerance",
    "grad_eps",
    "out",
];

fn canonical(key: &str) -> Option<&'static str> {
    let key = key.trim().replace('-', "_");
    let key = match key.as_str() {
        "master_seed" => "seed",
        "output_dir" => "out",
        other => other,
    };
    KEYS.iter().copied().find(|k| *k == key)
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_file(text: &str, source: &Path) -> Result<BTreeMap<&'static str, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return err(format!("{}:{}: expected key=value", source.display(), i + 1));
        };
        let Some(key) = canonical(k) else {
            return err(format!("{}:{}: unknown key '{}'", source.display(), i + 1, k.trim()));
        };
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Thresholds {
    Auto,
    Fixed(AggregationRules),
}

#[derive(Debug, Clone)]
pub enum TopologySpec {
    Complete,
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub master_seed: u64,
    pub n_runs: usize,
    pub years: usize,
    pub n_block_groups: usize,
    pub thresholds: Thresholds,
    pub agents_per_representative: f64,
    pub splits: (f64, f64, f64),
    pub topology: TopologySpec,
    pub train: TrainConfig,
    pub mape_floor: f64,
    pub grad_instances: usize,
    pub grad_tolerance: f64,
    pub grad_eps: f64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 7,
            n_runs: 12,
            years: 30,
            n_block_groups: 60,
            thresholds: Thresholds::Auto,
            agents_per_representative: DEFAULT_AGENTS_PER_REPRESENTATIVE,
            splits: DEFAULT_SPLITS,
            topology: TopologySpec::Complete,
            train: TrainConfig {
                checkpoint_every: 100,
                ..TrainConfig::default()
            },
            mape_floor: DEFAULT_MAPE_FLOOR,
            grad_instances: 20,
            grad_tolerance: DEFAULT_TOLERANCE,
            grad_eps: DEFAULT_EPS,
            out: PathBuf::from("popflux-out"),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.trim()
        .parse()
        .map_err(|_| ConfigError(format!("{key}: cannot parse '{v}'")))
}

fn reals(key: &str, v: &str, n: usize) -> Result<Vec<f64>, ConfigError> {
    let parts: Vec<f64> = v.split(',').map(|p| num(key, p)).collect::<Result<_, _>>()?;
    if parts.len() != n {
        return err(format!("{key}: expected {n} comma-separated numbers, got '{v}'"));
    }
    Ok(parts)
}

impl RunConfig {
    /// Builds a config from file values overlaid with flag values, then validates it.
    pub fn resolve(file: BTreeMap<&'static str, String>, flags: BTreeMap<&'static str, String>) -> Result<Self, ConfigError> {
        let mut merged = file;
        merged.extend(flags);
        let mut c = RunConfig::default();
        for (key, v) in &merged {
            let v = v.as_str();
            match *key {
                "seed" => c.master_seed = num(key, v)?,
                "n_runs" => c.n_runs = num(key, v)?,
                "years" => c.years = num(key, v)?,
                "n_block_groups" => c.n_block_groups = num(key, v)?,
                "thresholds" => {
                    c.thresholds = if v.eq_ignore_ascii_case("auto") || v.eq_ignore_ascii_case("auto-tertile") {
                        Thresholds::Auto
                    } else {
                        let t = reals(key, v, 4)?;
                        Thresholds::Fixed(AggregationRules::new((t[0], t[1]), (t[2], t[3])).map_err(|e| ConfigError(format!("{key}: {e}")))?)
                    }
                }
                "agents_per_representative" => c.agents_per_representative = num(key, v)?,
                "splits" => {
                    let s = reals(key, v, 3)?;
                    c.splits = (s[0], s[1], s[2]);
                }
                "topology" => {
                    c.topology = if v == "complete" {
                        TopologySpec::Complete
                    } else {
                        TopologySpec::File(PathBuf::from(v))
                    }
                }
                "dt" => c.train.ebm.dt = num(key, v)?,
                "beta" => {
                    c.train.ebm.beta = match v {
                        "normalized" => BetaForm::Normalized,
                        "literal" => BetaForm::Literal,
                        _ => return err(format!("beta: expected 'normalized' or 'literal', got '{v}'")),
                    }
                }
                "flux_scale" => {
                    c.train.ebm.flux_scale = match v {
                        "unit" => FluxScale::Unit,
                        "source-capacity" => FluxScale::SourceCapacity,
                        _ => return err(format!("flux_scale: expected 'unit' or 'source-capacity', got '{v}'")),
                    }
                }
                "learning_rate" => c.train.learning_rate = num(key, v)?,
                "patience" => c.train.patience = num(key, v)?,
                "max_epochs" => c.train.max_epochs = num(key, v)?,
                "checkpoint_every" => c.train.checkpoint_every = num(key, v)?,
                "mape_floor" => c.mape_floor = num(key, v)?,
                "grad_instances" => c.grad_instances = num(key, v)?,
                "grad_tolerance" => c.grad_tolerance = num(key, v)?,
                "grad_eps" => c.grad_eps = num(key, v)?,
                "out" => c.out = PathBuf::from(v),
                _ => unreachable!("keys are canonicalized on entry"),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_runs == 0 || self.years == 0 || self.n_block_groups == 0 {
            return err("n_runs, years and n_block_groups must be at least 1");
        }
        if !(self.agents_per_representative > 0.0 && self.agents_per_representative.is_finite()) {
            return err("agents_per_representative must be positive");
        }
        let (a, b, t) = self.splits;
        if [a, b, t].iter().any(|f| !(0.0..=1.0).contains(f)) || (a + b + t - 1.0).abs() > 1e-9 {
            return err(format!("splits {a},{b},{t} must lie in [0,1] and sum to 1"));
        }
        if !(a > 0.0) {
            return err("the training split must be nonempty");
        }
        self.train.ebm.validate().map_err(|e| ConfigError(e.to_string()))?;
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            return err("learning_rate must be positive");
        }
        if !(self.mape_floor >= 0.0) {
            return err("mape_floor must be nonnegative");
        }
        if !(self.grad_tolerance > 0.0) || !(self.grad_eps > 0.0) {
            return err("grad_tolerance and grad_eps must be positive");
        }
        Ok(())
    }

    pub fn ebm(&self) -> &EbmConfig {
        &self.train.ebm
    }

    pub fn threshold_mode(&self) -> ThresholdMode {
        match &self.thresholds {
            Thresholds::Auto => ThresholdMode::AutoTertile {
                zone_thresholds: REFERENCE_ZONE_THRESHOLDS,
            },
            Thresholds::Fixed(rules) => ThresholdMode::Fixed(*rules),
        }
    }

    pub fn graph(&self) -> popflux::Result<RegionGraph> {
        match &self.topology {
            TopologySpec::Complete => Ok(RegionGraph::case_study()),
            TopologySpec::File(path) => {
                if !path.exists() {
                    return Err(popflux::Error::MissingFile(path.clone()));
                }
                RegionGraph::from_text(&std::fs::read_to_string(path)?, path)
            }
        }
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.out.join("runs")
    }
    pub fn coarse_dir(&self) -> PathBuf {
        self.out.join("coarse")
    }
    pub fn train_dir(&self) -> PathBuf {
        self.out.join("train")
    }
    pub fn eval_dir(&self) -> PathBuf {
        self.out.join("eval")
    }
    pub fn simulate_dir(&self) -> PathBuf {
        self.out.join("simulate")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> BTreeMap<&'static str, String> {
        parse_file(text, Path::new("test.conf")).unwrap()
    }

    #[test]
    fn defaults_validate() {
        let c = RunConfig::resolve(BTreeMap::new(), BTreeMap::new()).unwrap();
        assert_eq!(c.n_runs, 12);
        assert_eq!(c.train.patience, 100);
        assert_eq!(c.thresholds, Thresholds::Auto);
    }

    #[test]
    fn flags_win_over_file() {
        let f = file("# comment\nseed = 3\npatience=7 # trailing\nmaster-seed=4\n");
        let flags = BTreeMap::from([("patience", "9".to_string())]);
        let c = RunConfig::resolve(f, flags).unwrap();
        assert_eq!(c.master_seed, 4);
        assert_eq!(c.train.patience, 9);
    }

    #[test]
    fn fixed_reference_thresholds_accepted_verbatim() {
        let c = RunConfig::resolve(file("thresholds=0.126,0.355,26500,36700"), BTreeMap::new()).unwrap();
        assert_eq!(c.thresholds, Thresholds::Fixed(AggregationRules::reference()));
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "splits=0.5,0.3,0.3",
            "splits=1.2,-0.2,0",
            "dt=0",
            "dt=-1",
            "learning_rate=0",
            "thresholds=0.5,0.2,1,2",
            "n_runs=0",
            "beta=weird",
            "patience=-3",
        ] {
            assert!(RunConfig::resolve(file(bad), BTreeMap::new()).is_err(), "{bad}");
        }
        assert!(parse_file("colour=blue", Path::new("x")).is_err());
        assert!(parse_file("no equals sign", Path::new("x")).is_err());
    }
}
