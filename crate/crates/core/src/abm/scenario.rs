use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::{derive_u64, stage_rng};

pub const VACANCY_RANGE: (f64, f64) = (0.05, 0.20);
pub const POPULATION_GROWTH_RANGE: (f64, f64) = (0.0, 0.03);
pub const INMIGRANT_PERCENTILE_RANGE: (f64, f64) = (0.2, 0.8);
pub const BUILDING_GROWTH_RANGE: (f64, f64) = (0.0, 0.02);
pub const FLOOD_AVOIDER_FRACTION: f64 = 0.6;

/// Randomized exogenous factors of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    pub initial_vacancy_rate: f64,
    /// Inmigrants per housed agent per year.
    pub population_growth_rate: f64,
    /// Percentile of the base income distribution that inmigrant incomes center on.
    pub inmigrant_income_percentile: f64,
    /// New representative properties per existing property per year.
    pub building_growth_rate: f64,
    pub flood_avoider_fraction: f64,
    pub seed: u64,
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.fractions() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn fractions(&self) -> [(&'static str, f64); 5] {
        [
            ("initial_vacancy_rate", self.initial_vacancy_rate),
            ("population_growth_rate", self.population_growth_rate),
            ("inmigrant_income_percentile", self.inmigrant_income_percentile),
            ("building_growth_rate", self.building_growth_rate),
            ("flood_avoider_fraction", self.flood_avoider_fraction),
        ]
    }

    /// Flat `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.fractions() {
            let _ = writeln!(out, "{k}={v:?}");
        }
        let _ = writeln!(out, "seed={}", self.seed);
        out
    }

    pub fn from_text(text: &str, source: &Path) -> Result<Self> {
        let mut p = ScenarioParams {
            initial_vacancy_rate: f64::NAN,
            population_growth_rate: f64::NAN,
            inmigrant_income_percentile: f64::NAN,
            building_growth_rate: f64::NAN,
            flood_avoider_fraction: f64::NAN,
            seed: 0,
        };
        let mut seen_seed = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, i + 1, "expected key=value"))?;
            let bad = |_| Error::parse(source, i + 1, format!("bad value for {k}: {v:?}"));
            match k.trim() {
                "seed" => {
                    p.seed = v.trim().parse().map_err(|_| Error::parse(source, i + 1, "bad seed"))?;
                    seen_seed = true;
                }
                "initial_vacancy_rate" => p.initial_vacancy_rate = v.trim().parse().map_err(bad)?,
                "population_growth_rate" => p.population_growth_rate = v.trim().parse().map_err(bad)?,
                "inmigrant_income_percentile" => p.inmigrant_income_percentile = v.trim().parse().map_err(bad)?,
                "building_growth_rate" => p.building_growth_rate = v.trim().parse().map_err(bad)?,
                "flood_avoider_fraction" => p.flood_avoider_fraction = v.trim().parse().map_err(bad)?,
                other => return Err(Error::parse(source, i + 1, format!("unknown key {other:?}"))),
            }
        }
        if !seen_seed || p.fractions().iter().any(|(_, v)| v.is_nan()) {
            return Err(Error::parse(source, text.lines().count(), "scenario file is missing keys"));
        }
        p.validate()?;
        Ok(p)
    }
}

/// Deterministic scenario for run `run_index` of an ensemble.
pub fn sample_scenario(master_seed: u64, run_index: u64) -> ScenarioParams {
    let mut rng = stage_rng(master_seed, "scenario", run_index);
    let mut draw = |(lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..hi) } else { lo };
    ScenarioParams {
        initial_vacancy_rate: draw(VACANCY_RANGE),
        population_growth_rate: draw(POPULATION_GROWTH_RANGE),
        inmigrant_income_percentile: draw(INMIGRANT_PERCENTILE_RANGE),
        building_growth_rate: draw(BUILDING_GROWTH_RANGE),
        flood_avoider_fraction: FLOOD_AVOIDER_FRACTION,
        seed: derive_u64(master_seed, "abm", run_index),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_independent() {
        assert_eq!(sample_scenario(7, 0), sample_scenario(7, 0));
        let (a, b) = (sample_scenario(7, 0), sample_scenario(7, 1));
        assert_ne!(a.initial_vacancy_rate, b.initial_vacancy_rate);
        assert_ne!(a.seed, b.seed);
    }

    #[test]
    fn draws_stay_in_ranges() {
        for run in 0..10_000 {
            let p = sample_scenario(99, run);
            assert!((0.05..=0.20).contains(&p.initial_vacancy_rate));
            assert!((0.0..=0.03).contains(&p.population_growth_rate));
            assert!((0.2..=0.8).contains(&p.inmigrant_income_percentile));
            assert!((0.0..=0.02).contains(&p.building_growth_rate));
            assert_eq!(p.flood_avoider_fraction, 0.6);
        }
    }

    #[test]
    fn text_round_trip() {
        let p = sample_scenario(3, 4);
        assert_eq!(ScenarioParams::from_text(&p.to_text(), Path::new("s")).unwrap(), p);
        assert!(ScenarioParams::from_text("seed=1\n", Path::new("s")).is_err());
        let bad = p.to_text().replace("flood_avoider_fraction=0.6", "flood_avoider_fraction=1.5");
        assert!(matches!(ScenarioParams::from_text(&bad, Path::new("s")), Err(Error::Config(_))));
    }
}
