use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

use super::market::{first_choice_demand, match_market, search, Candidate, UtilityWeights};
use super::scenario::ScenarioParams;
use super::{AgentRecord, AgentTrajectory, BlockGroup, BlockRecord, HouseholdAgent, Location, YearSnapshot};

#[derive(Debug, Clone, PartialEq)]
pub struct AbmConfig {
    /// Share of housed agents that vacate and re-enter the market each year.
    pub mover_fraction: f64,
    pub income_median: f64,
    /// Standard deviation of log income.
    pub income_sigma: f64,
    /// Budget as a multiple of annual income.
    pub budget_multiple: f64,
    pub search_size: usize,
    pub weights: UtilityWeights,
    /// Share of block groups, closest to the center first, that are flood-prone.
    pub flood_prone_share: f64,
    /// Inclusive range of initial representative properties per block group.
    pub supply_range: (u32, u32),
    /// Reference price of a mid-quality, mid-distance property.
    pub base_price: f64,
    pub developer_rate: f64,
    pub quiet_years_for_price_cut: u32,
}

impl Default for AbmConfig {
    fn default() -> Self {
        Self {
            mover_fraction: 0.05,
            income_median: 31_000.0,
            income_sigma: 0.5,
            budget_multiple: 3.0,
            search_size: 10,
            weights: UtilityWeights::default(),
            flood_prone_share: 0.15,
            supply_range: (8, 20),
            base_price: 100_000.0,
            developer_rate: 0.05,
            quiet_years_for_price_cut: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct YearOutcome {
    pub created: usize,
    pub movers: usize,
    pub outmigrated: usize,
    pub excess_demand: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub year: usize,
    pub block_groups: Vec<BlockGroup>,
    /// Indexed by agent id.
    pub agents: Vec<HouseholdAgent>,
    pub params: ScenarioParams,
    pub config: AbmConfig,
    pub initial_population: usize,
    pub cumulative_created: usize,
    pub cumulative_outmigrated: usize,
}

/// Integer part plus a Bernoulli draw on the fractional part.
fn stochastic_round<R: Rng + ?Sized>(x: f64, rng: &mut R) -> usize {
    let base = x.floor();
    let extra = usize::from(rng.random::<f64>() < x - base);
    base as usize + extra
}

/// Upper bound on top-up rounds when placing the initial population.
const INITIAL_PLACEMENT_ROUNDS: usize = 1000;

impl World {
    /// Draws block groups and places an initial population at roughly the
    /// scenario's vacancy rate. Agents that find no property at setup are
    /// discarded rather than counted as outmigrants.
    pub fn new<R: Rng + ?Sized>(params: ScenarioParams, n_block_groups: usize, config: AbmConfig, rng: &mut R) -> Result<Self> {
        params.validate()?;
        if n_block_groups == 0 {
            return Err(Error::Config("need at least one block group".into()));
        }
        // stratified uniform distances, so every distance band is represented
        let mut distances: Vec<f64> = (0..n_block_groups)
            .map(|k| (k as f64 + rng.random::<f64>()) / n_block_groups as f64)
            .collect();
        distances.shuffle(rng);
        let mut by_distance: Vec<usize> = (0..n_block_groups).collect();
        by_distance.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
        let n_flood = (config.flood_prone_share * n_block_groups as f64).ceil() as usize;
        let mut flood_prone = vec![false; n_block_groups];
        for &k in &by_distance[..n_flood.min(n_block_groups)] {
            flood_prone[k] = true;
        }
        let block_groups = (0..n_block_groups)
            .map(|id| {
                let quality: f64 = rng.random();
                let distance = distances[id];
                BlockGroup {
                    id,
                    distance,
                    price: config.base_price * (0.5 + quality) * (1.25 - 0.5 * distance),
                    quality,
                    flood_prone: flood_prone[id],
                    supply: rng.random_range(config.supply_range.0..=config.supply_range.1),
                    occupied: 0,
                    quiet_years: 0,
                }
            })
            .collect();

        let mut world = Self {
            year: 0,
            block_groups,
            agents: Vec::new(),
            params,
            config,
            initial_population: 0,
            cumulative_created: 0,
            cumulative_outmigrated: 0,
        };
        let total_supply: u32 = world.block_groups.iter().map(|b| b.supply).sum();
        let target = (total_supply as f64 * (1.0 - params.initial_vacancy_rate)).round() as usize;
        let base = world.base_income_distribution()?;
        // Fresh households are drawn until the target occupancy is met, so
        // the initial vacancy rate holds even where cheap units run out.
        // Households that find nothing affordable are discarded.
        let mut housed: Vec<HouseholdAgent> = Vec::with_capacity(target);
        let mut next_id = 0;
        for _ in 0..INITIAL_PLACEMENT_ROUNDS {
            let need = target.saturating_sub(housed.len());
            if need == 0 {
                break;
            }
            let mut pending: Vec<HouseholdAgent> = (0..need)
                .map(|k| world.make_agent(k, base.sample(rng), rng))
                .collect();
            let candidates = world.shortlists(&pending, rng);
            let mut availability: Vec<u32> = world.block_groups.iter().map(BlockGroup::vacancies).collect();
            let outcome = match_market(&candidates, &mut availability);
            for a in &outcome.assignments {
                pending[a.agent_id].location = Some(Location::Housed(a.block_group));
                world.block_groups[a.block_group].occupied += 1;
            }
            for mut a in pending.into_iter().filter(|a| a.location.is_some()) {
                a.id = next_id;
                next_id += 1;
                housed.push(a);
            }
        }
        world.agents = housed;
        world.initial_population = world.agents.len();
        Ok(world)
    }

    fn base_income_distribution(&self) -> Result<LogNormal<f64>> {
        LogNormal::new(self.config.income_median.ln(), self.config.income_sigma)
            .map_err(|e| Error::Config(format!("income distribution: {e}")))
    }

    /// Inmigrant incomes: the base distribution shifted so its median sits at
    /// the scenario's percentile of the base distribution.
    fn inmigrant_income_distribution(&self) -> Result<LogNormal<f64>> {
        let p = self.params.inmigrant_income_percentile.clamp(1e-6, 1.0 - 1e-6);
        let z = Normal::standard().inverse_cdf(p);
        LogNormal::new(self.config.income_median.ln() + self.config.income_sigma * z, self.config.income_sigma)
            .map_err(|e| Error::Config(format!("income distribution: {e}")))
    }

    fn make_agent<R: Rng + ?Sized>(&self, id: usize, income: f64, rng: &mut R) -> HouseholdAgent {
        HouseholdAgent {
            id,
            income,
            budget: self.config.budget_multiple * income,
            location: None,
            avoids_flood: rng.random::<f64>() < self.params.flood_avoider_fraction,
        }
    }

    fn shortlists<R: Rng + ?Sized>(&self, searching: &[HouseholdAgent], rng: &mut R) -> Vec<Candidate> {
        searching
            .iter()
            .map(|a| Candidate {
                agent_id: a.id,
                income: a.income,
                ranked: search(a, &self.block_groups, &self.config.weights, self.config.search_size, rng),
            })
            .collect()
    }

    pub fn housed(&self) -> usize {
        self.agents
            .iter()
            .filter(|a| matches!(a.location, Some(Location::Housed(_))))
            .count()
    }

    pub fn snapshot(&self, created: usize, outmigrated: usize) -> YearSnapshot {
        YearSnapshot {
            year: self.year,
            agents: self
                .agents
                .iter()
                .map(|a| AgentRecord {
                    id: a.id,
                    income: a.income,
                    location: a.location.expect("no agent is left searching between years"),
                })
                .collect(),
            blocks: self.block_groups.iter().map(BlockRecord::from).collect(),
            created,
            outmigrated,
        }
    }

    /// One year with the inmigrant count drawn from the scenario growth rate.
    pub fn step_year<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<YearOutcome> {
        let expected = self.params.population_growth_rate * self.housed() as f64;
        let created = stochastic_round(expected, rng);
        self.advance_year(created, rng)
    }

    /// One year with an explicit number of inmigrants.
    pub fn advance_year<R: Rng + ?Sized>(&mut self, created: usize, rng: &mut R) -> Result<YearOutcome> {
        // inmigration
        let incomes = self.inmigrant_income_distribution()?;
        let first_new = self.agents.len();
        for k in 0..created {
            let agent = self.make_agent(first_new + k, incomes.sample(rng), rng);
            self.agents.push(agent);
        }

        // random vacancy
        let mut movers = 0;
        for id in 0..first_new {
            if let Some(Location::Housed(bg)) = self.agents[id].location {
                if rng.random::<f64>() < self.config.mover_fraction {
                    self.agents[id].location = None;
                    self.block_groups[bg].occupied -= 1;
                    movers += 1;
                }
            }
        }

        // search and rank
        let searching: Vec<HouseholdAgent> = self.agents.iter().filter(|a| a.location.is_none()).cloned().collect();
        let candidates = self.shortlists(&searching, rng);

        // matching
        let stayers: Vec<u32> = self.block_groups.iter().map(|b| b.occupied).collect();
        let demand = first_choice_demand(&candidates, self.block_groups.len());
        let mut availability: Vec<u32> = self.block_groups.iter().map(BlockGroup::vacancies).collect();
        let outcome = match_market(&candidates, &mut availability);
        for a in &outcome.assignments {
            self.agents[a.agent_id].location = Some(Location::Housed(a.block_group));
            self.block_groups[a.block_group].occupied += 1;
        }

        // developer
        let excess_demand: Vec<bool> = self
            .block_groups
            .iter()
            .enumerate()
            .map(|(k, b)| stayers[k] + demand[k] > b.supply)
            .collect();
        self.developer_update(&excess_demand);
        self.add_buildings(rng);

        // outmigration
        for &id in &outcome.unmatched {
            self.agents[id].location = Some(Location::Outmigrated);
        }

        self.year += 1;
        self.cumulative_created += created;
        self.cumulative_outmigrated += outcome.unmatched.len();
        Ok(YearOutcome {
            created,
            movers,
            outmigrated: outcome.unmatched.len(),
            excess_demand,
        })
    }

    /// Grows supply and price where demand exceeded supply; cuts price after
    /// a run of quiet years.
    pub fn developer_update(&mut self, excess_demand: &[bool]) {
        let rate = self.config.developer_rate;
        let rate_pct = (rate * 100.0).round() as u64;
        for (bg, &excess) in self.block_groups.iter_mut().zip(excess_demand) {
            if excess {
                let grown = (bg.supply as u64 * (100 + rate_pct)).div_ceil(100);
                bg.supply = grown as u32;
                bg.price *= 1.0 + rate;
                bg.quiet_years = 0;
            } else {
                bg.quiet_years += 1;
                if bg.quiet_years >= self.config.quiet_years_for_price_cut {
                    bg.price *= 1.0 - rate;
                    bg.quiet_years = 0;
                }
            }
        }
    }

    fn add_buildings<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let total: u32 = self.block_groups.iter().map(|b| b.supply).sum();
        let new_units = stochastic_round(self.params.building_growth_rate * total as f64, rng);
        let n = self.block_groups.len();
        for _ in 0..new_units {
            let k = rng.random_range(0..n);
            self.block_groups[k].supply += 1;
        }
    }
}

/// Runs one scenario for `years` years. The result holds `years + 1`
/// snapshots and depends only on the arguments.
pub fn run_simulation(params: &ScenarioParams, years: usize, n_block_groups: usize, config: &AbmConfig) -> Result<AgentTrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut world = World::new(*params, n_block_groups, config.clone(), &mut rng)?;
    let mut snapshots = Vec::with_capacity(years + 1);
    snapshots.push(world.snapshot(0, 0));
    for _ in 0..years {
        let outcome = world.step_year(&mut rng)?;
        snapshots.push(world.snapshot(outcome.created, outcome.outmigrated));
    }
    Ok(AgentTrajectory {
        params: *params,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abm::scenario::sample_scenario;

    fn quiet_params() -> ScenarioParams {
        ScenarioParams {
            initial_vacancy_rate: 0.1,
            population_growth_rate: 0.0,
            inmigrant_income_percentile: 0.5,
            building_growth_rate: 0.0,
            flood_avoider_fraction: 0.6,
            seed: 1,
        }
    }

    fn small_world(params: ScenarioParams, config: AbmConfig) -> (World, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let world = World::new(params, 20, config, &mut rng).unwrap();
        (world, rng)
    }

    #[test]
    fn initial_population_meets_vacancy_target() {
        for run in 0..4 {
            let params = sample_scenario(11, run);
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let w = World::new(params, 60, AbmConfig::default(), &mut rng).unwrap();
            let supply: u32 = w.block_groups.iter().map(|b| b.supply).sum();
            let target = (supply as f64 * (1.0 - params.initial_vacancy_rate)).round() as usize;
            assert_eq!(w.housed(), target);
            assert!(w.agents.iter().enumerate().all(|(k, a)| a.id == k));
        }
    }

    #[test]
    fn developer_grows_supply_and_price() {
        let (mut w, _) = small_world(quiet_params(), AbmConfig::default());
        w.block_groups[0].supply = 100;
        w.block_groups[0].price = 200.0;
        let mut excess = vec![false; w.block_groups.len()];
        excess[0] = true;
        w.developer_update(&excess);
        assert_eq!(w.block_groups[0].supply, 105);
        assert!((w.block_groups[0].price - 210.0).abs() < 1e-9);

        w.block_groups[1].supply = 10;
        excess[1] = true;
        w.developer_update(&excess);
        assert_eq!(w.block_groups[1].supply, 11);
    }

    #[test]
    fn quiet_years_cut_price_once_after_five() {
        let (mut w, _) = small_world(quiet_params(), AbmConfig::default());
        w.block_groups[0].price = 200.0;
        w.block_groups[0].quiet_years = 0;
        let none = vec![false; w.block_groups.len()];
        for _ in 0..4 {
            w.developer_update(&none);
        }
        assert_eq!(w.block_groups[0].price, 200.0);
        w.developer_update(&none);
        assert!((w.block_groups[0].price - 190.0).abs() < 1e-9);
        assert_eq!(w.block_groups[0].quiet_years, 0);
    }

    #[test]
    fn excess_demand_resets_quiet_counter() {
        let (mut w, _) = small_world(quiet_params(), AbmConfig::default());
        w.block_groups[0].price = 200.0;
        w.block_groups[0].quiet_years = 0;
        let none = vec![false; w.block_groups.len()];
        for _ in 0..4 {
            w.developer_update(&none);
        }
        let mut excess = none.clone();
        excess[0] = true;
        w.developer_update(&excess);
        assert_eq!(w.block_groups[0].quiet_years, 0);
        w.developer_update(&none);
        assert!((w.block_groups[0].price - 210.0).abs() < 1e-9);
    }

    #[test]
    fn nothing_happens_without_growth_or_movers() {
        let config = AbmConfig {
            mover_fraction: 0.0,
            ..AbmConfig::default()
        };
        let (mut w, mut rng) = small_world(quiet_params(), config);
        let agents = w.agents.clone();
        let supplies: Vec<u32> = w.block_groups.iter().map(|b| b.supply).collect();
        let outcome = w.step_year(&mut rng).unwrap();
        assert_eq!(outcome.created, 0);
        assert_eq!(outcome.outmigrated, 0);
        assert_eq!(w.agents, agents);
        assert_eq!(w.block_groups.iter().map(|b| b.supply).collect::<Vec<_>>(), supplies);
        assert_eq!(w.year, 1);
    }

    #[test]
    fn no_vacancies_forces_outmigration() {
        let config = AbmConfig {
            mover_fraction: 0.0,
            ..AbmConfig::default()
        };
        let (mut w, mut rng) = small_world(quiet_params(), config);
        for bg in &mut w.block_groups {
            bg.supply = bg.occupied;
        }
        let outcome = w.advance_year(10, &mut rng).unwrap();
        assert!(outcome.outmigrated >= 10);
    }

    #[test]
    fn conservation_holds_every_year() {
        for run in 0..3 {
            let params = sample_scenario(5, run);
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let mut w = World::new(params, 30, AbmConfig::default(), &mut rng).unwrap();
            for _ in 0..15 {
                w.step_year(&mut rng).unwrap();
                let housed = w.housed();
                let out = w.agents.iter().filter(|a| a.location == Some(Location::Outmigrated)).count();
                assert_eq!(out, w.cumulative_outmigrated);
                assert_eq!(housed + w.cumulative_outmigrated, w.initial_population + w.cumulative_created);
                for bg in &w.block_groups {
                    assert!(bg.occupied <= bg.supply);
                    let recount = w.agents.iter().filter(|a| a.location == Some(Location::Housed(bg.id))).count();
                    assert_eq!(recount as u32, bg.occupied);
                }
            }
        }
    }

    #[test]
    fn flood_avoiders_stay_dry() {
        let params = ScenarioParams {
            population_growth_rate: 0.03,
            ..sample_scenario(8, 2)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut w = World::new(params, 40, AbmConfig::default(), &mut rng).unwrap();
        assert!(w.block_groups.iter().any(|b| b.flood_prone));
        for _ in 0..20 {
            for a in w.agents.iter().filter(|a| a.avoids_flood) {
                if let Some(Location::Housed(bg)) = a.location {
                    assert!(!w.block_groups[bg].flood_prone);
                }
            }
            w.step_year(&mut rng).unwrap();
        }
    }

    #[test]
    fn simulation_is_deterministic_with_expected_length() {
        let params = sample_scenario(1, 0);
        let a = run_simulation(&params, 5, 20, &AbmConfig::default()).unwrap();
        let b = run_simulation(&params, 5, 20, &AbmConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.snapshots.len(), 6);
        let z = run_simulation(&params, 0, 20, &AbmConfig::default()).unwrap();
        assert_eq!(z.snapshots.len(), 1);
    }
}
