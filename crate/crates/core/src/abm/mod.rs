//! A small seeded housing-market agent-based model.
//!
//! Each year runs, in order: inmigration, random vacancy, search and ranking,
//! market matching, developer supply/price adjustment, and outmigration of
//! agents left without a property. Outmigration is absorbing.

pub mod io;
pub mod market;
pub mod scenario;
pub mod world;

pub use market::{agent_utility, match_market, Assignment, Candidate, MatchOutcome};
pub use scenario::{sample_scenario, ScenarioParams};
pub use world::{run_simulation, AbmConfig, World, YearOutcome};

/// Where an agent lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Location {
    Housed(usize),
    Outmigrated,
}

impl Location {
    pub fn block_group(self) -> Option<usize> {
        match self {
            Location::Housed(bg) => Some(bg),
            Location::Outmigrated => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGroup {
    pub id: usize,
    /// Normalized distance to the central business district, in `[0, 1]`.
    pub distance: f64,
    pub price: f64,
    pub quality: f64,
    pub flood_prone: bool,
    /// Representative properties.
    pub supply: u32,
    pub occupied: u32,
    /// Consecutive years without excess demand.
    pub quiet_years: u32,
}

impl BlockGroup {
    pub fn vacancies(&self) -> u32 {
        self.supply - self.occupied
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdAgent {
    pub id: usize,
    pub income: f64,
    pub budget: f64,
    pub location: Option<Location>,
    pub avoids_flood: bool,
}

/// One agent row of a yearly snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentRecord {
    pub id: usize,
    pub income: f64,
    pub location: Location,
}

/// One block-group row of a yearly snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockRecord {
    pub id: usize,
    pub distance: f64,
    pub supply: u32,
    pub price: f64,
    pub occupied: u32,
    pub flood_prone: bool,
}

impl From<&BlockGroup> for BlockRecord {
    fn from(bg: &BlockGroup) -> Self {
        Self {
            id: bg.id,
            distance: bg.distance,
            supply: bg.supply,
            price: bg.price,
            occupied: bg.occupied,
            flood_prone: bg.flood_prone,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearSnapshot {
    pub year: usize,
    /// Every agent created so far, housed or outmigrated, sorted by id.
    pub agents: Vec<AgentRecord>,
    pub blocks: Vec<BlockRecord>,
    /// Agents created during the step that produced this snapshot.
    pub created: usize,
    /// Agents that outmigrated during that step.
    pub outmigrated: usize,
}

impl YearSnapshot {
    pub fn housed(&self) -> usize {
        self.agents.iter().filter(|a| a.location != Location::Outmigrated).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrajectory {
    pub params: ScenarioParams,
    /// `years + 1` snapshots, the first being the initial state.
    pub snapshots: Vec<YearSnapshot>,
}

impl AgentTrajectory {
    pub fn years(&self) -> usize {
        self.snapshots.len().saturating_sub(1)
    }

    pub fn initial_population(&self) -> usize {
        self.snapshots.first().map_or(0, |s| s.agents.len())
    }
}
