use rand::Rng;

use super::{BlockGroup, HouseholdAgent};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityWeights {
    pub quality: f64,
    pub affordability: f64,
    pub proximity: f64,
}

impl Default for UtilityWeights {
    fn default() -> Self {
        Self {
            quality: 0.4,
            affordability: 0.3,
            proximity: 0.3,
        }
    }
}

/// Perceived utility of a block group, or `None` when the agent will not
/// consider it: over budget, or flood-prone for an agent avoiding floods.
pub fn agent_utility(agent: &HouseholdAgent, bg: &BlockGroup, weights: &UtilityWeights) -> Option<f64> {
    if bg.price > agent.budget || (agent.avoids_flood && bg.flood_prone) {
        return None;
    }
    Some(
        weights.quality * bg.quality
            + weights.affordability * (1.0 - bg.price / agent.budget)
            + weights.proximity * (1.0 - bg.distance),
    )
}

/// Up to `size` block groups with vacancies that the agent would consider,
/// sampled in proportion to vacancy count and ranked by descending utility.
pub fn search<R: Rng + ?Sized>(
    agent: &HouseholdAgent,
    bgs: &[BlockGroup],
    weights: &UtilityWeights,
    size: usize,
    rng: &mut R,
) -> Vec<(usize, f64)> {
    let eligible: Vec<(usize, f64, u32)> = bgs
        .iter()
        .filter(|bg| bg.vacancies() > 0)
        .filter_map(|bg| agent_utility(agent, bg, weights).map(|u| (bg.id, u, bg.vacancies())))
        .collect();
    let picked: Vec<(usize, f64)> = if eligible.len() <= size {
        eligible.iter().map(|&(id, u, _)| (id, u)).collect()
    } else {
        rand::seq::index::sample_weighted(rng, eligible.len(), |k| eligible[k].2 as f64, size)
            .expect("vacancy weights are positive")
            .into_iter()
            .map(|k| (eligible[k].0, eligible[k].1))
            .collect()
    };
    let mut ranked = picked;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// One searching agent and its ranked shortlist.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub agent_id: usize,
    pub income: f64,
    /// `(block group, utility)`, best first.
    pub ranked: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub agent_id: usize,
    pub block_group: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchOutcome {
    pub assignments: Vec<Assignment>,
    pub unmatched: Vec<usize>,
}

/// Greedy matching of shortlists to vacancies.
///
/// Every (agent, block group) proposal is ranked by utility, then income,
/// then agent id, all descending; proposals are granted in that order while
/// the block group has a vacancy and the agent is still unassigned.
/// `availability` is indexed by block group id and is decremented in place.
pub fn match_market(candidates: &[Candidate], availability: &mut [u32]) -> MatchOutcome {
    let mut proposals: Vec<(usize, usize, f64)> = candidates
        .iter()
        .enumerate()
        .flat_map(|(c, cand)| cand.ranked.iter().map(move |&(bg, u)| (c, bg, u)))
        .collect();
    proposals.sort_by(|a, b| {
        let (ca, cb) = (&candidates[a.0], &candidates[b.0]);
        b.2.total_cmp(&a.2)
            .then(cb.income.total_cmp(&ca.income))
            .then(cb.agent_id.cmp(&ca.agent_id))
            .then(a.1.cmp(&b.1))
    });
    let mut assigned = vec![false; candidates.len()];
    let mut out = MatchOutcome::default();
    for (c, bg, _) in proposals {
        if assigned[c] || availability[bg] == 0 {
            continue;
        }
        availability[bg] -= 1;
        assigned[c] = true;
        out.assignments.push(Assignment {
            agent_id: candidates[c].agent_id,
            block_group: bg,
        });
    }
    out.assignments.sort_by_key(|a| a.agent_id);
    out.unmatched = candidates
        .iter()
        .zip(&assigned)
        .filter_map(|(cand, &done)| (!done).then_some(cand.agent_id))
        .collect();
    out.unmatched.sort_unstable();
    out
}

/// Number of shortlists that put each block group first.
pub fn first_choice_demand(candidates: &[Candidate], n_block_groups: usize) -> Vec<u32> {
    let mut demand = vec![0u32; n_block_groups];
    for c in candidates {
        if let Some(&(bg, _)) = c.ranked.first() {
            demand[bg] += 1;
        }
    }
    demand
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agent(budget: f64, avoids_flood: bool) -> HouseholdAgent {
        HouseholdAgent {
            id: 0,
            income: budget / 3.0,
            budget,
            location: None,
            avoids_flood,
        }
    }

    fn bg(id: usize, price: f64, quality: f64, distance: f64, flood_prone: bool) -> BlockGroup {
        BlockGroup {
            id,
            distance,
            price,
            quality,
            flood_prone,
            supply: 10,
            occupied: 0,
            quiet_years: 0,
        }
    }

    #[test]
    fn utility_exclusions_and_maximum() {
        let w = UtilityWeights::default();
        assert_eq!(agent_utility(&agent(100.0, false), &bg(0, 101.0, 1.0, 0.0, false), &w), None);
        assert_eq!(agent_utility(&agent(100.0, true), &bg(0, 50.0, 1.0, 0.0, true), &w), None);
        assert!(agent_utility(&agent(100.0, false), &bg(0, 50.0, 1.0, 0.0, true), &w).is_some());
        let u = agent_utility(&agent(100.0, false), &bg(0, 1e-300, 1.0, 0.0, false), &w).unwrap();
        assert!((u - 1.0).abs() < 1e-12);
    }

    fn cand(id: usize, income: f64, prefs: &[(usize, f64)]) -> Candidate {
        Candidate {
            agent_id: id,
            income,
            ranked: prefs.to_vec(),
        }
    }

    #[test]
    fn higher_utility_wins() {
        let cands = [cand(0, 10.0, &[(0, 0.8)]), cand(1, 10.0, &[(0, 0.9)])];
        let out = match_market(&cands, &mut [1]);
        assert_eq!(out.assignments, vec![Assignment { agent_id: 1, block_group: 0 }]);
        assert_eq!(out.unmatched, vec![0]);
    }

    #[test]
    fn income_breaks_utility_ties() {
        let cands = [cand(0, 40_000.0, &[(0, 0.5)]), cand(1, 50_000.0, &[(0, 0.5)])];
        let out = match_market(&cands, &mut [1]);
        assert_eq!(out.assignments[0].agent_id, 1);
    }

    /// Exhaustive oracle: with one contested block group and a single
    /// proposal each, the winners are the top-`k` agents by priority.
    #[test]
    fn three_vacancies_five_agents() {
        let cands: Vec<Candidate> = (0..5).map(|i| cand(i, 1000.0 * i as f64, &[(0, 0.7)])).collect();
        let mut avail = [3];
        let out = match_market(&cands, &mut avail);
        assert_eq!(out.assignments.len(), 3);
        assert_eq!(out.unmatched.len(), 2);
        assert_eq!(avail, [0]);

        let mut order: Vec<&Candidate> = cands.iter().collect();
        order.sort_by(|a, b| b.income.total_cmp(&a.income).then(b.agent_id.cmp(&a.agent_id)));
        let mut winners: Vec<usize> = order[..3].iter().map(|c| c.agent_id).collect();
        winners.sort_unstable();
        let got: Vec<usize> = out.assignments.iter().map(|a| a.agent_id).collect();
        assert_eq!(got, winners);
    }

    #[test]
    fn losers_fall_through_to_later_choices() {
        let cands = [cand(0, 1.0, &[(0, 0.9), (1, 0.2)]), cand(1, 2.0, &[(0, 0.95)])];
        let out = match_market(&cands, &mut [1, 1]);
        assert_eq!(
            out.assignments,
            vec![Assignment { agent_id: 0, block_group: 1 }, Assignment { agent_id: 1, block_group: 0 }]
        );
        assert!(out.unmatched.is_empty());
    }

    #[test]
    fn search_respects_budget_flood_and_size() {
        let w = UtilityWeights::default();
        let bgs: Vec<BlockGroup> = (0..30)
            .map(|i| bg(i, 10.0 * i as f64, 0.5, i as f64 / 30.0, i % 3 == 0))
            .collect();
        let a = agent(200.0, true);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let list = search(&a, &bgs, &w, 10, &mut rng);
        assert_eq!(list.len(), 10);
        for win in list.windows(2) {
            assert!(win[0].1 >= win[1].1);
        }
        for &(id, _) in &list {
            assert!(bgs[id].price <= 200.0 && !bgs[id].flood_prone);
        }
    }

    #[test]
    fn search_skips_full_block_groups() {
        let w = UtilityWeights::default();
        let mut full = bg(0, 1.0, 1.0, 0.0, false);
        full.occupied = full.supply;
        let open = bg(1, 1.0, 0.0, 1.0, false);
        let list = search(&agent(10.0, false), &[full, open], &w, 10, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(list.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1]);
    }
}
