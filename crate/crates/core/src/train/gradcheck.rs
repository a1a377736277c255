//! Central finite-difference verification of the reverse-mode gradient.

use rand::Rng;

use crate::coarsen::CoarseTrajectory;
use crate::ebm::{euler_rollout, EbmConfig, EbmParams};
use crate::error::Result;
use crate::graph::{ExogenousSeries, RegionGraph, SystemState, N_SUBPOPS};
use crate::seed::stage_rng;

use super::tape::{run_loss, run_loss_and_grad};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_ABS_FLOOR: f64 = 1e-7;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub n_coordinates: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Per coordinate `|a - n| / max(|a|, |n|, abs_floor)`, maximized over all
/// coordinates, where `n` is the central difference of `loss` with step `eps`.
pub fn compare_gradients<F>(params: &EbmParams, analytic: &EbmParams, loss: F, eps: f64, abs_floor: f64) -> Result<GradCheckReport>
where
    F: Fn(&EbmParams) -> Result<f64>,
{
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_coordinate: 0,
        analytic: analytic.as_slice().first().copied().unwrap_or(0.0),
        numeric: 0.0,
        n_coordinates: params.len(),
    };
    let mut probe = params.clone();
    for k in 0..params.len() {
        let original = probe.as_slice()[k];
        probe.as_mut_slice()[k] = original + eps;
        let plus = loss(&probe)?;
        probe.as_mut_slice()[k] = original - eps;
        let minus = loss(&probe)?;
        probe.as_mut_slice()[k] = original;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.as_slice()[k];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(abs_floor);
        if err > report.max_rel_error || k == 0 {
            report.max_rel_error = err;
            report.worst_coordinate = k;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

/// Checks the analytic gradient of one run's loss against central differences.
pub fn finite_diff_check(
    params: &EbmParams,
    probe: &CoarseTrajectory,
    graph: &RegionGraph,
    config: &EbmConfig,
    eps: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = run_loss_and_grad(params, probe, graph, config)?;
    compare_gradients(params, &analytic, |p| run_loss(p, probe, graph, config), eps, DEFAULT_ABS_FLOOR)
}

/// A random complete-graph problem at order-one scale: parameters with
/// nonzero biases and latent features, and an observed trajectory generated
/// by a different parameter set plus noise.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, n_nodes: usize, n_steps: usize) -> (RegionGraph, CoarseTrajectory, EbmParams) {
    let graph = RegionGraph::complete(n_nodes).expect("n_nodes >= 1");
    let randomize = |rng: &mut R| {
        let mut p = EbmParams::init(n_nodes, rng);
        let mut jitter = |v: &mut [f64]| v.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        jitter(p.b1_mut());
        jitter(p.b2_mut());
        jitter(p.b3_mut());
        jitter(p.latent_mut());
        p
    };
    let params = randomize(rng);
    let truth = randomize(rng);
    let x0 = SystemState {
        counts: (0..n_nodes)
            .map(|_| std::array::from_fn(|_| rng.random_range(0.1..1.0)))
            .collect(),
    };
    let len = n_steps.max(1);
    let mut exo = ExogenousSeries::constant(vec![1.0; n_nodes], len);
    for k in 0..len {
        for i in 0..n_nodes {
            exo.capacity[k][i] = rng.random_range(3.0..6.0);
            exo.growth[k][i] = std::array::from_fn(|_| rng.random_range(0.0..0.1));
        }
    }
    let config = EbmConfig::default();
    let mut states = euler_rollout(&x0, &truth, &exo, &graph, &config, n_steps).expect("order-one instance is stable");
    for state in states.iter_mut().skip(1) {
        for x in &mut state.counts {
            for s in 0..N_SUBPOPS {
                x[s] += rng.random_range(-0.05..0.05);
            }
        }
    }
    (
        graph,
        CoarseTrajectory {
            run_id: 0,
            states,
            exogenous: exo,
        },
        params,
    )
}

/// The `index`-th check instance for `master_seed`: 2 to 4 nodes and 5 to 10
/// Euler steps.
pub fn seeded_instance(master_seed: u64, index: u64) -> (RegionGraph, CoarseTrajectory, EbmParams) {
    let mut rng = stage_rng(master_seed, "check-grad", index);
    let n_nodes = rng.random_range(2..=4);
    let n_steps = rng.random_range(5..=10);
    random_instance(&mut rng, n_nodes, n_steps)
}
