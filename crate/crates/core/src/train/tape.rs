//! Reverse-mode differentiation through the Euler rollout.
//!
//! The forward pass records, per step, the node features and every edge's
//! network trace. The backward pass walks the steps in reverse, carrying the
//! state adjoint and accumulating parameter adjoints.

use crate::coarsen::CoarseTrajectory;
use crate::ebm::dynamics::{all_features, check_dims};
use crate::ebm::mlp::{phi_backward, phi_traced, MlpTrace};
use crate::ebm::params::N_FEATURES;
use crate::ebm::{beta, BetaForm, EbmConfig, EbmParams};
use crate::error::{Error, Result};
use crate::graph::{ExogenousSeries, RegionGraph, SystemState, N_SUBPOPS};
use crate::par::Exec;

#[derive(Debug, Clone)]
struct EdgeRecord {
    i: usize,
    j: usize,
    trace: MlpTrace,
    beta: [f64; N_SUBPOPS],
}

#[derive(Debug, Clone)]
struct StepRecord {
    edges: Vec<EdgeRecord>,
}

/// Primal values of one rollout, enough to run the adjoint pass.
#[derive(Debug, Clone)]
pub struct GradientTape {
    states: Vec<SystemState>,
    steps: Vec<StepRecord>,
}

impl GradientTape {
    /// Forward Euler rollout that keeps what the backward pass needs.
    pub fn record(
        x0: &SystemState,
        params: &EbmParams,
        exo: &ExogenousSeries,
        graph: &RegionGraph,
        config: &EbmConfig,
        n_steps: usize,
    ) -> Result<Self> {
        config.validate()?;
        check_dims(graph, x0, params, exo)?;
        if exo.len() < n_steps {
            return Err(Error::Contract(format!(
                "exogenous series covers {} steps, rollout needs {n_steps}",
                exo.len()
            )));
        }
        let n = graph.n_nodes();
        let mut states = Vec::with_capacity(n_steps + 1);
        let mut steps = Vec::with_capacity(n_steps);
        states.push(x0.clone());
        for k in 0..n_steps {
            let x = &states[k];
            let caps = &exo.capacity[k];
            let feats = all_features(x, caps, params)?;
            let mut next = x.clone();
            let mut edges = Vec::with_capacity(2 * graph.edge_count());
            for i in 0..n {
                let scale = config.scale(caps[i]);
                let mut rate = [0.0; N_SUBPOPS];
                for j in 0..n {
                    if !graph.is_edge(i, j) {
                        continue;
                    }
                    let dy: [f64; N_FEATURES] = std::array::from_fn(|f| feats[j][f] - feats[i][f]);
                    let trace = phi_traced(&dy, params);
                    let b = beta(&x.counts[i], &x.counts[j], caps[i], caps[j], config.beta)?;
                    for s in 0..N_SUBPOPS {
                        rate[s] += scale * trace.out[s] * b[s];
                    }
                    edges.push(EdgeRecord { i, j, trace, beta: b });
                }
                for s in 0..N_SUBPOPS {
                    rate[s] += exo.growth[k][i][s] - exo.decay[k][i][s];
                    next.counts[i][s] += config.dt * rate[s];
                }
            }
            if !next.is_finite() {
                return Err(Error::Diverged { step: k + 1 });
            }
            states.push(next);
            steps.push(StepRecord { edges });
        }
        Ok(Self { states, steps })
    }

    pub fn states(&self) -> &[SystemState] {
        &self.states
    }

    /// Backpropagates direct state cotangents `dL/dX(k)` (one per recorded
    /// state) to the parameters. Returns the parameter gradient and the
    /// total adjoint of the initial state.
    pub fn backward(
        &self,
        state_cotangents: &[Vec<[f64; N_SUBPOPS]>],
        params: &EbmParams,
        exo: &ExogenousSeries,
        graph: &RegionGraph,
        config: &EbmConfig,
    ) -> Result<(EbmParams, Vec<[f64; N_SUBPOPS]>)> {
        if state_cotangents.len() != self.states.len() {
            return Err(Error::Contract(format!(
                "{} cotangents for {} states",
                state_cotangents.len(),
                self.states.len()
            )));
        }
        let n = graph.n_nodes();
        let mut grad = EbmParams::zeros(params.n_nodes());
        let mut adjoint = state_cotangents[self.states.len() - 1].clone();
        for k in (0..self.steps.len()).rev() {
            let x = &self.states[k];
            let caps = &exo.capacity[k];
            let mut x_bar = state_cotangents[k].clone();
            for (xb, a) in x_bar.iter_mut().zip(&adjoint) {
                for s in 0..N_SUBPOPS {
                    xb[s] += a[s];
                }
            }
            let mut y_bar = vec![[0.0; N_FEATURES]; n];
            for e in &self.steps[k].edges {
                let scale = config.scale(caps[e.i]);
                let g: [f64; N_SUBPOPS] = std::array::from_fn(|s| config.dt * scale * adjoint[e.i][s]);
                let g_out: [f64; N_SUBPOPS] = std::array::from_fn(|s| g[s] * e.beta[s]);
                let g_beta: [f64; N_SUBPOPS] = std::array::from_fn(|s| g[s] * e.trace.out[s]);
                let g_dy = phi_backward(&e.trace, &g_out, params, &mut grad);
                for f in 0..N_FEATURES {
                    y_bar[e.j][f] += g_dy[f];
                    y_bar[e.i][f] -= g_dy[f];
                }
                let (xi, xj) = (&x.counts[e.i], &x.counts[e.j]);
                let (ci, cj) = (caps[e.i], caps[e.j]);
                let sum_j: f64 = xj.iter().sum();
                match config.beta {
                    BetaForm::Normalized => {
                        let vacancy = 1.0 - sum_j / cj;
                        let mut p_bar = 0.0;
                        for s in 0..N_SUBPOPS {
                            x_bar[e.i][s] += g_beta[s] * vacancy / ci;
                            p_bar -= g_beta[s] * xi[s] / ci;
                        }
                        for s in 0..N_SUBPOPS {
                            x_bar[e.j][s] += p_bar / cj;
                        }
                    }
                    BetaForm::Literal => {
                        let denom = ci * cj;
                        let mut sum_bar = 0.0;
                        for s in 0..N_SUBPOPS {
                            x_bar[e.i][s] += g_beta[s] * (1.0 - sum_j) / denom;
                            sum_bar -= g_beta[s] * xi[s] / denom;
                        }
                        for s in 0..N_SUBPOPS {
                            x_bar[e.j][s] += sum_bar;
                        }
                    }
                }
            }
            // features: y = x / C ⊕ sum(x) / C ⊕ q
            for i in 0..n {
                for s in 0..N_SUBPOPS {
                    x_bar[i][s] += (y_bar[i][s] + y_bar[i][3]) / caps[i];
                }
                grad.latent_mut()[i] += y_bar[i][4];
            }
            adjoint = x_bar;
        }
        if self.steps.is_empty() {
            adjoint = state_cotangents[0].clone();
        }
        Ok((grad, adjoint))
    }
}

/// Loss of one observed run under `params`.
pub fn run_loss(params: &EbmParams, run: &CoarseTrajectory, graph: &RegionGraph, config: &EbmConfig) -> Result<f64> {
    let pred = crate::ebm::euler_rollout(run.initial(), params, &run.exogenous, graph, config, run.n_steps())?;
    super::loss::trajectory_loss(&pred, &run.states)
}

/// Loss and exact gradient of one observed run.
pub fn run_loss_and_grad(
    params: &EbmParams,
    run: &CoarseTrajectory,
    graph: &RegionGraph,
    config: &EbmConfig,
) -> Result<(f64, EbmParams)> {
    let tape = GradientTape::record(run.initial(), params, &run.exogenous, graph, config, run.n_steps())?;
    let loss = super::loss::trajectory_loss(tape.states(), &run.states)?;
    let cotangents: Vec<Vec<[f64; N_SUBPOPS]>> = tape
        .states()
        .iter()
        .zip(&run.states)
        .enumerate()
        .map(|(k, (p, o))| {
            p.counts
                .iter()
                .zip(&o.counts)
                .map(|(a, b)| {
                    if k == 0 {
                        [0.0; N_SUBPOPS]
                    } else {
                        std::array::from_fn(|s| 2.0 * (a[s] - b[s]))
                    }
                })
                .collect()
        })
        .collect();
    let (grad, _) = tape.backward(&cotangents, params, &run.exogenous, graph, config)?;
    Ok((loss, grad))
}

/// Summed loss over a batch. Per-run losses are added in batch order.
pub fn batch_loss(params: &EbmParams, batch: &[CoarseTrajectory], graph: &RegionGraph, config: &EbmConfig, exec: Exec) -> Result<f64> {
    let losses = exec.map(batch, |run| run_loss(params, run, graph, config));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total)
}

/// Summed loss and gradient over a batch, reduced in batch order so the
/// result does not depend on the thread count.
pub fn grad(
    params: &EbmParams,
    batch: &[CoarseTrajectory],
    graph: &RegionGraph,
    config: &EbmConfig,
    exec: Exec,
) -> Result<(f64, EbmParams)> {
    if batch.is_empty() {
        return Err(Error::Contract("gradient of an empty batch".into()));
    }
    let parts = exec.map(batch, |run| run_loss_and_grad(params, run, graph, config));
    let mut total = 0.0;
    let mut sum = EbmParams::zeros(params.n_nodes());
    for part in parts {
        let (l, g) = part?;
        total += l;
        sum.axpy(1.0, &g);
    }
    if !total.is_finite() || !sum.is_finite() {
        return Err(Error::Diverged { step: 0 });
    }
    Ok((total, sum))
}
