//! Node features, flux scaling, and the right-hand side of the graph ODE.
//!
//! For node `i`:
//!
//! ```text
//! dx_i/dt = sum_j A_ij * s_i * phi(y_j - y_i) ⊙ beta(x_i, x_j) + G_i(t) - D_i(t)
//! ```
//!
//! where `y = x / C ⊕ P ⊕ q`, `P = sum(x) / C`, and `s_i` is the flux scale
//! (see [`FluxScale`]).

use crate::error::{Error, Result};
use crate::graph::{ExogenousSeries, RegionGraph, SystemState, N_SUBPOPS};

use super::mlp::phi;
use super::params::{EbmParams, N_FEATURES};

/// How the target-availability factor in beta is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BetaForm {
    /// `(x_i / C_i) ⊙ (1 - P_j)`: source mixture fraction times target vacancy.
    #[default]
    Normalized,
    /// `x_i (1 - sum x_j) / (C_i C_j)`, with raw counts inside the bracket.
    Literal,
}

/// Multiplier turning the dimensionless `phi ⊙ beta` into people per year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FluxScale {
    /// No scaling: flux is `phi ⊙ beta` as is.
    #[default]
    Unit,
    /// Multiply by the capacity of the node being updated, so `phi` acts as a
    /// per-capita rate and flux carries people units.
    SourceCapacity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EbmConfig {
    /// Euler step, in years.
    pub dt: f64,
    pub beta: BetaForm,
    pub flux_scale: FluxScale,
}

impl Default for EbmConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            beta: BetaForm::default(),
            flux_scale: FluxScale::default(),
        }
    }
}

impl EbmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    pub(crate) fn scale(&self, capacity: f64) -> f64 {
        match self.flux_scale {
            FluxScale::Unit => 1.0,
            FluxScale::SourceCapacity => capacity,
        }
    }
}

fn check_capacity(c: f64) -> Result<()> {
    if c > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("capacity must be positive, got {c}")))
    }
}

/// Total occupancy over capacity.
pub fn pressure(x: &[f64; N_SUBPOPS], capacity: f64) -> Result<f64> {
    check_capacity(capacity)?;
    Ok(x.iter().sum::<f64>() / capacity)
}

/// Mixture fractions, pressure, latent feature.
pub fn features(x: &[f64; N_SUBPOPS], capacity: f64, latent: f64) -> Result<[f64; N_FEATURES]> {
    let p = pressure(x, capacity)?;
    Ok([x[0] / capacity, x[1] / capacity, x[2] / capacity, p, latent])
}

pub fn beta(
    x_i: &[f64; N_SUBPOPS],
    x_j: &[f64; N_SUBPOPS],
    c_i: f64,
    c_j: f64,
    form: BetaForm,
) -> Result<[f64; N_SUBPOPS]> {
    check_capacity(c_i)?;
    check_capacity(c_j)?;
    Ok(match form {
        BetaForm::Normalized => {
            let vacancy = 1.0 - x_j.iter().sum::<f64>() / c_j;
            x_i.map(|x| x / c_i * vacancy)
        }
        BetaForm::Literal => {
            let bracket = 1.0 - x_j.iter().sum::<f64>();
            x_i.map(|x| x * bracket / (c_i * c_j))
        }
    })
}

pub(crate) fn check_dims(
    graph: &RegionGraph,
    state: &SystemState,
    params: &EbmParams,
    exo: &ExogenousSeries,
) -> Result<()> {
    let n = graph.n_nodes();
    if state.n_nodes() != n || params.n_nodes() != n || (!exo.is_empty() && exo.n_nodes() != n) {
        return Err(Error::Contract(format!(
            "node count mismatch: graph {n}, state {}, params {}, exogenous {}",
            state.n_nodes(),
            params.n_nodes(),
            exo.n_nodes()
        )));
    }
    Ok(())
}

/// Features of every node given the state and capacities.
pub fn all_features(state: &SystemState, capacity: &[f64], params: &EbmParams) -> Result<Vec<[f64; N_FEATURES]>> {
    state
        .counts
        .iter()
        .zip(capacity)
        .zip(params.latent())
        .map(|((x, &c), &q)| features(x, c, q))
        .collect()
}

/// Rate of change of node `i`.
#[allow(clippy::too_many_arguments)]
pub fn node_rhs(
    i: usize,
    state: &SystemState,
    feats: &[[f64; N_FEATURES]],
    growth_i: &[f64; N_SUBPOPS],
    decay_i: &[f64; N_SUBPOPS],
    capacity: &[f64],
    graph: &RegionGraph,
    params: &EbmParams,
    config: &EbmConfig,
) -> Result<[f64; N_SUBPOPS]> {
    let n = graph.n_nodes();
    if i >= n {
        return Err(Error::Bounds { index: i, len: n });
    }
    if feats.len() != n || capacity.len() != n || state.n_nodes() != n {
        return Err(Error::Contract("node_rhs inputs disagree on node count".into()));
    }
    let mut rate = [0.0; N_SUBPOPS];
    let scale = config.scale(capacity[i]);
    for j in 0..n {
        if !graph.is_edge(i, j) {
            continue;
        }
        let dy: [f64; N_FEATURES] = std::array::from_fn(|k| feats[j][k] - feats[i][k]);
        let response = phi(&dy, params);
        let b = beta(&state.counts[i], &state.counts[j], capacity[i], capacity[j], config.beta)?;
        for s in 0..N_SUBPOPS {
            rate[s] += scale * response[s] * b[s];
        }
    }
    for s in 0..N_SUBPOPS {
        rate[s] += growth_i[s] - decay_i[s];
    }
    Ok(rate)
}

/// Stacked node rates at exogenous step `step`.
pub fn system_rhs(
    state: &SystemState,
    step: usize,
    exo: &ExogenousSeries,
    graph: &RegionGraph,
    params: &EbmParams,
    config: &EbmConfig,
) -> Result<Vec<[f64; N_SUBPOPS]>> {
    check_dims(graph, state, params, exo)?;
    if step >= exo.len() {
        return Err(Error::Contract(format!("step {step} beyond exogenous series of length {}", exo.len())));
    }
    let capacity = &exo.capacity[step];
    let feats = all_features(state, capacity, params)?;
    (0..graph.n_nodes())
        .map(|i| {
            node_rhs(
                i,
                state,
                &feats,
                &exo.growth[step][i],
                &exo.decay[step][i],
                capacity,
                graph,
                params,
                config,
            )
        })
        .collect()
}
