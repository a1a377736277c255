use crate::error::{Error, Result};
use crate::graph::{ExogenousSeries, RegionGraph, SystemState};

use super::dynamics::{check_dims, system_rhs, EbmConfig};
use super::params::EbmParams;

/// Explicit Euler integration: `X(k+1) = X(k) + dt * F(X(k), t_k)`.
///
/// Returns `n_steps + 1` states with the first equal to `x0`. Step `k` uses
/// exogenous entry `k`, so the series must cover at least `n_steps` entries.
pub fn euler_rollout(
    x0: &SystemState,
    params: &EbmParams,
    exo: &ExogenousSeries,
    graph: &RegionGraph,
    config: &EbmConfig,
    n_steps: usize,
) -> Result<Vec<SystemState>> {
    config.validate()?;
    check_dims(graph, x0, params, exo)?;
    if exo.len() < n_steps {
        return Err(Error::Contract(format!(
            "exogenous series covers {} steps, rollout needs {n_steps}",
            exo.len()
        )));
    }
    let mut traj = Vec::with_capacity(n_steps + 1);
    traj.push(x0.clone());
    for k in 0..n_steps {
        let current = &traj[k];
        let rate = system_rhs(current, k, exo, graph, params, config)?;
        let mut next = current.clone();
        for (x, f) in next.counts.iter_mut().zip(&rate) {
            for s in 0..x.len() {
                x[s] += config.dt * f[s];
            }
        }
        if !next.is_finite() {
            return Err(Error::Diverged { step: k + 1 });
        }
        traj.push(next);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(n: usize) -> (SystemState, ExogenousSeries, EbmParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let state = SystemState {
            counts: (0..n).map(|i| [10.0 * i as f64 + 1.0, 5.0, 2.5]).collect(),
        };
        (state, ExogenousSeries::constant(vec![100.0; n], 12), EbmParams::init(n, &mut rng))
    }

    #[test]
    fn zero_steps_echo_initial_state() {
        let (x0, exo, params) = instance(4);
        let traj = euler_rollout(&x0, &params, &exo, &RegionGraph::case_study(), &EbmConfig::default(), 0).unwrap();
        assert_eq!(traj, vec![x0]);
    }

    #[test]
    fn zero_params_without_growth_are_constant() {
        let (x0, exo, _) = instance(4);
        let traj = euler_rollout(&x0, &EbmParams::zeros(4), &exo, &RegionGraph::case_study(), &EbmConfig::default(), 10)
            .unwrap();
        assert!(traj.iter().all(|s| *s == x0));
    }

    #[test]
    fn constant_growth_accumulates_exactly() {
        let (x0, mut exo, _) = instance(4);
        for g in &mut exo.growth {
            g[2] = [1.0, 0.0, 0.0];
        }
        let traj = euler_rollout(&x0, &EbmParams::zeros(4), &exo, &RegionGraph::case_study(), &EbmConfig::default(), 10)
            .unwrap();
        assert_eq!(traj.len(), 11);
        assert_eq!(traj[10].counts[2][0], x0.counts[2][0] + 10.0);
        assert_eq!(traj[10].counts[2][1], x0.counts[2][1]);
    }

    #[test]
    fn short_exogenous_series_is_rejected() {
        let (x0, exo, params) = instance(4);
        let err = euler_rollout(&x0, &params, &exo, &RegionGraph::case_study(), &EbmConfig::default(), 13).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn overflow_reports_step() {
        let (x0, exo, mut params) = instance(4);
        params.b3_mut().fill(1e300);
        params.w3_mut().fill(0.0);
        let err = euler_rollout(&x0, &params, &exo, &RegionGraph::case_study(), &EbmConfig::default(), 10).unwrap_err();
        assert!(matches!(err, Error::Diverged { step } if step <= 3), "{err:?}");
    }

    #[test]
    fn nonpositive_dt_rejected() {
        let (x0, exo, params) = instance(4);
        let cfg = EbmConfig { dt: 0.0, ..EbmConfig::default() };
        assert!(matches!(
            euler_rollout(&x0, &params, &exo, &RegionGraph::case_study(), &cfg, 1),
            Err(Error::Config(_))
        ));
    }
}
