use crate::error::{Error, Result};
use crate::graph::SystemState;

/// Sum over steps `k >= 1` of the squared Euclidean distance between states.
/// Both trajectories must share length and initial state.
pub fn trajectory_loss(predicted: &[SystemState], observed: &[SystemState]) -> Result<f64> {
    if predicted.len() != observed.len() {
        return Err(Error::Contract(format!(
            "trajectory lengths differ: {} vs {}",
            predicted.len(),
            observed.len()
        )));
    }
    if let (Some(p0), Some(o0)) = (predicted.first(), observed.first()) {
        if p0 != o0 {
            return Err(Error::Contract("trajectories must share the initial state".into()));
        }
    }
    let mut total = 0.0;
    for (p, o) in predicted.iter().zip(observed).skip(1) {
        if p.n_nodes() != o.n_nodes() {
            return Err(Error::Contract("state shapes differ".into()));
        }
        total += p
            .iter_entries()
            .zip(o.iter_entries())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(v: &[f64]) -> SystemState {
        SystemState {
            counts: v.chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
        }
    }

    #[test]
    fn examples() {
        let a = vec![state(&[1.0; 12]), state(&[2.0; 12])];
        assert_eq!(trajectory_loss(&a, &a).unwrap(), 0.0);

        let mut shifted = state(&[2.0; 12]);
        shifted.counts[0][0] += 3.0;
        shifted.counts[0][1] += 4.0;
        let b = vec![state(&[1.0; 12]), shifted];
        assert_eq!(trajectory_loss(&b, &a).unwrap(), 25.0);

        assert!(matches!(trajectory_loss(&a[..1], &a), Err(Error::Contract(_))));
        let c = vec![state(&[0.0; 12]), state(&[2.0; 12])];
        assert!(matches!(trajectory_loss(&c, &a), Err(Error::Contract(_))));
    }

    proptest! {
        #[test]
        fn matches_naive_double_loop(
            x0 in proptest::collection::vec(-100.0f64..100.0, 12),
            rest in proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, 24), 1..6),
        ) {
            let mut p = vec![state(&x0)];
            let mut o = vec![state(&x0)];
            for r in &rest {
                p.push(state(&r[..12]));
                o.push(state(&r[12..]));
            }
            let mut naive = 0.0;
            for k in 1..p.len() {
                for i in 0..4 {
                    for s in 0..3 {
                        let d = p[k].counts[i][s] - o[k].counts[i][s];
                        naive += d * d;
                    }
                }
            }
            let l = trajectory_loss(&p, &o).unwrap();
            prop_assert!(l >= 0.0);
            prop_assert!((l - naive).abs() <= 1e-12 * naive.max(1.0));
        }
    }
}
