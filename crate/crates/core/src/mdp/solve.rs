use super::{reachability_witness, FiniteMdp, MdpError};

/// Optimal gain, a bias vector, and a gain-optimal stationary policy.
#[derive(Debug, Clone, PartialEq)]
pub struct GainBiasSolution {
    pub gain: f64,
    /// Relative values, normalized to 0 at state 0.
    pub bias: Vec<f64>,
    pub policy: Vec<usize>,
    /// Span of `max_a q(s, a) - h(s) - g` at termination.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ergodicity {
    Ergodic,
    /// `to` cannot be reached from `from` under any policy.
    NotErgodic { from: usize, to: usize },
}

impl Ergodicity {
    pub fn is_ergodic(&self) -> bool {
        matches!(self, Ergodicity::Ergodic)
    }
}

/// Ergodic iff the chain of the uniform-over-actions policy is irreducible.
pub fn check_ergodic(mdp: &FiniteMdp) -> Ergodicity {
    match reachability_witness(&mdp.uniform_chain()) {
        None => Ergodicity::Ergodic,
        Some((from, to)) => Ergodicity::NotErgodic { from, to },
    }
}

// Aperiodicity transform: P' = (1 - τ) I + τ P, r' = τ r. Same bias and
// optimal policies, gain scaled by τ; guarantees convergence of RVI on
// periodic chains.
const APERIODICITY: f64 = 0.5;
const REFERENCE_STATE: usize = 0;

/// Relative value iteration for the optimal long-run average reward.
///
/// Terminates when the span of the Bellman residual drops below `tol`.
/// Ties in the greedy policy go to the lowest action index.
pub fn solve_average_reward(
    mdp: &FiniteMdp,
    tol: f64,
    max_iters: usize,
) -> Result<GainBiasSolution, MdpError> {
    if let Ergodicity::NotErgodic { from, to } = check_ergodic(mdp) {
        return Err(MdpError::NotErgodic { from, to });
    }
    let n = mdp.n_states();
    let m = mdp.n_actions();
    let tau = APERIODICITY;
    let rbar: Vec<Vec<f64>> = (0..n)
        .map(|s| (0..m).map(|a| mdp.expected_reward(s, a)).collect())
        .collect();

    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        for s in 0..n {
            let best = (0..m)
                .map(|a| {
                    let ph: f64 = mdp.row(s, a).iter().zip(&h).map(|(p, v)| p * v).sum();
                    tau * (rbar[s][a] + ph)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            next[s] = best + (1.0 - tau) * h[s];
        }
        let (lo, hi) = span_bounds(&next, &h);
        residual = (hi - lo) / tau;
        let offset = next[REFERENCE_STATE];
        for s in 0..n {
            h[s] = next[s] - offset;
        }
        if residual < tol {
            break;
        }
    }
    if residual >= tol {
        return Err(MdpError::NotConverged {
            iterations,
            residual,
        });
    }

    // Evaluate on the untransformed problem: q(s,a) = r(s,a) + Σ P h.
    let q: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            (0..m)
                .map(|a| rbar[s][a] + mdp.row(s, a).iter().zip(&h).map(|(p, v)| p * v).sum::<f64>())
                .collect()
        })
        .collect();
    let mut policy = Vec::with_capacity(n);
    let mut diffs = Vec::with_capacity(n);
    for s in 0..n {
        let best = q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slack = 1e-10 * (1.0 + best.abs());
        let a = q[s]
            .iter()
            .position(|&v| v >= best - slack)
            .expect("non-empty action set");
        policy.push(a);
        diffs.push(best - h[s]);
    }
    let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let r_max = crate::interaction::reward_to_f64(mdp.max_reward());
    let gain = (0.5 * (lo + hi)).clamp(0.0, r_max);
    Ok(GainBiasSolution {
        gain,
        bias: h,
        policy,
        residual: hi - lo,
        iterations,
    })
}

fn span_bounds(next: &[f64], prev: &[f64]) -> (f64, f64) {
    next.iter()
        .zip(prev)
        .map(|(a, b)| a - b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
            (lo.min(d), hi.max(d))
        })
}

/// Minimal expected number of steps to reach `target` from each state, with
/// the minimizing action (lowest index on ties). Target states have 0 steps.
pub fn expected_steps_to(
    mdp: &FiniteMdp,
    target: &[bool],
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, Vec<usize>), MdpError> {
    let n = mdp.n_states();
    let m = mdp.n_actions();
    let mut v = vec![0.0; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut delta: f64 = 0.0;
        for s in 0..n {
            if target[s] {
                continue;
            }
            let best = (0..m)
                .map(|a| 1.0 + mdp.row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        if delta < tol {
            break;
        }
        if iterations >= max_iters {
            return Err(MdpError::NotConverged {
                iterations,
                residual: delta,
            });
        }
    }
    let actions = (0..n)
        .map(|s| {
            if target[s] {
                return 0;
            }
            let q: Vec<f64> = (0..m)
                .map(|a| 1.0 + mdp.row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum::<f64>())
                .collect();
            let best = q.iter().copied().fold(f64::INFINITY, f64::min);
            q.iter()
                .position(|&x| x <= best + 1e-9 * (1.0 + best.abs()))
                .unwrap_or(0)
        })
        .collect();
    Ok((v, actions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction::Reward;

    fn r(x: f64) -> Reward {
        crate::interaction::reward_from_f64(x).unwrap()
    }

    /// State 0: a stays with reward 1, b moves to 1 with reward 0; state 1 returns to 0.
    fn two_state() -> FiniteMdp {
        FiniteMdp::with_state_action_rewards(
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            ],
            vec![vec![r(1.0), r(0.0)], vec![r(0.0), r(0.0)]],
        )
        .unwrap()
    }

    #[test]
    fn single_state_picks_best_action() {
        let mdp = FiniteMdp::with_state_action_rewards(
            vec![vec![vec![1.0], vec![1.0]]],
            vec![vec![r(0.2), r(0.7)]],
        )
        .unwrap();
        let sol = solve_average_reward(&mdp, 1e-12, 10_000).unwrap();
        assert!((sol.gain - 0.7).abs() < 1e-12);
        assert_eq!(sol.policy, vec![1]);
    }

    #[test]
    fn two_state_gain_one() {
        let sol = solve_average_reward(&two_state(), 1e-12, 100_000).unwrap();
        assert!((sol.gain - 1.0).abs() < 1e-10);
        assert_eq!(sol.policy[0], 0);
        assert_eq!(sol.policy[1], 0);
        assert!(sol.residual < 1e-9);
    }

    #[test]
    fn periodic_chain_converges() {
        // deterministic 2-cycle with reward 1 on leaving state 0
        let mdp = FiniteMdp::with_state_action_rewards(
            vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            vec![vec![r(1.0)], vec![r(0.0)]],
        )
        .unwrap();
        let sol = solve_average_reward(&mdp, 1e-12, 100_000).unwrap();
        assert!((sol.gain - 0.5).abs() < 1e-10);
    }

    #[test]
    fn ergodicity_examples() {
        assert!(check_ergodic(&two_state()).is_ergodic());
        let cycle = FiniteMdp::with_state_action_rewards(
            vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            vec![vec![r(0.0)], vec![r(0.0)]],
        )
        .unwrap();
        assert!(check_ergodic(&cycle).is_ergodic());
        // state 1 is absorbing
        let trap = FiniteMdp::with_state_action_rewards(
            vec![
                vec![vec![0.5, 0.5], vec![1.0, 0.0]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
            vec![vec![r(0.0), r(0.0)], vec![r(1.0), r(1.0)]],
        )
        .unwrap();
        assert_eq!(check_ergodic(&trap), Ergodicity::NotErgodic { from: 1, to: 0 });
        assert_eq!(
            solve_average_reward(&trap, 1e-9, 100).unwrap_err(),
            MdpError::NotErgodic { from: 1, to: 0 }
        );
    }

    #[test]
    fn non_convergence_is_diagnosed() {
        let mdp = FiniteMdp::with_state_action_rewards(
            vec![
                vec![vec![0.99, 0.01], vec![0.5, 0.5]],
                vec![vec![0.01, 0.99], vec![0.5, 0.5]],
            ],
            vec![vec![r(1.0), r(0.0)], vec![r(0.0), r(0.3)]],
        )
        .unwrap();
        match solve_average_reward(&mdp, 1e-15, 2) {
            Err(MdpError::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn steps_to_target() {
        let (v, acts) = expected_steps_to(&two_state(), &[true, false], 1e-12, 1000).unwrap();
        assert_eq!(v, vec![0.0, 1.0]);
        assert_eq!(acts[1], 0);
    }
}
