//! Average-reward analysis of finite MDPs and Markov chains.

mod chain;
mod solve;

pub use chain::{
    closed_classes, expected_hitting_times, mixing_bound, period, poisson_solution,
    reachability_witness, stationary_distribution, MixingBound, StochasticMatrix,
};
pub use solve::{
    check_ergodic, expected_steps_to, solve_average_reward, Ergodicity, GainBiasSolution,
};

use thiserror::Error;

use crate::interaction::{reward_to_f64, Reward};

/// Row sums must match 1 within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("malformed model: {0}")]
    Shape(String),
    #[error("row {row} is not a probability distribution (sum {sum})")]
    NotStochastic { row: String, sum: f64 },
    #[error("reward {value} at {at} is negative")]
    NegativeReward { at: String, value: f64 },
    #[error("chain is reducible: state {to} cannot be reached from state {from}")]
    Reducible { from: usize, to: usize },
    #[error("MDP is not ergodic: state {to} cannot be reached from state {from}")]
    NotErgodic { from: usize, to: usize },
    #[error("relative value iteration did not converge in {iterations} iterations (span residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("linear system is singular")]
    Singular,
}

/// A finite MDP with transition law `P(s' | s, a)` and exact rewards `r(s, a, s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<Reward>,
    reward_f: Vec<f64>,
}

impl FiniteMdp {
    /// `transition[s][a][s']` and `reward[s][a][s']`.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<Vec<Reward>>>,
    ) -> Result<Self, MdpError> {
        let n_states = transition.len();
        if n_states == 0 {
            return Err(MdpError::Shape("no states".into()));
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(MdpError::Shape("no actions".into()));
        }
        if reward.len() != n_states {
            return Err(MdpError::Shape(format!(
                "reward table has {} states, transition table has {n_states}",
                reward.len()
            )));
        }
        let mut t = Vec::with_capacity(n_states * n_actions * n_states);
        let mut r = Vec::with_capacity(n_states * n_actions * n_states);
        for s in 0..n_states {
            if transition[s].len() != n_actions || reward[s].len() != n_actions {
                return Err(MdpError::Shape(format!(
                    "state {s} does not declare exactly {n_actions} actions"
                )));
            }
            for a in 0..n_actions {
                let row = &transition[s][a];
                let rrow = &reward[s][a];
                if row.len() != n_states || rrow.len() != n_states {
                    return Err(MdpError::Shape(format!(
                        "row ({s}, {a}) must have {n_states} entries"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !p.is_finite() || *p < 0.0)
                    || (sum - 1.0).abs() > STOCHASTIC_TOL
                {
                    return Err(MdpError::NotStochastic {
                        row: format!("({s}, {a})"),
                        sum,
                    });
                }
                for (sp, rv) in rrow.iter().enumerate() {
                    if *rv < Reward::from_integer(0) {
                        return Err(MdpError::NegativeReward {
                            at: format!("({s}, {a}, {sp})"),
                            value: reward_to_f64(*rv),
                        });
                    }
                }
                t.extend_from_slice(row);
                r.extend_from_slice(rrow);
            }
        }
        let reward_f = r.iter().map(|v| reward_to_f64(*v)).collect();
        Ok(Self {
            n_states,
            n_actions,
            transition: t,
            reward: r,
            reward_f,
        })
    }

    /// Convenience constructor for rewards that depend on `(s, a)` only.
    pub fn with_state_action_rewards(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<Reward>>,
    ) -> Result<Self, MdpError> {
        let n = transition.len();
        let expanded = reward
            .into_iter()
            .map(|row| row.into_iter().map(|r| vec![r; n]).collect())
            .collect();
        Self::new(transition, expanded)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    fn idx(&self, s: usize, a: usize, sp: usize) -> usize {
        (s * self.n_actions + a) * self.n_states + sp
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, sp: usize) -> f64 {
        self.transition[self.idx(s, a, sp)]
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = self.idx(s, a, 0);
        &self.transition[start..start + self.n_states]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize, sp: usize) -> Reward {
        self.reward[self.idx(s, a, sp)]
    }

    #[inline]
    pub fn reward_f64(&self, s: usize, a: usize, sp: usize) -> f64 {
        self.reward_f[self.idx(s, a, sp)]
    }

    /// `Σ_{s'} P(s'|s,a) r(s,a,s')`.
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        (0..self.n_states)
            .map(|sp| self.p(s, a, sp) * self.reward_f64(s, a, sp))
            .sum()
    }

    pub fn max_reward(&self) -> Reward {
        self.reward
            .iter()
            .copied()
            .max()
            .unwrap_or_else(|| Reward::from_integer(0))
    }

    /// Transition matrix of the chain induced by a stationary deterministic policy.
    pub fn policy_chain(&self, policy: &[usize]) -> StochasticMatrix {
        let rows = (0..self.n_states)
            .map(|s| self.row(s, policy[s]).to_vec())
            .collect();
        StochasticMatrix::from_rows_unchecked(rows)
    }

    /// Chain of the uniform-over-actions randomized policy.
    pub fn uniform_chain(&self) -> StochasticMatrix {
        let w = 1.0 / self.n_actions as f64;
        let rows = (0..self.n_states)
            .map(|s| {
                (0..self.n_states)
                    .map(|sp| (0..self.n_actions).map(|a| self.p(s, a, sp)).sum::<f64>() * w)
                    .collect()
            })
            .collect();
        StochasticMatrix::from_rows_unchecked(rows)
    }

    /// Expected one-step rewards of a stationary deterministic policy.
    pub fn policy_rewards(&self, policy: &[usize]) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| self.expected_reward(s, policy[s]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = FiniteMdp::with_state_action_rewards(
            vec![vec![vec![0.5, 0.4]], vec![vec![0.0, 1.0]]],
            vec![vec![Reward::from_integer(0)], vec![Reward::from_integer(0)]],
        )
        .unwrap_err();
        assert!(matches!(err, MdpError::NotStochastic { .. }));
    }

    #[test]
    fn rejects_ragged_tables() {
        let err = FiniteMdp::with_state_action_rewards(
            vec![vec![vec![1.0]], vec![vec![0.0, 1.0]]],
            vec![vec![Reward::from_integer(0)], vec![Reward::from_integer(0)]],
        )
        .unwrap_err();
        assert!(matches!(err, MdpError::Shape(_)));
    }

    #[test]
    fn uniform_chain_averages_actions() {
        let mdp = FiniteMdp::with_state_action_rewards(
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            ],
            vec![
                vec![Reward::from_integer(1), Reward::from_integer(0)],
                vec![Reward::from_integer(0), Reward::from_integer(0)],
            ],
        )
        .unwrap();
        let u = mdp.uniform_chain();
        assert_eq!(u.get(0, 0), 0.5);
        assert_eq!(u.get(1, 0), 1.0);
    }
}
