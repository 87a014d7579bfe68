use std::sync::Arc;

use super::mdp_env::settled_reference;
use super::{
    AdversaryHook, ConstantPolicy, EnvironmentError, EpsilonSchedule, LossAllowance,
    RecoveryFactory, StableEnvironment, ValueStabilityMetadata, ViolationBound,
};
use crate::interaction::{
    reward_to_f64, Action, EnvironmentModel, History, ModelState, Percept, PerceptDistribution,
    Policy, RandomSource, Reward,
};
use crate::mdp::{
    period, poisson_solution, reachability_witness, stationary_distribution, StochasticMatrix,
    STOCHASTIC_TOL,
};

/// A partially observed environment driven by an irreducible hidden chain.
///
/// At each step the reward is `r(s, a)` for the current hidden state `s`;
/// the chain then moves to `s' ~ P(s, ·)` regardless of the action and emits
/// `o ~ E(s', ·)`. One action must dominate all others in every state.
#[derive(Debug, Clone)]
pub struct HiddenChainEnvironment {
    name: String,
    inner: Arc<Inner>,
    action_names: Vec<String>,
}

#[derive(Debug)]
struct Inner {
    chain: StochasticMatrix,
    emission: Vec<Vec<f64>>,
    rewards: Vec<Vec<Reward>>,
    initial: Vec<f64>,
    best_action: usize,
}

impl HiddenChainEnvironment {
    pub fn new(
        name: impl Into<String>,
        transition: Vec<Vec<f64>>,
        emission: Vec<Vec<f64>>,
        rewards: Vec<Vec<Reward>>,
        initial: Vec<f64>,
    ) -> Result<Self, EnvironmentError> {
        let arg = |m: &str| EnvironmentError::Argument(m.to_string());
        let n = transition.len();
        let chain = StochasticMatrix::new(transition)?;
        if emission.len() != n || rewards.len() != n || initial.len() != n {
            return Err(arg("emission, reward and initial rows must match the hidden states"));
        }
        let n_obs = emission[0].len();
        let n_act = rewards[0].len();
        if n_obs == 0 || n_act == 0 {
            return Err(arg("empty observation or action alphabet"));
        }
        for row in &emission {
            let sum: f64 = row.iter().sum();
            if row.len() != n_obs || row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(arg("emission rows must be probability vectors of equal length"));
            }
        }
        let sum: f64 = initial.iter().sum();
        if initial.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(arg("initial distribution must be a probability vector"));
        }
        if rewards.iter().any(|r| r.len() != n_act || r.iter().any(|x| *x < Reward::from_integer(0))) {
            return Err(arg("reward rows must be non-negative with one entry per action"));
        }
        let best_action = (0..n_act)
            .find(|&a| (0..n).all(|s| (0..n_act).all(|b| rewards[s][a] >= rewards[s][b])))
            .ok_or_else(|| arg("no action is optimal in every hidden state"))?;
        if let Some((from, to)) = reachability_witness(&chain) {
            return Err(EnvironmentError::NotErgodic { from, to });
        }
        Ok(Self {
            name: name.into(),
            inner: Arc::new(Inner {
                chain,
                emission,
                rewards,
                initial,
                best_action,
            }),
            action_names: (0..n_act).map(|a| format!("a{a}")).collect(),
        })
    }

    pub fn best_action(&self) -> Action {
        Action(self.inner.best_action)
    }

    pub fn into_stable(self) -> Result<StableEnvironment, EnvironmentError> {
        let inner = &self.inner;
        let n = inner.chain.size();
        let r_best: Vec<f64> = (0..n)
            .map(|s| reward_to_f64(inner.rewards[s][inner.best_action]))
            .collect();
        let pi = stationary_distribution(&inner.chain)?;
        let v_star: f64 = pi.iter().zip(&r_best).map(|(p, r)| p * r).sum();
        let (_, bias) = poisson_solution(&inner.chain, &r_best, 0)?;
        let hi = bias.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = bias.iter().copied().fold(f64::INFINITY, f64::min);
        let span = hi - lo;
        let reference = settled_reference(&inner.chain, &r_best, inner.initial.clone(), period(&inner.chain)?);
        let range = reward_to_f64(self.max_reward()) + span;
        // the action with the lowest stationary payoff
        let n_act = self.action_names.len();
        let worst = (0..n_act)
            .map(|a| {
                let v: f64 = (0..n).map(|s| pi[s] * reward_to_f64(inner.rewards[s][a])).sum();
                (a, v)
            })
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
            .0;
        let metadata = ValueStabilityMetadata {
            optimal_value: v_star,
            reference_constant: reference.centered_sup(v_star) + 1e-9,
            reference: Arc::new(reference),
            loss_allowance: LossAllowance::Constant(2.0 * span + 1e-9),
            violation_bound: if range > 0.0 {
                ViolationBound::Exponential {
                    amplitude: 1.0,
                    rate: 2.0 / (range * range),
                }
            } else {
                ViolationBound::Zero
            },
            epsilon_schedule: EpsilonSchedule::default(),
            recovery: Some(Arc::new(Always(Action(inner.best_action)))),
        };
        Ok(StableEnvironment {
            metadata,
            worst_case: Some(Arc::new(Always(Action(worst)))),
            model: Arc::new(self),
        })
    }
}

impl EnvironmentModel for HiddenChainEnvironment {
    fn name(&self) -> &str {
        &self.name
    }

    fn action_names(&self) -> &[String] {
        &self.action_names
    }

    fn observation_count(&self) -> usize {
        self.inner.emission[0].len()
    }

    fn max_reward(&self) -> Reward {
        self.inner
            .rewards
            .iter()
            .flatten()
            .copied()
            .max()
            .unwrap_or_else(|| Reward::from_integer(0))
    }

    fn start(&self) -> Box<dyn ModelState> {
        Box::new(BeliefState {
            inner: self.inner.clone(),
            belief: self.inner.initial.clone(),
        })
    }
}

/// Posterior over the current hidden state.
#[derive(Debug, Clone)]
struct BeliefState {
    inner: Arc<Inner>,
    belief: Vec<f64>,
}

impl BeliefState {
    /// Unnormalized posterior over the next hidden state given the percept.
    fn joint(&self, action: Action, percept: &Percept) -> Vec<f64> {
        let inner = &self.inner;
        let n = self.belief.len();
        let o = percept.observation.0;
        let mut out = vec![0.0; n];
        if o >= inner.emission[0].len() || action.0 >= inner.rewards[0].len() {
            return out;
        }
        for s in 0..n {
            if self.belief[s] == 0.0 || inner.rewards[s][action.0] != percept.reward {
                continue;
            }
            for (sp, slot) in out.iter_mut().enumerate() {
                *slot += self.belief[s] * inner.chain.get(s, sp) * inner.emission[sp][o];
            }
        }
        out
    }
}

impl ModelState for BeliefState {
    fn distribution(&self, action: Action) -> PerceptDistribution {
        let inner = &self.inner;
        let n = self.belief.len();
        let n_obs = inner.emission[0].len();
        let mut out: PerceptDistribution = Vec::new();
        for s in 0..n {
            if self.belief[s] == 0.0 {
                continue;
            }
            let r = inner.rewards[s][action.0];
            for o in 0..n_obs {
                let w: f64 = (0..n)
                    .map(|sp| inner.chain.get(s, sp) * inner.emission[sp][o])
                    .sum::<f64>()
                    * self.belief[s];
                if w <= 0.0 {
                    continue;
                }
                let percept = Percept::new(r, o);
                match out.iter_mut().find(|(p, _)| *p == percept) {
                    Some(entry) => entry.1 += w,
                    None => out.push((percept, w)),
                }
            }
        }
        let total: f64 = out.iter().map(|(_, w)| w).sum();
        for entry in &mut out {
            entry.1 /= total;
        }
        out
    }

    fn probability(&self, action: Action, percept: &Percept) -> f64 {
        let mass: f64 = self.joint(action, percept).iter().sum();
        let total: f64 = self.belief.iter().sum();
        mass / total
    }

    fn advance(&mut self, action: Action, percept: &Percept) {
        let post = self.joint(action, percept);
        let total: f64 = post.iter().sum();
        if total > 0.0 {
            self.belief = post.into_iter().map(|x| x / total).collect();
        } else {
            // impossible percept: fall back to the one-step prediction
            let n = self.belief.len();
            self.belief = (0..n)
                .map(|sp| (0..n).map(|s| self.belief[s] * self.inner.chain.get(s, sp)).sum())
                .collect();
        }
    }

    fn clone_state(&self) -> Box<dyn ModelState> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone, Copy)]
struct Always(Action);

impl RecoveryFactory for Always {
    fn recovery_policy(&self, _history: &History) -> Box<dyn Policy> {
        Box::new(ConstantPolicy(self.0))
    }
}

impl AdversaryHook for Always {
    fn adversary(&self, _rng: &mut RandomSource) -> Box<dyn Policy> {
        Box::new(ConstantPolicy(self.0))
    }
}

pub fn hidden_chain_environment(
    name: impl Into<String>,
    transition: Vec<Vec<f64>>,
    emission: Vec<Vec<f64>>,
    rewards: Vec<Vec<Reward>>,
    initial: Vec<f64>,
) -> Result<StableEnvironment, EnvironmentError> {
    HiddenChainEnvironment::new(name, transition, emission, rewards, initial)?.into_stable()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::testutil::{assert_normalized, assert_reference_consistent};
    use crate::interaction::{reward_from_f64, seeded, Simulator};

    fn r(x: f64) -> Reward {
        reward_from_f64(x).unwrap()
    }

    fn sticky() -> StableEnvironment {
        hidden_chain_environment(
            "sticky",
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            vec![vec![r(1.0), r(0.5)], vec![r(0.2), r(0.0)]],
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn value_is_stationary_payoff_of_dominant_action() {
        let env = sticky();
        // π = (2/3, 1/3)
        assert!((env.optimal_value() - (2.0 / 3.0 + 0.2 / 3.0)).abs() < 1e-12);
        assert_reference_consistent(&env);
    }

    #[test]
    fn normalized() {
        assert_normalized(&sticky(), 1000, 51);
    }

    #[test]
    fn long_run_average_matches() {
        let env = sticky();
        let mut sim = Simulator::new(env.model.clone());
        let mut rng = seeded(4);
        let mut p = env.metadata.recovery_policy(&History::new()).unwrap();
        sim.run(p.as_mut(), 200_000, &mut rng).unwrap();
        let mean = sim.history().reward_sum_f64(1, 200_000) / 200_000.0;
        assert!((mean - env.optimal_value()).abs() < 0.01, "{mean}");
    }

    #[test]
    fn rejects_without_dominant_action() {
        let err = hidden_chain_environment(
            "bad",
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![vec![1.0], vec![1.0]],
            vec![vec![r(1.0), r(0.0)], vec![r(0.0), r(1.0)]],
            vec![0.5, 0.5],
        );
        assert!(matches!(err, Err(EnvironmentError::Argument(_))));
    }

    #[test]
    fn rejects_reducible_chain() {
        let err = hidden_chain_environment(
            "bad",
            vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            vec![vec![1.0], vec![1.0]],
            vec![vec![r(1.0)], vec![r(0.0)]],
            vec![0.5, 0.5],
        );
        assert_eq!(err.unwrap_err(), EnvironmentError::NotErgodic { from: 0, to: 1 });
    }
}
