use std::collections::VecDeque;
use std::sync::Arc;

use super::{
    AdversaryHook, EnvironmentError, EpsilonSchedule, EventuallyPeriodic, LossAllowance,
    RecoveryFactory, StableEnvironment, ValueStabilityMetadata, ViolationBound,
};
use crate::interaction::{
    reward_to_f64, Action, EnvironmentModel, History, ModelState, Percept, PerceptDistribution,
    Policy, RandomSource, Reward,
};
use crate::mdp::{
    check_ergodic, closed_classes, expected_steps_to, period, poisson_solution,
    solve_average_reward, Ergodicity, FiniteMdp, GainBiasSolution, StochasticMatrix,
};

const SOLVER_TOL: f64 = 1e-12;
const SOLVER_MAX_ITERS: usize = 2_000_000;
const SETTLE_TOL: f64 = 1e-14;
const SETTLE_CAP: usize = 1_000_000;

/// How the optimal value is recovered from an arbitrary state: follow a
/// minimum-expected-time route into one gain-optimal closed class, then
/// follow the optimal stationary policy inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryPlan {
    pub solution: GainBiasSolution,
    /// States of the gain-optimal closed class that recovery steers into.
    pub target: Vec<bool>,
    /// Combined stationary policy (route outside the target, optimal inside).
    pub actions: Vec<usize>,
    /// Bias of the combined policy, `h(target[0]) = 0`.
    pub bias: Vec<f64>,
    /// Expected steps into the target class from each state.
    pub steps_to_target: Vec<f64>,
}

impl RecoveryPlan {
    pub fn bias_span(&self) -> f64 {
        let hi = self.bias.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = self.bias.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }
}

/// A finite ergodic MDP viewed as a history-dependent environment: the
/// observation is the next state and the reward is `r(s, a, s')`.
#[derive(Debug, Clone)]
pub struct MdpEnvironment {
    name: String,
    mdp: Arc<FiniteMdp>,
    initial_state: usize,
    action_names: Vec<String>,
    plan: RecoveryPlan,
}

impl MdpEnvironment {
    pub fn new(
        name: impl Into<String>,
        mdp: FiniteMdp,
        initial_state: usize,
        action_names: Option<Vec<String>>,
    ) -> Result<Self, EnvironmentError> {
        if initial_state >= mdp.n_states() {
            return Err(EnvironmentError::Argument(format!(
                "initial state {initial_state} out of range for {} states",
                mdp.n_states()
            )));
        }
        let action_names = match action_names {
            Some(names) if names.len() == mdp.n_actions() => names,
            Some(names) => {
                return Err(EnvironmentError::Argument(format!(
                    "{} action names for {} actions",
                    names.len(),
                    mdp.n_actions()
                )))
            }
            None => (0..mdp.n_actions()).map(|a| format!("a{a}")).collect(),
        };
        if let Ergodicity::NotErgodic { from, to } = check_ergodic(&mdp) {
            return Err(EnvironmentError::NotErgodic { from, to });
        }
        let plan = recovery_plan(&mdp)?;
        Ok(Self {
            name: name.into(),
            mdp: Arc::new(mdp),
            initial_state,
            action_names,
            plan,
        })
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }

    pub fn plan(&self) -> &RecoveryPlan {
        &self.plan
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// Expected per-step rewards of the recovery policy from the initial state.
    fn reference(&self) -> EventuallyPeriodic {
        let mdp = &self.mdp;
        let n = mdp.n_states();
        let rbar = mdp.policy_rewards(&self.plan.actions);
        let chain = mdp.policy_chain(&self.plan.actions);
        let target: Vec<usize> = (0..n).filter(|&s| self.plan.target[s]).collect();
        let sub = StochasticMatrix::new(
            target
                .iter()
                .map(|&i| target.iter().map(|&j| chain.get(i, j)).collect())
                .collect(),
        );
        let p = sub.ok().and_then(|c| period(&c).ok()).unwrap_or(1);

        let mut mu = vec![0.0; n];
        mu[self.initial_state] = 1.0;
        settled_reference(&chain, &rbar, mu, p)
    }

    pub fn into_stable(self) -> StableEnvironment {
        let gain = self.plan.solution.gain;
        let reference = self.reference();
        let span = self.plan.bias_span();
        let r_max = reward_to_f64(self.mdp.max_reward());
        // Loss = (bias terms bounded by 2·span) + martingale with increments of range R.
        let range = r_max + span;
        let violation_bound = if range > 0.0 {
            ViolationBound::Exponential {
                amplitude: 1.0,
                rate: 2.0 / (range * range),
            }
        } else {
            ViolationBound::Zero
        };
        let metadata = ValueStabilityMetadata {
            optimal_value: gain,
            reference_constant: reference.centered_sup(gain) + 1e-9,
            reference: Arc::new(reference),
            loss_allowance: LossAllowance::Constant(2.0 * span + 1e-9),
            violation_bound,
            epsilon_schedule: EpsilonSchedule::default(),
            recovery: Some(Arc::new(StatePolicyFactory {
                actions: Arc::new(self.plan.actions.clone()),
                initial_state: self.initial_state,
            })),
        };
        // adversary: drift toward low-bias states
        let worst: Vec<usize> = (0..self.mdp.n_states())
            .map(|s| {
                let scores: Vec<f64> = (0..self.mdp.n_actions())
                    .map(|a| {
                        self.mdp
                            .row(s, a)
                            .iter()
                            .zip(&self.plan.bias)
                            .map(|(p, h)| p * h)
                            .sum()
                    })
                    .collect();
                let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
                scores.iter().position(|&v| v <= best + 1e-12).unwrap_or(0)
            })
            .collect();
        let hook = StatePolicyFactory {
            actions: Arc::new(worst),
            initial_state: self.initial_state,
        };
        StableEnvironment {
            model: Arc::new(self),
            metadata,
            worst_case: Some(Arc::new(hook)),
        }
    }
}

/// Expected rewards `μ_i · r` of the chain started at `mu`, stored once the
/// state distribution has settled into a `period`-cycle.
pub(super) fn settled_reference(
    chain: &StochasticMatrix,
    rewards: &[f64],
    mut mu: Vec<f64>,
    period: usize,
) -> EventuallyPeriodic {
    let n = chain.size();
    let p = period.max(1);
    let mut window: VecDeque<Vec<f64>> = VecDeque::with_capacity(p + 1);
    let mut out = Vec::new();
    for i in 1..=SETTLE_CAP {
        if window.len() == p {
            let diff: f64 = window[0].iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
            if diff <= SETTLE_TOL {
                // r_{i-p} .. r_{i-1} repeat forever
                let split = i - 1 - p;
                let cycle = out[split..].to_vec();
                out.truncate(split);
                return EventuallyPeriodic::new(out, cycle);
            }
            window.pop_front();
        }
        out.push(mu.iter().zip(rewards).map(|(m, r)| m * r).sum());
        let next: Vec<f64> = (0..n)
            .map(|sp| (0..n).map(|s| mu[s] * chain.get(s, sp)).sum())
            .collect();
        window.push_back(std::mem::replace(&mut mu, next));
    }
    let split = out.len() - p;
    let cycle = out[split..].to_vec();
    out.truncate(split);
    EventuallyPeriodic::new(out, cycle)
}

fn recovery_plan(mdp: &FiniteMdp) -> Result<RecoveryPlan, EnvironmentError> {
    let solution = solve_average_reward(mdp, SOLVER_TOL, SOLVER_MAX_ITERS)?;
    let n = mdp.n_states();
    let chain = mdp.policy_chain(&solution.policy);
    let rbar = mdp.policy_rewards(&solution.policy);
    let classes = closed_classes(&chain);
    let class_gain = |class: &[usize]| -> f64 {
        let sub = StochasticMatrix::new(
            class
                .iter()
                .map(|&i| class.iter().map(|&j| chain.get(i, j)).collect())
                .collect(),
        );
        match sub.and_then(|c| crate::mdp::stationary_distribution(&c)) {
            Ok(pi) => pi.iter().zip(class).map(|(p, &s)| p * rbar[s]).sum(),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let gains: Vec<f64> = classes.iter().map(|c| class_gain(c)).collect();
    let best = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let chosen = gains
        .iter()
        .position(|&g| g >= solution.gain - 1e-8 || g >= best)
        .expect("a finite chain has a closed class");
    let mut target = vec![false; n];
    for &s in &classes[chosen] {
        target[s] = true;
    }
    let (steps_to_target, route) = expected_steps_to(mdp, &target, 1e-13, 10_000_000)?;
    let actions: Vec<usize> = (0..n)
        .map(|s| if target[s] { solution.policy[s] } else { route[s] })
        .collect();
    let combined = mdp.policy_chain(&actions);
    let (_, bias) = poisson_solution(&combined, &mdp.policy_rewards(&actions), classes[chosen][0])?;
    Ok(RecoveryPlan {
        solution,
        target,
        actions,
        bias,
        steps_to_target,
    })
}

impl EnvironmentModel for MdpEnvironment {
    fn name(&self) -> &str {
        &self.name
    }

    fn action_names(&self) -> &[String] {
        &self.action_names
    }

    fn observation_count(&self) -> usize {
        self.mdp.n_states()
    }

    fn max_reward(&self) -> Reward {
        self.mdp.max_reward()
    }

    fn start(&self) -> Box<dyn ModelState> {
        Box::new(MdpState {
            mdp: self.mdp.clone(),
            current: self.initial_state,
        })
    }
}

#[derive(Debug, Clone)]
struct MdpState {
    mdp: Arc<FiniteMdp>,
    current: usize,
}

impl ModelState for MdpState {
    fn distribution(&self, action: Action) -> PerceptDistribution {
        let s = self.current;
        self.mdp
            .row(s, action.0)
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(sp, p)| (Percept::new(self.mdp.reward(s, action.0, sp), sp), *p))
            .collect()
    }

    fn probability(&self, action: Action, percept: &Percept) -> f64 {
        let sp = percept.observation.0;
        if sp >= self.mdp.n_states() || action.0 >= self.mdp.n_actions() {
            return 0.0;
        }
        if self.mdp.reward(self.current, action.0, sp) != percept.reward {
            return 0.0;
        }
        self.mdp.p(self.current, action.0, sp)
    }

    fn advance(&mut self, _action: Action, percept: &Percept) {
        if percept.observation.0 < self.mdp.n_states() {
            self.current = percept.observation.0;
        }
    }

    fn clone_state(&self) -> Box<dyn ModelState> {
        Box::new(self.clone())
    }
}

/// Stationary policy reading the current state off the last observation.
#[derive(Debug, Clone)]
struct StatePolicyFactory {
    actions: Arc<Vec<usize>>,
    initial_state: usize,
}

#[derive(Debug, Clone)]
struct StatePolicy {
    actions: Arc<Vec<usize>>,
    initial_state: usize,
}

impl Policy for StatePolicy {
    fn act(&mut self, history: &History) -> Action {
        let state = history
            .last()
            .map(|s| s.percept.observation.0)
            .unwrap_or(self.initial_state);
        Action(self.actions.get(state).copied().unwrap_or(0))
    }
}

impl RecoveryFactory for StatePolicyFactory {
    fn recovery_policy(&self, _history: &History) -> Box<dyn Policy> {
        Box::new(StatePolicy {
            actions: self.actions.clone(),
            initial_state: self.initial_state,
        })
    }
}

impl AdversaryHook for StatePolicyFactory {
    fn adversary(&self, _rng: &mut RandomSource) -> Box<dyn Policy> {
        self.recovery_policy(&History::new())
    }
}

/// Builds an ergodic MDP environment and its metadata.
pub fn mdp_environment(
    name: impl Into<String>,
    mdp: FiniteMdp,
    initial_state: usize,
    action_names: Option<Vec<String>>,
) -> Result<StableEnvironment, EnvironmentError> {
    Ok(MdpEnvironment::new(name, mdp, initial_state, action_names)?.into_stable())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::testutil::{assert_normalized, assert_reference_consistent};
    use crate::interaction::{reward_from_f64, seeded, Simulator};

    fn r(x: f64) -> Reward {
        reward_from_f64(x).unwrap()
    }

    pub(crate) fn two_state() -> FiniteMdp {
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
    fn single_state_constant_reward() {
        let mdp =
            FiniteMdp::with_state_action_rewards(vec![vec![vec![1.0]]], vec![vec![r(0.7)]]).unwrap();
        let env = mdp_environment("one", mdp, 0, None).unwrap();
        assert!((env.optimal_value() - 0.7).abs() < 1e-12);
        assert_eq!(env.metadata.reference.reward(1), 0.7);
        assert_eq!(env.metadata.reference.reward(12345), 0.7);
        let mut p = env.metadata.recovery_policy(&History::new()).unwrap();
        assert_eq!(p.act(&History::new()), Action(0));
        assert!(env.metadata.d(10, 0.1) < 1e-6);
    }

    #[test]
    fn two_state_values_and_recovery() {
        let menv = MdpEnvironment::new("two", two_state(), 0, None).unwrap();
        assert_eq!(menv.plan().actions, vec![0, 0]);
        assert_eq!(menv.plan().steps_to_target, vec![0.0, 1.0]);
        let env = menv.into_stable();
        assert!((env.optimal_value() - 1.0).abs() < 1e-10);
        // adversarial prefix ending in state 1: recovery returns to 0 in one step
        let mut sim = Simulator::new(env.model.clone());
        let mut rng = seeded(1);
        sim.step_with(Action(1), &mut rng).unwrap();
        assert_eq!(sim.history().last().unwrap().percept.observation.0, 1);
        let mut p = env.metadata.recovery_policy(sim.history()).unwrap();
        sim.step(p.as_mut(), &mut rng).unwrap();
        assert_eq!(sim.history().last().unwrap().percept.observation.0, 0);
        sim.run(p.as_mut(), 10, &mut rng).unwrap();
        assert!(sim.history().steps()[2..].iter().all(|s| s.action == Action(0)));
        let prefix = crate::environments::reference_reward_prefix(&env.metadata, 5);
        assert_eq!(prefix, vec![1.0; 5]);
    }

    #[test]
    fn non_ergodic_rejected_with_witness() {
        let mdp = FiniteMdp::with_state_action_rewards(
            vec![
                vec![vec![0.5, 0.5], vec![1.0, 0.0]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
            vec![vec![r(0.0), r(0.0)], vec![r(1.0), r(1.0)]],
        )
        .unwrap();
        let err = mdp_environment("trap", mdp, 0, None).unwrap_err();
        assert_eq!(err, EnvironmentError::NotErgodic { from: 1, to: 0 });
    }

    #[test]
    fn periodic_reference_is_settled() {
        // forced 2-cycle: reward 1 when leaving state 0
        let mdp = FiniteMdp::with_state_action_rewards(
            vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            vec![vec![r(1.0)], vec![r(0.0)]],
        )
        .unwrap();
        let env = mdp_environment("cycle", mdp, 0, None).unwrap();
        let reference = &env.metadata.reference;
        assert_eq!(reference.reward(1), 1.0);
        assert_eq!(reference.reward(2), 0.0);
        assert_eq!(reference.sum(1, 1001), 501.0);
        assert_reference_consistent(&env);
    }

    #[test]
    fn normalized_and_consistent() {
        let mdp = FiniteMdp::new(
            vec![
                vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.4, 0.0]],
                vec![vec![0.0, 0.1, 0.9], vec![0.3, 0.3, 0.4]],
                vec![vec![0.5, 0.5, 0.0], vec![0.1, 0.1, 0.8]],
            ],
            vec![
                vec![vec![r(0.0), r(1.0), r(0.5)], vec![r(0.2), r(0.2), r(0.2)]],
                vec![vec![r(0.0), r(0.3), r(1.0)], vec![r(0.1), r(0.0), r(0.9)]],
                vec![vec![r(0.4), r(0.0), r(0.0)], vec![r(1.0), r(0.0), r(0.6)]],
            ],
        )
        .unwrap();
        let env = mdp_environment("three", mdp, 2, None).unwrap();
        assert_normalized(&env, 1000, 11);
        assert_reference_consistent(&env);
    }
}
