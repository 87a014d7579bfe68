use std::sync::Arc;

use num_traits::{One, Zero};

use super::{
    AdversaryHook, ConstantPolicy, EpsilonSchedule, EventuallyPeriodic, LossAllowance,
    RecoveryFactory, StableEnvironment, ValueStabilityMetadata, ViolationBound,
};
use crate::interaction::{
    Action, EnvironmentModel, History, ModelState, Percept, PerceptDistribution, Policy,
    RandomSource, Reward,
};

pub const SAFE: Action = Action(0);
pub const RISKY: Action = Action(1);

/// Prefix statistics the reward rule depends on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrapStats {
    /// Number of `a` actions so far.
    pub a_count: u64,
    /// Length of the `b`-run ending at the last step.
    pub run: u64,
    pub longest_run: u64,
}

impl TrapStats {
    pub fn push(&mut self, action: Action) {
        if action == SAFE {
            self.a_count += 1;
            self.run = 0;
        } else {
            self.run += 1;
            self.longest_run = self.longest_run.max(self.run);
        }
    }

    pub fn of(history: &History) -> Self {
        let mut stats = Self::default();
        for a in history.actions() {
            stats.push(a);
        }
        stats
    }
}

/// Deterministic two-action environment `ν_s`.
///
/// `a` always pays 1. For `s >= 1`, `b` pays 2 once at least `s` `a`'s have
/// been played and some `b`-run (counting this step) is longer than the
/// number of `a`'s; otherwise 0. For `s = 0`, `b` pays 0.
#[derive(Debug, Clone)]
pub struct TrapEnvironment {
    name: String,
    s: u64,
    action_names: Vec<String>,
}

impl TrapEnvironment {
    pub fn new(s: u64) -> Self {
        Self {
            name: format!("trap_{s}"),
            s,
            action_names: vec!["a".into(), "b".into()],
        }
    }

    pub fn threshold(&self) -> u64 {
        self.s
    }

    /// Reward for playing `action` after a prefix with statistics `stats`.
    pub fn reward(&self, stats: &TrapStats, action: Action) -> Reward {
        if action == SAFE {
            return Reward::one();
        }
        let longest = stats.longest_run.max(stats.run + 1);
        if self.s >= 1 && stats.a_count >= self.s && longest > stats.a_count {
            Reward::from_integer(2)
        } else {
            Reward::zero()
        }
    }

    pub fn into_stable(self) -> StableEnvironment {
        let s = self.s;
        let metadata = if s == 0 {
            ValueStabilityMetadata {
                optimal_value: 1.0,
                reference: Arc::new(EventuallyPeriodic::constant(1.0)),
                reference_constant: 0.0,
                loss_allowance: LossAllowance::Constant(0.0),
                violation_bound: ViolationBound::Zero,
                epsilon_schedule: EpsilonSchedule::default(),
                recovery: Some(Arc::new(TrapRecovery { s })),
            }
        } else {
            // s a's, then s b's paying 0, then 2 forever
            let mut prefix = vec![1.0; s as usize];
            prefix.extend(std::iter::repeat_n(0.0, s as usize));
            let reference = EventuallyPeriodic::new(prefix, vec![2.0]);
            ValueStabilityMetadata {
                optimal_value: 2.0,
                reference_constant: reference.centered_sup(2.0),
                reference: Arc::new(reference),
                loss_allowance: LossAllowance::Linear { slope: 2.0 },
                violation_bound: ViolationBound::Zero,
                epsilon_schedule: EpsilonSchedule::default(),
                recovery: Some(Arc::new(TrapRecovery { s })),
            }
        };
        StableEnvironment {
            metadata,
            worst_case: Some(Arc::new(TrapAdversary { s })),
            model: Arc::new(self),
        }
    }
}

impl EnvironmentModel for TrapEnvironment {
    fn name(&self) -> &str {
        &self.name
    }

    fn action_names(&self) -> &[String] {
        &self.action_names
    }

    fn observation_count(&self) -> usize {
        1
    }

    fn max_reward(&self) -> Reward {
        if self.s == 0 {
            Reward::one()
        } else {
            Reward::from_integer(2)
        }
    }

    fn start(&self) -> Box<dyn ModelState> {
        Box::new(TrapState {
            env: self.clone(),
            stats: TrapStats::default(),
        })
    }
}

#[derive(Debug, Clone)]
struct TrapState {
    env: TrapEnvironment,
    stats: TrapStats,
}

impl ModelState for TrapState {
    fn distribution(&self, action: Action) -> PerceptDistribution {
        vec![(Percept::new(self.env.reward(&self.stats, action), 0), 1.0)]
    }

    fn advance(&mut self, action: Action, _percept: &Percept) {
        self.stats.push(action);
    }

    fn clone_state(&self) -> Box<dyn ModelState> {
        Box::new(self.clone())
    }
}

/// Plays `a` until `s` of them have been played, then `b` forever.
#[derive(Debug, Clone)]
struct TrapRecovery {
    s: u64,
}

#[derive(Debug, Clone)]
struct TrapRecoveryPolicy {
    s: u64,
    stats: TrapStats,
    seen: usize,
}

impl Policy for TrapRecoveryPolicy {
    fn act(&mut self, history: &History) -> Action {
        if history.len() < self.seen {
            self.stats = TrapStats::default();
            self.seen = 0;
        }
        for step in &history.steps()[self.seen..] {
            self.stats.push(step.action);
        }
        self.seen = history.len();
        if self.s == 0 || self.stats.a_count < self.s {
            SAFE
        } else {
            RISKY
        }
    }
}

impl RecoveryFactory for TrapRecovery {
    fn recovery_policy(&self, _history: &History) -> Box<dyn Policy> {
        Box::new(TrapRecoveryPolicy {
            s: self.s,
            stats: TrapStats::default(),
            seen: 0,
        })
    }
}

/// Inflates the `a` count (`s >= 1`) or burns steps on `b` (`s = 0`).
#[derive(Debug, Clone)]
struct TrapAdversary {
    s: u64,
}

impl AdversaryHook for TrapAdversary {
    fn adversary(&self, _rng: &mut RandomSource) -> Box<dyn Policy> {
        Box::new(ConstantPolicy(if self.s == 0 { RISKY } else { SAFE }))
    }
}

pub fn trap_environment(s: u64) -> StableEnvironment {
    TrapEnvironment::new(s).into_stable()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::testutil::{assert_normalized, assert_reference_consistent};
    use crate::interaction::{seeded, Simulator};
    use proptest::prelude::*;

    fn rewards_of(env: &StableEnvironment, actions: &[Action]) -> Vec<Reward> {
        let mut sim = Simulator::new(env.model.clone());
        let mut rng = seeded(0);
        for &a in actions {
            sim.step_with(a, &mut rng).unwrap();
        }
        sim.history().rewards().collect()
    }

    #[test]
    fn nu_zero_rules() {
        let env = trap_environment(0);
        let r = rewards_of(&env, &[SAFE, RISKY, RISKY, SAFE, RISKY]);
        let want: Vec<Reward> = [1, 0, 0, 1, 0].iter().map(|&x| Reward::from_integer(x)).collect();
        assert_eq!(r, want);
    }

    #[test]
    fn threshold_two_example() {
        let env = trap_environment(2);
        let r = rewards_of(&env, &[SAFE, SAFE, RISKY, RISKY, RISKY, RISKY]);
        let want: Vec<Reward> =
            [1, 1, 0, 0, 2, 2].iter().map(|&x| Reward::from_integer(x)).collect();
        assert_eq!(r, want);
    }

    #[test]
    fn long_run_before_threshold_counts_later() {
        // a b-run of 3 happens before any a; once a_count reaches s = 2 (< 3), b pays 2
        let env = trap_environment(2);
        let r = rewards_of(&env, &[RISKY, RISKY, RISKY, SAFE, SAFE, RISKY]);
        assert_eq!(r[5], Reward::from_integer(2));
    }

    #[test]
    fn reference_is_recovery_from_scratch() {
        for s in [1u64, 3, 7] {
            let env = trap_environment(s);
            let mut sim = Simulator::new(env.model.clone());
            let mut rng = seeded(1);
            let mut p = env.metadata.recovery_policy(&History::new()).unwrap();
            sim.run(p.as_mut(), 40, &mut rng).unwrap();
            for (i, r) in sim.history().rewards().enumerate() {
                let got = crate::interaction::reward_to_f64(r);
                assert_eq!(got, env.metadata.reference.reward(i as u64 + 1), "s={s} i={i}");
            }
            assert_reference_consistent(&env);
        }
        assert_reference_consistent(&trap_environment(0));
    }

    #[test]
    fn all_a_prefix_costs_two_per_step() {
        let env = trap_environment(1);
        let k = 50usize;
        let mut sim = Simulator::new(env.model.clone());
        let mut rng = seeded(1);
        let mut adv = env.worst_case.as_ref().unwrap().adversary(&mut rng);
        sim.run(adv.as_mut(), k - 1, &mut rng).unwrap();
        let mut p = env.metadata.recovery_policy(sim.history()).unwrap();
        sim.run(p.as_mut(), 3 * k, &mut rng).unwrap();
        let realized = sim.history().reward_sum_f64(k, 3 * k);
        let reference = env.metadata.reference.sum(k as u64, 3 * k as u64);
        let loss = reference - realized;
        assert_eq!(loss, 2.0 * (k - 1) as f64);
        assert!(loss <= env.metadata.d(k as u64, 0.1));
    }

    #[test]
    fn normalized() {
        for s in [0, 1, 4] {
            assert_normalized(&trap_environment(s), 1000, 31 + s);
        }
    }

    proptest! {
        #[test]
        fn rewards_are_a_function_of_the_action_prefix(
            s in 0u64..5,
            bits in proptest::collection::vec(any::<bool>(), 0..60),
        ) {
            let actions: Vec<Action> = bits.iter().map(|&b| if b { RISKY } else { SAFE }).collect();
            let env = trap_environment(s);
            let first = rewards_of(&env, &actions);
            let second = rewards_of(&env, &actions);
            prop_assert_eq!(&first, &second);
            let direct: Vec<Reward> = (0..actions.len())
                .map(|i| {
                    let stats = TrapStats::of(&{
                        let mut h = History::new();
                        for (j, &a) in actions[..i].iter().enumerate() {
                            h.push(a, Percept::new(first[j], 0));
                        }
                        h
                    });
                    TrapEnvironment::new(s).reward(&stats, actions[i])
                })
                .collect();
            prop_assert_eq!(first, direct);
        }
    }
}
