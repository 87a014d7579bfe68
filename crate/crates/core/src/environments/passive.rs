use std::sync::Arc;

use num_traits::{One, Zero};

use super::{
    AdversaryHook, ConstantPolicy, EnvironmentError, EpsilonSchedule, EventuallyPeriodic,
    LossAllowance, RecoveryFactory, StableEnvironment, ValueStabilityMetadata, ViolationBound,
};
use crate::interaction::{
    Action, EnvironmentModel, History, ModelState, Percept, PerceptDistribution, Policy,
    RandomSource, Reward,
};

/// The observation stream `o_1, o_2, ...` of a passive environment.
#[derive(Debug, Clone, PartialEq)]
pub enum PassiveSource {
    /// `prefix ++ cycle ++ cycle ++ ...`.
    Periodic { prefix: Vec<usize>, cycle: Vec<usize> },
    /// I.i.d. binary symbols with `P(1) = p`.
    Bernoulli { p: f64 },
}

impl PassiveSource {
    /// `o_i` (1-based) for deterministic sources.
    pub fn symbol(&self, i: u64) -> Option<usize> {
        match self {
            Self::Periodic { prefix, cycle } => {
                let lp = prefix.len() as u64;
                Some(if i <= lp {
                    prefix[(i - 1) as usize]
                } else {
                    cycle[((i - lp - 1) % cycle.len() as u64) as usize]
                })
            }
            Self::Bernoulli { .. } => None,
        }
    }
}

/// Observations ignore actions; the reward is 1 iff the previous action
/// named the current observation. The first step pays 1.
#[derive(Debug, Clone)]
pub struct PassiveEnvironment {
    name: String,
    source: Arc<PassiveSource>,
    alphabet: usize,
    action_names: Vec<String>,
}

impl PassiveEnvironment {
    pub fn new(name: impl Into<String>, source: PassiveSource) -> Result<Self, EnvironmentError> {
        let alphabet = match &source {
            PassiveSource::Periodic { prefix, cycle } => {
                if cycle.is_empty() {
                    return Err(EnvironmentError::Argument("periodic source needs a non-empty cycle".into()));
                }
                prefix.iter().chain(cycle).copied().max().unwrap_or(0).max(1) + 1
            }
            PassiveSource::Bernoulli { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(EnvironmentError::Argument(format!("symbol probability {p} outside [0, 1]")));
                }
                2
            }
        };
        Ok(Self {
            name: name.into(),
            source: Arc::new(source),
            alphabet,
            action_names: (0..alphabet).map(|a| a.to_string()).collect(),
        })
    }

    pub fn source(&self) -> &PassiveSource {
        &self.source
    }

    pub fn into_stable(self) -> StableEnvironment {
        let (metadata, worst): (ValueStabilityMetadata, Arc<dyn AdversaryHook>) = match &*self.source {
            PassiveSource::Periodic { .. } => (
                ValueStabilityMetadata {
                    optimal_value: 1.0,
                    reference: Arc::new(EventuallyPeriodic::constant(1.0)),
                    reference_constant: 0.0,
                    loss_allowance: LossAllowance::Constant(1.0),
                    violation_bound: ViolationBound::Zero,
                    epsilon_schedule: EpsilonSchedule::default(),
                    recovery: Some(Arc::new(Predictor {
                        source: self.source.clone(),
                        shift: 0,
                        alphabet: self.alphabet,
                    })),
                },
                Arc::new(Predictor {
                    source: self.source.clone(),
                    shift: 1,
                    alphabet: self.alphabet,
                }),
            ),
            PassiveSource::Bernoulli { p } => {
                let likely = usize::from(*p >= 0.5);
                let v_star = p.max(1.0 - p);
                let reference = EventuallyPeriodic::new(vec![1.0], vec![v_star]);
                (
                    ValueStabilityMetadata {
                        optimal_value: v_star,
                        reference_constant: reference.centered_sup(v_star),
                        reference: Arc::new(reference),
                        loss_allowance: LossAllowance::Constant(1.0),
                        violation_bound: ViolationBound::Exponential {
                            amplitude: 1.0,
                            rate: 2.0,
                        },
                        epsilon_schedule: EpsilonSchedule::default(),
                        recovery: Some(Arc::new(FixedGuess(Action(likely)))),
                    },
                    Arc::new(FixedGuess(Action(1 - likely))),
                )
            }
        };
        StableEnvironment {
            metadata,
            worst_case: Some(worst),
            model: Arc::new(self),
        }
    }
}

impl EnvironmentModel for PassiveEnvironment {
    fn name(&self) -> &str {
        &self.name
    }

    fn action_names(&self) -> &[String] {
        &self.action_names
    }

    fn observation_count(&self) -> usize {
        self.alphabet
    }

    fn max_reward(&self) -> Reward {
        Reward::one()
    }

    fn start(&self) -> Box<dyn ModelState> {
        Box::new(PassiveState {
            source: self.source.clone(),
            steps: 0,
            previous: None,
        })
    }
}

#[derive(Debug, Clone)]
struct PassiveState {
    source: Arc<PassiveSource>,
    steps: u64,
    previous: Option<Action>,
}

impl PassiveState {
    fn reward_for(&self, observation: usize) -> Reward {
        match self.previous {
            Some(y) if y.0 != observation => Reward::zero(),
            _ => Reward::one(),
        }
    }
}

impl ModelState for PassiveState {
    fn distribution(&self, _action: Action) -> PerceptDistribution {
        match &*self.source {
            PassiveSource::Periodic { .. } => {
                let o = self.source.symbol(self.steps + 1).expect("deterministic source");
                vec![(Percept::new(self.reward_for(o), o), 1.0)]
            }
            PassiveSource::Bernoulli { p } => [(0usize, 1.0 - p), (1usize, *p)]
                .into_iter()
                .filter(|(_, w)| *w > 0.0)
                .map(|(o, w)| (Percept::new(self.reward_for(o), o), w))
                .collect(),
        }
    }

    fn advance(&mut self, action: Action, _percept: &Percept) {
        self.steps += 1;
        self.previous = Some(action);
    }

    fn clone_state(&self) -> Box<dyn ModelState> {
        Box::new(self.clone())
    }
}

/// Names `o_{i+1}` at step `i` (shift 0), or a wrong symbol (shift 1).
#[derive(Debug, Clone)]
struct Predictor {
    source: Arc<PassiveSource>,
    shift: usize,
    alphabet: usize,
}

impl Policy for Predictor {
    fn act(&mut self, history: &History) -> Action {
        let next = self.source.symbol(history.len() as u64 + 2).unwrap_or(0);
        Action((next + self.shift) % self.alphabet)
    }
}

impl RecoveryFactory for Predictor {
    fn recovery_policy(&self, _history: &History) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

impl AdversaryHook for Predictor {
    fn adversary(&self, _rng: &mut RandomSource) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone, Copy)]
struct FixedGuess(Action);

impl RecoveryFactory for FixedGuess {
    fn recovery_policy(&self, _history: &History) -> Box<dyn Policy> {
        Box::new(ConstantPolicy(self.0))
    }
}

impl AdversaryHook for FixedGuess {
    fn adversary(&self, _rng: &mut RandomSource) -> Box<dyn Policy> {
        Box::new(ConstantPolicy(self.0))
    }
}

pub fn passive_environment(
    name: impl Into<String>,
    source: PassiveSource,
) -> Result<StableEnvironment, EnvironmentError> {
    Ok(PassiveEnvironment::new(name, source)?.into_stable())
}
