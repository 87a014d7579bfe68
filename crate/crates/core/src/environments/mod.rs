//! Concrete environment families, each paired with value-stability metadata.
//!
//! Every constructor returns a [`StableEnvironment`]: the conditional law
//! (an [`EnvironmentModel`]) together with the declared `V*`, reference
//! rewards, loss allowance `d`, violation bound `φ`, tolerance schedule and
//! recovery-policy factory.

mod bandit;
mod mdp_env;
mod metadata;
mod passive;
mod pomdp;
mod trap;

pub use bandit::{bandit_tower, BanditTower, DownRule};
pub use mdp_env::{mdp_environment, MdpEnvironment, RecoveryPlan};
pub use metadata::{
    reference_reward_prefix, EpsilonSchedule, EventuallyPeriodic, Inversion, LossAllowance,
    RecoveryFactory, ReferenceRewards, ValueStabilityMetadata, ViolationBound, DEFAULT_EPS0,
};
pub use passive::{passive_environment, PassiveEnvironment, PassiveSource};
pub use pomdp::{hidden_chain_environment, HiddenChainEnvironment};
pub use trap::{trap_environment, TrapEnvironment};

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::interaction::{Action, EnvironmentModel, History, Policy, RandomSource};
use crate::mdp::MdpError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvironmentError {
    #[error("MDP is not ergodic: state {to} cannot be reached from state {from}")]
    NotErgodic { from: usize, to: usize },
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("{0}")]
    Argument(String),
}

/// Environment-specific prefix generator used as the "worst declared" adversary.
pub trait AdversaryHook: Send + Sync + fmt::Debug {
    /// A policy that drives the environment into a hard-to-recover history.
    fn adversary(&self, rng: &mut RandomSource) -> Box<dyn Policy>;
}

/// An environment together with its declared value-stability metadata.
#[derive(Clone)]
pub struct StableEnvironment {
    pub model: Arc<dyn EnvironmentModel>,
    pub metadata: ValueStabilityMetadata,
    pub worst_case: Option<Arc<dyn AdversaryHook>>,
}

impl fmt::Debug for StableEnvironment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StableEnvironment")
            .field("model", &self.model.name())
            .field("metadata", &self.metadata)
            .finish()
    }
}

impl StableEnvironment {
    pub fn name(&self) -> &str {
        self.model.name()
    }

    pub fn optimal_value(&self) -> f64 {
        self.metadata.optimal_value
    }
}

/// A policy that replays a fixed action list, then repeats its last action.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    actions: Vec<Action>,
}

impl ScriptedPolicy {
    pub fn new(actions: Vec<Action>) -> Self {
        assert!(!actions.is_empty(), "scripted policy needs at least one action");
        Self { actions }
    }
}

impl Policy for ScriptedPolicy {
    fn act(&mut self, history: &History) -> Action {
        let i = history.len().min(self.actions.len() - 1);
        self.actions[i]
    }
}

/// Always plays the same action.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub Action);

impl Policy for ConstantPolicy {
    fn act(&mut self, _history: &History) -> Action {
        self.0
    }
}
