use std::fmt;
use std::sync::Arc;

use rand::Rng;

use super::{History, InteractionError, RandomSource, Reward};

/// An element of the finite action alphabet `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action(pub usize);

/// An element of the finite observation alphabet `O`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Observation(pub usize);

/// `x_k = (r_k, o_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Percept {
    pub reward: Reward,
    pub observation: Observation,
}

impl Percept {
    pub fn new(reward: Reward, observation: usize) -> Self {
        Self {
            reward,
            observation: Observation(observation),
        }
    }
}

/// A finite conditional distribution over percepts.
pub type PerceptDistribution = Vec<(Percept, f64)>;

/// A history-dependent environment `ν(x_k | z_{<k} y_k)`.
///
/// The conditional law is exposed through a [`ModelState`]: a summary of the
/// history that is advanced once per cycle. Replaying a history through
/// [`ModelState::advance`] and then asking for
/// [`ModelState::distribution`] must give the same answer as evaluating the
/// conditional on the full history.
pub trait EnvironmentModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn action_names(&self) -> &[String];

    fn action_count(&self) -> usize {
        self.action_names().len()
    }

    fn observation_count(&self) -> usize;

    fn max_reward(&self) -> Reward;

    /// State summarizing the empty history.
    fn start(&self) -> Box<dyn ModelState>;
}

/// Incremental summary of a history under one environment.
pub trait ModelState: Send + fmt::Debug {
    /// Conditional percept distribution for the next cycle given `action`.
    fn distribution(&self, action: Action) -> PerceptDistribution;

    /// `ν(percept | history, action)`.
    fn probability(&self, action: Action, percept: &Percept) -> f64 {
        self.distribution(action)
            .iter()
            .filter(|(p, _)| p == percept)
            .map(|(_, w)| *w)
            .sum()
    }

    /// Absorbs one cycle. Must accept percepts of probability zero
    /// (the history may have been generated by another environment).
    fn advance(&mut self, action: Action, percept: &Percept);

    fn clone_state(&self) -> Box<dyn ModelState>;
}

/// A deterministic policy `p : History -> Action`.
///
/// Implementations may cache incremental information, but the action must be
/// a function of the history alone.
pub trait Policy: Send {
    fn act(&mut self, history: &History) -> Action;
}

/// Evaluates `ν(· | z_{<k} y_k)` by replaying `history` from scratch.
pub fn conditional_distribution(
    env: &dyn EnvironmentModel,
    history: &History,
    action: Action,
) -> Result<PerceptDistribution, InteractionError> {
    let mut state = env.start();
    for step in history.steps() {
        check_action(env, step.action)?;
        if step.percept.observation.0 >= env.observation_count() {
            return Err(InteractionError::ObservationMismatch {
                observation: step.percept.observation.0,
                size: env.observation_count(),
            });
        }
        state.advance(step.action, &step.percept);
    }
    check_action(env, action)?;
    Ok(state.distribution(action))
}

fn check_action(env: &dyn EnvironmentModel, action: Action) -> Result<(), InteractionError> {
    if action.0 >= env.action_count() {
        Err(InteractionError::AlphabetMismatch {
            action: action.0,
            size: env.action_count(),
        })
    } else {
        Ok(())
    }
}

/// Draws one percept from a distribution by inversion.
pub fn sample_percept(dist: &PerceptDistribution, rng: &mut RandomSource) -> Percept {
    debug_assert!(!dist.is_empty());
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut fallback = dist[0].0;
    for (p, w) in dist {
        if *w <= 0.0 {
            continue;
        }
        fallback = *p;
        acc += w;
        if u < acc {
            return *p;
        }
    }
    fallback
}

/// One cycle of the interaction law: `y = p(z_{<k})`, `x ~ ν(· | z_{<k} y)`.
///
/// `state` must summarize `history`; both are advanced.
pub fn sample_step(
    env: &dyn EnvironmentModel,
    state: &mut dyn ModelState,
    policy: &mut dyn Policy,
    history: &mut History,
    rng: &mut RandomSource,
) -> Result<(Action, Percept), InteractionError> {
    let action = policy.act(history);
    check_action(env, action)?;
    let percept = sample_percept(&state.distribution(action), rng);
    state.advance(action, &percept);
    history.push(action, percept);
    Ok((action, percept))
}

/// An environment instance together with its running history.
pub struct Simulator {
    env: Arc<dyn EnvironmentModel>,
    state: Box<dyn ModelState>,
    history: History,
}

impl fmt::Debug for Simulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulator")
            .field("env", &self.env.name())
            .field("steps", &self.history.len())
            .finish()
    }
}

impl Simulator {
    pub fn new(env: Arc<dyn EnvironmentModel>) -> Self {
        let state = env.start();
        Self {
            env,
            state,
            history: History::new(),
        }
    }

    pub fn env(&self) -> &Arc<dyn EnvironmentModel> {
        &self.env
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn into_history(self) -> History {
        self.history
    }

    /// Runs one cycle under `policy`.
    pub fn step(
        &mut self,
        policy: &mut dyn Policy,
        rng: &mut RandomSource,
    ) -> Result<(Action, Percept), InteractionError> {
        sample_step(
            self.env.as_ref(),
            self.state.as_mut(),
            policy,
            &mut self.history,
            rng,
        )
    }

    /// Runs one cycle with an externally chosen action.
    pub fn step_with(
        &mut self,
        action: Action,
        rng: &mut RandomSource,
    ) -> Result<Percept, InteractionError> {
        check_action(self.env.as_ref(), action)?;
        let percept = sample_percept(&self.state.distribution(action), rng);
        self.state.advance(action, &percept);
        self.history.push(action, percept);
        Ok(percept)
    }

    pub fn run(
        &mut self,
        policy: &mut dyn Policy,
        steps: usize,
        rng: &mut RandomSource,
    ) -> Result<(), InteractionError> {
        for _ in 0..steps {
            self.step(policy, rng)?;
        }
        Ok(())
    }
}
