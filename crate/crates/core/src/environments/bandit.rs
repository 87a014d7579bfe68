use std::sync::Arc;

use num_traits::{One, Zero};

use super::{
    AdversaryHook, EnvironmentError, EpsilonSchedule, EventuallyPeriodic, LossAllowance,
    RecoveryFactory, StableEnvironment, ValueStabilityMetadata, ViolationBound,
};
use crate::interaction::{
    Action, EnvironmentModel, History, ModelState, Percept, PerceptDistribution, Policy,
    RandomSource, Reward,
};

pub const PULL: Action = Action(0);
pub const UP: Action = Action(1);
pub const DOWN: Action = Action(2);

/// Effect of the `d` action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DownRule {
    /// Back to arm 0.
    ToBottom,
    /// Down by this many arms, stopping at arm 0.
    Fixed(usize),
}

impl DownRule {
    pub fn apply(self, arm: usize) -> usize {
        match self {
            Self::ToBottom => 0,
            Self::Fixed(j) => arm.saturating_sub(j),
        }
    }
}

/// A truncated tower of Bernoulli arms navigated with `g` (pull), `u` (up) and `d` (down).
#[derive(Debug, Clone)]
pub struct BanditTower {
    name: String,
    arms: Arc<Vec<f64>>,
    down: DownRule,
    action_names: Vec<String>,
}

impl BanditTower {
    pub fn new(
        name: impl Into<String>,
        arms: Vec<f64>,
        down: DownRule,
    ) -> Result<Self, EnvironmentError> {
        if arms.is_empty() {
            return Err(EnvironmentError::Argument("bandit tower needs at least one arm".into()));
        }
        if let Some(bad) = arms.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(EnvironmentError::Argument(format!(
                "arm mean {bad} outside [0, 1]"
            )));
        }
        if down == DownRule::Fixed(0) {
            return Err(EnvironmentError::Argument("down rule must move at least one arm".into()));
        }
        Ok(Self {
            name: name.into(),
            arms: Arc::new(arms),
            down,
            action_names: vec!["g".into(), "u".into(), "d".into()],
        })
    }

    pub fn arms(&self) -> &[f64] {
        &self.arms
    }

    pub fn down_rule(&self) -> DownRule {
        self.down
    }

    pub fn best_value(&self) -> f64 {
        self.arms.iter().copied().fold(0.0, f64::max)
    }

    /// Arms that strictly improve on every arm below them; the last is the first best arm.
    pub fn record_arms(&self) -> Vec<usize> {
        let mut out = vec![0];
        for (i, &d) in self.arms.iter().enumerate().skip(1) {
            if d > self.arms[*out.last().unwrap()] {
                out.push(i);
            }
        }
        out
    }

    fn sweep(&self) -> SweepPolicy {
        SweepPolicy::new(Arc::new(self.record_arms()), self.down, self.arms.len())
    }

    /// Expected rewards of the sweep policy from the empty history.
    fn reference(&self) -> EventuallyPeriodic {
        let best = *self.record_arms().last().unwrap();
        let policy = self.sweep();
        let mut arm = 0;
        let mut prefix = Vec::new();
        let mut t = 1u64;
        loop {
            if arm == best && isqrt(t) >= best as u64 {
                return EventuallyPeriodic::new(prefix, vec![self.arms[best]]);
            }
            let a = policy.decide(t, arm);
            prefix.push(if a == PULL { self.arms[arm] } else { 0.0 });
            arm = step_arm(arm, a, self.down, self.arms.len());
            t += 1;
        }
    }

    pub fn into_stable(self) -> StableEnvironment {
        let v_star = self.best_value();
        let reference = self.reference();
        let m = self.arms.len();
        let offset = match self.down {
            DownRule::ToBottom => 1.0,
            DownRule::Fixed(j) => (1 + j + (m - 1).div_ceil(j)) as f64,
        };
        let metadata = ValueStabilityMetadata {
            optimal_value: v_star,
            reference_constant: reference.centered_sup(v_star) + 1e-9,
            reference: Arc::new(reference),
            loss_allowance: LossAllowance::SquareRoot { scale: 1.0, offset },
            violation_bound: ViolationBound::Exponential {
                amplitude: 1.0,
                rate: 2.0,
            },
            epsilon_schedule: EpsilonSchedule::default(),
            recovery: Some(Arc::new(SweepFactory(self.sweep()))),
        };
        StableEnvironment {
            metadata,
            worst_case: Some(Arc::new(ClimbToTop { arms: m })),
            model: Arc::new(self),
        }
    }
}

pub fn isqrt(t: u64) -> u64 {
    let mut r = (t as f64).sqrt() as u64;
    while r * r > t {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= t {
        r += 1;
    }
    r
}

fn step_arm(arm: usize, action: Action, down: DownRule, m: usize) -> usize {
    match action {
        UP => (arm + 1).min(m - 1),
        DOWN => down.apply(arm),
        _ => arm,
    }
}

impl EnvironmentModel for BanditTower {
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
        Reward::one()
    }

    fn start(&self) -> Box<dyn ModelState> {
        Box::new(TowerState {
            arms: self.arms.clone(),
            down: self.down,
            arm: 0,
        })
    }
}

#[derive(Debug, Clone)]
struct TowerState {
    arms: Arc<Vec<f64>>,
    down: DownRule,
    arm: usize,
}

impl ModelState for TowerState {
    fn distribution(&self, action: Action) -> PerceptDistribution {
        if action != PULL {
            return vec![(Percept::new(Reward::zero(), 0), 1.0)];
        }
        let d = self.arms[self.arm];
        [(Reward::one(), d), (Reward::zero(), 1.0 - d)]
            .into_iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(r, p)| (Percept::new(r, 0), p))
            .collect()
    }

    fn advance(&mut self, action: Action, _percept: &Percept) {
        self.arm = step_arm(self.arm, action, self.down, self.arms.len());
    }

    fn clone_state(&self) -> Box<dyn ModelState> {
        Box::new(self.clone())
    }
}

/// At step `t`, head for the highest record arm not above `⌊√t⌋` and pull it.
#[derive(Debug, Clone)]
pub struct SweepPolicy {
    records: Arc<Vec<usize>>,
    down: DownRule,
    arms: usize,
    // arm position after the first `seen` steps of the observed history
    arm: usize,
    seen: usize,
}

impl SweepPolicy {
    fn new(records: Arc<Vec<usize>>, down: DownRule, arms: usize) -> Self {
        Self {
            records,
            down,
            arms,
            arm: 0,
            seen: 0,
        }
    }

    fn decide(&self, t: u64, arm: usize) -> Action {
        let cap = isqrt(t);
        let target = self
            .records
            .iter()
            .copied()
            .filter(|&r| r as u64 <= cap)
            .max()
            .unwrap_or(0);
        match arm.cmp(&target) {
            std::cmp::Ordering::Less => UP,
            std::cmp::Ordering::Greater => DOWN,
            std::cmp::Ordering::Equal => PULL,
        }
    }
}

impl Policy for SweepPolicy {
    fn act(&mut self, history: &History) -> Action {
        if history.len() < self.seen {
            self.arm = 0;
            self.seen = 0;
        }
        for step in &history.steps()[self.seen..] {
            self.arm = step_arm(self.arm, step.action, self.down, self.arms);
        }
        self.seen = history.len();
        self.decide(history.len() as u64 + 1, self.arm)
    }
}

#[derive(Debug, Clone)]
struct SweepFactory(SweepPolicy);

impl RecoveryFactory for SweepFactory {
    fn recovery_policy(&self, _history: &History) -> Box<dyn Policy> {
        Box::new(self.0.clone())
    }
}

/// Climbs to the top arm, then keeps pulling it.
#[derive(Debug, Clone)]
struct ClimbToTop {
    arms: usize,
}

impl AdversaryHook for ClimbToTop {
    fn adversary(&self, _rng: &mut RandomSource) -> Box<dyn Policy> {
        let mut script = vec![UP; self.arms - 1];
        script.push(PULL);
        Box::new(super::ScriptedPolicy::new(script))
    }
}

/// Builds a bandit tower with its metadata.
pub fn bandit_tower(
    name: impl Into<String>,
    arms: Vec<f64>,
    down: DownRule,
) -> Result<StableEnvironment, EnvironmentError> {
    Ok(BanditTower::new(name, arms, down)?.into_stable())
}
