use num_traits::Zero;

use super::{reward_to_f64, Action, InteractionError, Percept, Reward};

/// One completed interaction cycle `z_i = (y_i, r_i, o_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub action: Action,
    pub percept: Percept,
}

/// The interaction record `z_{1:k}`.
///
/// Steps are only ever appended. Reward prefix sums are maintained on append
/// so that any window sum is O(1).
#[derive(Debug, Clone)]
pub struct History {
    steps: Vec<Step>,
    // prefix[i] = r_1 + ... + r_i, prefix[0] = 0
    prefix: Vec<Reward>,
}

impl Default for History {
    fn default() -> Self {
        Self::new()
    }
}

impl History {
    pub fn new() -> Self {
        Self {
            steps: Vec::new(),
            prefix: vec![Reward::zero()],
        }
    }

    pub fn with_capacity(n: usize) -> Self {
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(Reward::zero());
        Self {
            steps: Vec::with_capacity(n),
            prefix,
        }
    }

    /// Number of completed cycles.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// The `i`-th step, 1-based as in `z_i`.
    pub fn step(&self, i: usize) -> Option<&Step> {
        i.checked_sub(1).and_then(|j| self.steps.get(j))
    }

    pub fn last(&self) -> Option<&Step> {
        self.steps.last()
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.steps.iter().map(|s| s.action)
    }

    pub fn push(&mut self, action: Action, percept: Percept) {
        let total = *self.prefix.last().expect("prefix is never empty") + percept.reward;
        self.steps.push(Step { action, percept });
        self.prefix.push(total);
    }

    /// `r_from + ... + r_to`, 1-based and inclusive.
    pub fn reward_sum(&self, from: usize, to: usize) -> Result<Reward, InteractionError> {
        if from < 1 || from > to || to > self.len() {
            return Err(InteractionError::IndexOutOfRange {
                from,
                to,
                len: self.len(),
            });
        }
        Ok(self.prefix[to] - self.prefix[from - 1])
    }

    /// Floating-point view of [`History::reward_sum`]; an empty range (`from > to`) sums to 0.
    pub fn reward_sum_f64(&self, from: usize, to: usize) -> f64 {
        if from > to {
            return 0.0;
        }
        self.reward_sum(from, to).map(reward_to_f64).unwrap_or(f64::NAN)
    }

    /// Sum of every reward received so far.
    pub fn total_reward(&self) -> Reward {
        *self.prefix.last().expect("prefix is never empty")
    }

    pub fn rewards(&self) -> impl Iterator<Item = Reward> + '_ {
        self.steps.iter().map(|s| s.percept.reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction::Observation;
    use proptest::prelude::*;

    fn history_of(rewards: &[i64]) -> History {
        let mut h = History::new();
        for &r in rewards {
            h.push(
                Action(0),
                Percept {
                    reward: Reward::from_integer(r),
                    observation: Observation(0),
                },
            );
        }
        h
    }

    #[test]
    fn reward_sum_examples() {
        let h = history_of(&[1, 1, 1]);
        assert_eq!(h.reward_sum(1, 3).unwrap(), Reward::from_integer(3));
        let h = history_of(&[1, 2, 3, 4, 5]);
        assert_eq!(h.reward_sum(2, 4).unwrap(), Reward::from_integer(9));
        let h = history_of(&[0, 7, 0]);
        assert_eq!(h.reward_sum(2, 2).unwrap(), Reward::from_integer(7));
    }

    #[test]
    fn reward_sum_rejects_bad_ranges() {
        let h = history_of(&[1, 2, 3]);
        assert!(matches!(
            h.reward_sum(0, 2),
            Err(InteractionError::IndexOutOfRange { .. })
        ));
        assert!(h.reward_sum(3, 2).is_err());
        assert!(h.reward_sum(1, 4).is_err());
        assert!(History::new().reward_sum(1, 1).is_err());
    }

    #[test]
    fn one_based_step_access() {
        let h = history_of(&[4, 5]);
        assert!(h.step(0).is_none());
        assert_eq!(h.step(2).unwrap().percept.reward, Reward::from_integer(5));
        assert!(h.step(3).is_none());
    }

    proptest! {
        #[test]
        fn reward_sum_splits(rewards in proptest::collection::vec(0i64..5, 2..60), a in 0usize..60, b in 0usize..60, c in 0usize..60) {
            let h = history_of(&rewards);
            let n = rewards.len();
            let mut idx = [a % n + 1, b % n + 1, c % n + 1];
            idx.sort();
            let (k, m, last) = (idx[0], idx[1], idx[2]);
            prop_assume!(m < last);
            let whole = h.reward_sum(k, last).unwrap();
            let split = h.reward_sum(k, m).unwrap() + h.reward_sum(m + 1, last).unwrap();
            prop_assert_eq!(whole, split);
        }
    }
}
