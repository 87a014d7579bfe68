use crate::environments::StableEnvironment;
use crate::interaction::reward_to_f64;

use super::AgentError;

const WEIGHT_TOL: f64 = 1e-12;

/// A finite environment class with prior weights and a cyclic numbering.
///
/// Numbering position `p >= 1` names member `(p - 1) mod M`, so every member
/// recurs once per period `M`.
#[derive(Debug, Clone)]
pub struct ClassSpec {
    members: Vec<StableEnvironment>,
    weights: Vec<f64>,
}

impl ClassSpec {
    /// `weights = None` gives `w_i ∝ 2^{-(i+1)}`, normalized.
    pub fn new(
        members: Vec<StableEnvironment>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self, AgentError> {
        if members.is_empty() {
            return Err(AgentError::Config("environment class is empty".into()));
        }
        let weights = match weights {
            Some(w) => w,
            None => default_weights(members.len()),
        };
        if weights.len() != members.len() {
            return Err(AgentError::Config(format!(
                "{} weights for {} members",
                weights.len(),
                members.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(AgentError::Config("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(AgentError::Config(format!("weights sum to {total}, not 1")));
        }
        let actions = members[0].model.action_count();
        let observations = members[0].model.observation_count();
        for m in &members[1..] {
            if m.model.action_count() != actions || m.model.observation_count() != observations {
                return Err(AgentError::Config(format!(
                    "member {} has a different action or observation alphabet",
                    m.name()
                )));
            }
        }
        Ok(Self { members, weights })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[StableEnvironment] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &StableEnvironment {
        &self.members[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn optimal_value(&self, i: usize) -> f64 {
        self.members[i].metadata.optimal_value
    }

    /// Member at numbering position `p >= 1`.
    pub fn numbering(&self, p: u64) -> usize {
        debug_assert!(p >= 1);
        ((p - 1) % self.members.len() as u64) as usize
    }

    /// Largest reward any member can emit.
    pub fn max_reward(&self) -> f64 {
        self.members
            .iter()
            .map(|m| reward_to_f64(m.model.max_reward()))
            .fold(0.0, f64::max)
    }
}

/// `w_i = 2^{-(i+1)} / Σ_j 2^{-(j+1)}`.
pub fn default_weights(n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|i| 0.5f64.powi(i as i32 + 1)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // put the rounding residue on the largest weight
    let residue = 1.0 - w.iter().sum::<f64>();
    w[0] += residue;
    w
}
