//! Agent/environment interaction primitives.
//!
//! An interaction cycle `k` consists of an action `y_k` chosen by a
//! deterministic [`Policy`] from the history `z_{<k}`, followed by a
//! [`Percept`] `x_k = (r_k, o_k)` drawn from the environment's conditional
//! law given `z_{<k} y_k`. Environments may depend on the entire history;
//! implementations keep whatever sufficient statistics they need in a
//! [`ModelState`] that is advanced one step at a time.

mod history;
mod model;
mod rng;
mod stats;

pub use history::{History, Step};
pub use model::{
    conditional_distribution, sample_percept, sample_step, Action, EnvironmentModel, ModelState,
    Observation, Percept, PerceptDistribution, Policy, Simulator,
};
pub use rng::{derive_seed, seeded, RandomSource};
pub use stats::{average_value_estimates, AverageValueEstimates};

use num_rational::Ratio;
use thiserror::Error;

/// Exact reward value. All shipped environment families use rational rewards.
pub type Reward = Ratio<i64>;

/// Converts an exact reward to floating point for statistics.
pub fn reward_to_f64(r: Reward) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Converts a decimal to the nearest small-denominator rational reward.
pub fn reward_from_f64(x: f64) -> Option<Reward> {
    if !x.is_finite() {
        return None;
    }
    // Decimal literals like 0.7 are recovered exactly.
    for denom in [1i64, 10, 100, 1_000, 10_000, 100_000, 1_000_000] {
        let scaled = x * denom as f64;
        if (scaled - scaled.round()).abs() < 1e-9 {
            return Some(Ratio::new(scaled.round() as i64, denom));
        }
    }
    Ratio::approximate_float(x)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InteractionError {
    #[error("reward index range {from}..={to} is invalid for a history of length {len}")]
    IndexOutOfRange { from: usize, to: usize, len: usize },
    #[error("action {action} is outside the environment's action alphabet of size {size}")]
    AlphabetMismatch { action: usize, size: usize },
    #[error("observation {observation} is outside the observation alphabet of size {size}")]
    ObservationMismatch { observation: usize, size: usize },
    #[error("{0}")]
    Argument(String),
}
