//! Self-optimizing reinforcement-learning agents for countable classes of
//! value-stable, history-dependent environments.
//!
//! * [`interaction`]: histories, percepts, environment and policy interfaces.
//! * [`environments`]: ergodic MDPs, the bandit tower, trap and passive
//!   environments, each with value-stability metadata.
//! * [`mdp`]: average-reward solver and Markov chain analysis.
//! * [`agent`]: the mixture-based self-optimizing policy.
//! * [`certify`]: sampled certification of declared value-stability metadata.
//! * [`harness`]: configuration, experiment runner, CSV output and CLI.

pub mod agent;
pub mod certify;
pub mod environments;
pub mod harness;
pub mod interaction;
pub mod mdp;
