//! The self-optimizing agent for a finite class of value-stable environments.
//!
//! The agent keeps a Bayesian mixture over the class, exploits the first
//! member of its consistency set that the numbering reaches, and
//! periodically probes a member with a higher optimal value, each probe
//! scheduled far enough ahead that the exploitation reward it risks is
//! negligible.

mod class;
mod horizons;
mod machine;
mod mixture;
mod trajectory;

pub use class::{default_weights, ClassSpec};
pub use horizons::{
    compute_horizons, eq3_holds, eq5_thresholds, eq6_holds, k1, k2, k3, probe_grid, Eq5Failure,
    HorizonInputs, Horizons,
};
pub use machine::{Agent, BreakReason, Decision, HorizonRecord, StepDiagnostics};
pub use mixture::{consistency_set, Mixture};
pub use trajectory::{run_agent, StepRecord, Trajectory};

use std::fmt;

use thiserror::Error;

/// Tuning knobs that are not part of any environment's metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    /// Upper end of the linear search for the exploration start `k`.
    pub k_cap: u64,
    /// Largest probe point for "for all m" conditions.
    pub m_cap: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            k_cap: 10_000_000,
            m_cap: 1 << 40,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid class: {0}")]
    Config(String),
    #[error(
        "no exploration start k <= {k_cap} separates the references of members {nu_t} and {nu_e}; \
         their declared metadata are inconsistent"
    )]
    HorizonSearch { nu_t: usize, nu_e: usize, k_cap: u64 },
    #[error("reference rewards of member {member} never settle within the band before m = {m_cap}")]
    ReferenceBand { member: usize, m_cap: u64 },
    #[error("loss allowance of member {member} is not o(k) at the required tolerance")]
    NotSublinear { member: usize },
}

/// Label of one interaction step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    /// `ν^t` was (re)selected on this step.
    ChooseT,
    /// `ν^e` was (re)selected on this step.
    ChooseE,
    /// Horizons were computed on this step.
    Prepare,
    /// Playing `p^t` before the scheduled exploration.
    ExploitToK,
    /// Playing `p^e`.
    Explore,
    /// Playing `p^t` while no member with a higher value is available.
    IdleT,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::ChooseT,
        Phase::ChooseE,
        Phase::Prepare,
        Phase::ExploitToK,
        Phase::Explore,
        Phase::IdleT,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::ChooseT => "choose_t",
            Phase::ChooseE => "choose_e",
            Phase::Prepare => "prepare",
            Phase::ExploitToK => "exploit_to_k",
            Phase::Explore => "explore",
            Phase::IdleT => "idle_t",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
