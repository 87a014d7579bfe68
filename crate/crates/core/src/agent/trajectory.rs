use std::collections::BTreeMap;

use crate::environments::StableEnvironment;
use crate::interaction::{reward_to_f64, History, RandomSource, Simulator};

use super::{Agent, AgentError, BreakReason, HorizonRecord, Phase, StepDiagnostics};

/// One interaction step as seen from outside the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub phase: Phase,
    pub nu_t: usize,
    pub nu_e: Option<usize>,
    pub s: u32,
    pub action: usize,
    pub reward: f64,
    pub running_avg: f64,
    pub diagnostics: StepDiagnostics,
}

/// A full run: per-step records plus the agent's horizon and break logs.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub horizons: Vec<HorizonRecord>,
    pub breaks: Vec<(u64, BreakReason)>,
    pub history: History,
}

impl Trajectory {
    pub fn final_average(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.running_avg)
    }

    /// Steps spent in each phase; sums to the horizon.
    pub fn phase_counts(&self) -> BTreeMap<Phase, u64> {
        let mut out: BTreeMap<Phase, u64> = Phase::ALL.iter().map(|p| (*p, 0)).collect();
        for r in &self.records {
            *out.entry(r.phase).or_default() += 1;
        }
        out
    }
}

/// Runs `agent` against `truth` for `horizon` steps.
pub fn run_agent(
    agent: &mut Agent,
    truth: &StableEnvironment,
    horizon: u64,
    rng: &mut RandomSource,
) -> Result<Trajectory, AgentError> {
    let mut sim = Simulator::new(truth.model.clone());
    let mut records = Vec::with_capacity(horizon as usize);
    let mut total = 0.0;
    for _ in 0..horizon {
        let action = agent.act(sim.history())?;
        let percept = sim
            .step_with(action, rng)
            .map_err(|e| AgentError::Config(e.to_string()))?;
        let d = *agent.last_decision().expect("act records a decision");
        let reward = reward_to_f64(percept.reward);
        total += reward;
        records.push(StepRecord {
            step: d.step,
            phase: d.phase,
            nu_t: d.nu_t,
            nu_e: d.nu_e,
            s: d.s,
            action: action.0,
            reward,
            running_avg: total / d.step as f64,
            diagnostics: d.diagnostics,
        });
    }
    Ok(Trajectory {
        records,
        horizons: agent.horizon_log().to_vec(),
        breaks: agent.break_log().to_vec(),
        history: sim.into_history(),
    })
}
