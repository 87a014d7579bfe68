//! Configuration, experiment orchestration, CSV output and the CLI.
//!
//! Trajectory files have the columns
//! `step,phase,nu_t,nu_e,s,action,reward,running_avg` with one row per
//! interaction step; `nu_e` is `-1` while no exploration target exists and
//! `action` is the environment's action name.

mod cli;
mod config;
mod necessity;

pub use cli::{cli_main, Cli, Command};
pub use config::{
    AgentSection, CertifySection, ExperimentConfig, MemberSpec, RewardTable, SCHEMA_VERSION,
};
pub use necessity::{demo_necessity, NecessityReport, ProbePolicy, A_BLOCK, DIP_BOUND};

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::agent::{run_agent, Agent, AgentError, Phase, Trajectory};
use crate::certify::CertifyError;
use crate::interaction::seeded;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("cannot parse config{}: {message}", path.as_ref().map(|p| format!(" {}", p.display())).unwrap_or_default())]
    Parse {
        path: Option<PathBuf>,
        message: String,
    },
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

fn output_error(path: &Path) -> impl Fn(String) -> HarnessError + '_ {
    move |message| HarnessError::Output {
        path: path.to_path_buf(),
        message,
    }
}

pub const TRAJECTORY_HEADER: [&str; 8] = [
    "step",
    "phase",
    "nu_t",
    "nu_e",
    "s",
    "action",
    "reward",
    "running_avg",
];

pub const RUN_INDEX: &str = "runs.csv";

const RUN_INDEX_HEADER: [&str; 16] = [
    "seed",
    "true_member",
    "horizon",
    "v_star",
    "final_avg",
    "abs_error",
    "final_s",
    "final_nu_t",
    "explorations",
    "choose_t",
    "choose_e",
    "prepare",
    "exploit_to_k",
    "explore",
    "idle_t",
    "trajectory",
];

/// Per-seed outcome of an agent run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub true_member: usize,
    pub horizon: u64,
    pub v_star: f64,
    pub final_avg: f64,
    pub abs_error: f64,
    pub final_s: u32,
    pub final_nu_t: Option<usize>,
    /// Number of exploration preparations.
    pub explorations: usize,
    pub phases: BTreeMap<Phase, u64>,
    pub trajectory: PathBuf,
}

pub fn trajectory_file_name(seed: u64) -> String {
    format!("trajectory_seed{seed}.csv")
}

/// Writes the trajectory CSV. Identical trajectories give identical bytes.
pub fn write_trajectory<W: io::Write>(
    traj: &Trajectory,
    action_names: &[String],
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for r in &traj.records {
        w.write_record([
            r.step.to_string(),
            r.phase.as_str().to_string(),
            r.nu_t.to_string(),
            r.nu_e.map_or_else(|| "-1".to_string(), |e| e.to_string()),
            r.s.to_string(),
            action_names[r.action].clone(),
            r.reward.to_string(),
            r.running_avg.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the agent for one seed and writes `trajectory_seed{seed}.csv` into `out_dir`.
///
/// The configuration is fully validated before anything is simulated or written.
pub fn run_experiment(
    config: &ExperimentConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<RunSummary, HarnessError> {
    let class = config.build_class()?;
    let truth = class.member(config.true_member).clone();
    let mut agent = Agent::new(class, config.agent_config())?;
    let mut rng = seeded(seed);
    let traj = run_agent(&mut agent, &truth, config.horizon, &mut rng)?;

    fs::create_dir_all(out_dir).map_err(|e| output_error(out_dir)(e.to_string()))?;
    let path = out_dir.join(trajectory_file_name(seed));
    let file = fs::File::create(&path).map_err(|e| output_error(&path)(e.to_string()))?;
    write_trajectory(&traj, truth.model.action_names(), BufWriter::new(file))
        .map_err(|e| output_error(&path)(e.to_string()))?;

    let v_star = truth.optimal_value();
    let final_avg = traj.final_average();
    Ok(RunSummary {
        seed,
        true_member: config.true_member,
        horizon: config.horizon,
        v_star,
        final_avg,
        abs_error: (final_avg - v_star).abs(),
        final_s: agent.s(),
        final_nu_t: agent.nu_t(),
        explorations: traj.horizons.len(),
        phases: traj.phase_counts(),
        trajectory: path,
    })
}

/// Runs every seed in parallel, then appends one row per seed to `runs.csv`.
pub fn run_experiments(
    config: &ExperimentConfig,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<RunSummary>, HarnessError> {
    // fail fast, before any worker starts
    config.build_class()?;
    let summaries = seeds
        .par_iter()
        .map(|&seed| run_experiment(config, seed, out_dir))
        .collect::<Result<Vec<_>, _>>()?;
    append_run_index(&summaries, out_dir)?;
    Ok(summaries)
}

fn append_run_index(summaries: &[RunSummary], out_dir: &Path) -> Result<(), HarnessError> {
    let path = out_dir.join(RUN_INDEX);
    let fresh = !path.exists();
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| output_error(&path)(e.to_string()))?;
    let mut w = csv::Writer::from_writer(file);
    let err = |e: csv::Error| output_error(&path)(e.to_string());
    if fresh {
        w.write_record(RUN_INDEX_HEADER).map_err(err)?;
    }
    for s in summaries {
        let mut row = vec![
            s.seed.to_string(),
            s.true_member.to_string(),
            s.horizon.to_string(),
            s.v_star.to_string(),
            s.final_avg.to_string(),
            s.abs_error.to_string(),
            s.final_s.to_string(),
            s.final_nu_t.map_or_else(|| "-1".into(), |v| v.to_string()),
            s.explorations.to_string(),
        ];
        row.extend(Phase::ALL.iter().map(|p| s.phases.get(p).copied().unwrap_or(0).to_string()));
        row.push(
            s.trajectory
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| output_error(&path)(e.to_string()))
}
