use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::certify::{certify_value_stability, Adversary, CertificationGrid};
use crate::environments::{passive_environment, PassiveSource, StableEnvironment};
use crate::interaction::reward_from_f64;
use crate::mdp::{solve_average_reward, FiniteMdp};

use super::{demo_necessity, run_experiments, ExperimentConfig, HarnessError, MemberSpec};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SELFOPT_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "selfopt-out";

/// Self-optimizing agents for classes of value-stable environments.
#[derive(Debug, Parser)]
#[command(name = "selfopt", version)]
pub struct Cli {
    /// Seed; overrides the config's seed list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; beats SELFOPT_OUT_DIR and the config's output_dir.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Number of interaction steps; overrides the config.
    #[arg(long, global = true)]
    pub horizon: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the agent on the config's true member and write trajectories.
    Run,
    /// Print the optimal gain, bias and policy of each MDP member.
    Solve,
    /// Sampled certification of each member's declared metadata.
    Certify {
        /// Trials per cell; overrides the config.
        #[arg(long)]
        trials: Option<u32>,
    },
    /// Run the probe policy and always-a on the trap family.
    DemoNecessity {
        /// Number of probe blocks S.
        #[arg(long, default_value_t = 3)]
        s: u64,
    },
}

/// Parses `args` (including the program name), runs the command and returns the exit status.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match execute(&cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            1
        }
    }
}

fn load(cli: &Cli) -> Result<Option<ExperimentConfig>, HarnessError> {
    cli.config.as_deref().map(ExperimentConfig::load).transpose()
}

fn out_dir(cli: &Cli, config: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| config.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let stdout_err = |e: io::Error| HarnessError::Output {
        path: PathBuf::from("<stdout>"),
        message: e.to_string(),
    };
    match &cli.command {
        Command::Run => {
            let path = cli.config.as_deref().ok_or_else(|| {
                HarnessError::Invalid(vec!["run needs --config <FILE>".into()])
            })?;
            let mut config = ExperimentConfig::load(path)?;
            if let Some(h) = cli.horizon {
                config.horizon = h;
            }
            if let Some(s) = cli.seed {
                config.seeds = vec![s];
            }
            let dir = out_dir(cli, Some(&config));
            let seeds = config.seeds.clone();
            let runs = run_experiments(&config, &seeds, &dir)?;
            for r in &runs {
                writeln!(
                    out,
                    "seed {}: final running average {:.6} (V* {:.6}, |error| {:.6}), s = {}, nu_t = {}, {} explorations -> {}",
                    r.seed,
                    r.final_avg,
                    r.v_star,
                    r.abs_error,
                    r.final_s,
                    r.final_nu_t.map_or_else(|| "-".into(), |v| v.to_string()),
                    r.explorations,
                    r.trajectory.display()
                )
                .map_err(stdout_err)?;
            }
            Ok(0)
        }
        Command::Solve => {
            let config = load(cli)?;
            let mdps: Vec<(String, FiniteMdp, Vec<String>)> = match &config {
                Some(c) => {
                    let mut v = Vec::new();
                    for (i, spec) in c.members.iter().enumerate() {
                        if let Some(built) = spec.finite_mdp() {
                            let mdp = built
                                .map_err(|m| HarnessError::Invalid(vec![format!("members[{i}]: {m}")]))?;
                            let (name, names) = match spec {
                                MemberSpec::Mdp {
                                    name, action_names, ..
                                } => (name.clone(), action_names.clone()),
                                _ => unreachable!("finite_mdp is only defined for mdp members"),
                            };
                            let names = names
                                .unwrap_or_else(|| (0..mdp.n_actions()).map(|a| format!("a{a}")).collect());
                            v.push((name.unwrap_or_else(|| format!("mdp{i}")), mdp, names));
                        }
                    }
                    if v.is_empty() {
                        return Err(HarnessError::Invalid(vec![
                            "solve: the config has no mdp members".into(),
                        ]));
                    }
                    v
                }
                None => vec![two_state_example()],
            };
            for (name, mdp, names) in &mdps {
                let sol = solve_average_reward(mdp, 1e-12, 1_000_000)
                    .map_err(|e| HarnessError::Invalid(vec![format!("{name}: {e}")]))?;
                writeln!(out, "{name}: {} states, {} actions", mdp.n_states(), mdp.n_actions())
                    .map_err(stdout_err)?;
                writeln!(out, "gain {}", round_display(sol.gain)).map_err(stdout_err)?;
                writeln!(out, "state,action,bias").map_err(stdout_err)?;
                for (s, (&a, h)) in sol.policy.iter().zip(&sol.bias).enumerate() {
                    writeln!(out, "{s},{},{}", names[a], round_display(*h)).map_err(stdout_err)?;
                }
            }
            Ok(0)
        }
        Command::Certify { trials } => {
            let config = load(cli)?;
            let (envs, grid, mut n_trials, adversaries) = match &config {
                Some(c) => {
                    let members = c.build_members()?;
                    let section = c.certify.clone().ok_or_else(|| {
                        HarnessError::Invalid(vec!["certify: the config has no [certify] section".into()])
                    })?;
                    let envs: Vec<StableEnvironment> = match section.member {
                        Some(i) if i < members.len() => vec![members[i].clone()],
                        Some(i) => {
                            return Err(HarnessError::Invalid(vec![format!(
                                "certify.member: {i} is out of range for {} members",
                                members.len()
                            )]))
                        }
                        None => members,
                    };
                    (envs, section.grid(), section.trials, section.adversaries()?)
                }
                None => (
                    vec![passive_environment(
                        "alternating",
                        PassiveSource::Periodic {
                            prefix: vec![],
                            cycle: vec![0, 1],
                        },
                    )
                    .expect("valid source")],
                    CertificationGrid::new(vec![100, 1000], vec![1000, 10_000], vec![0.01, 0.05]),
                    200,
                    vec![Adversary::UniformRandom, Adversary::WorstDeclared],
                ),
            };
            if let Some(t) = trials {
                n_trials = *t;
            }
            let seed = cli.seed.unwrap_or(0);
            let mut reports = Vec::with_capacity(envs.len());
            for env in &envs {
                reports.push(certify_value_stability(env, &grid, n_trials, &adversaries, seed)?);
            }
            let dir = out_dir(cli, config.as_ref());
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let mut all_pass = true;
            for r in &reports {
                let path = dir.join(format!("certify_{}.csv", r.environment));
                let file = fs::File::create(&path).map_err(io_err(&path))?;
                r.write_csv(io::BufWriter::new(file)).map_err(|e| HarnessError::Output {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                write!(out, "{}", r.summary()).map_err(stdout_err)?;
                writeln!(out, "  report: {}", path.display()).map_err(stdout_err)?;
                all_pass &= r.all_pass();
            }
            Ok(if all_pass { 0 } else { 1 })
        }
        Command::DemoNecessity { s } => {
            if *s == 0 {
                return Err(HarnessError::Invalid(vec!["demo-necessity: --s must be at least 1".into()]));
            }
            let horizon = cli.horizon.unwrap_or(100_000);
            if horizon == 0 {
                return Err(HarnessError::Invalid(vec!["--horizon must be at least 1".into()]));
            }
            let report = demo_necessity(*s, horizon, cli.seed.unwrap_or(0));
            write!(out, "{}", report.summary()).map_err(stdout_err)?;
            Ok(if report.dips() && report.always_a_is_one() { 0 } else { 1 })
        }
    }
}

// Prints solver output without float noise below the solver tolerance.
fn round_display(x: f64) -> f64 {
    let r = (x * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// State 0: `a` stays for reward 1, `b` moves to state 1 for 0; state 1 always returns for 0.
fn two_state_example() -> (String, FiniteMdp, Vec<String>) {
    let r = |x: f64| reward_from_f64(x).expect("finite");
    let mdp = FiniteMdp::with_state_action_rewards(
        vec![
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        ],
        vec![vec![r(1.0), r(0.0)], vec![r(0.0), r(0.0)]],
    )
    .expect("valid example");
    ("two_state".into(), mdp, vec!["a".into(), "b".into()])
}
