use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::agent::{AgentConfig, ClassSpec};
use crate::certify::{Adversary, CertificationGrid};
use crate::environments::{
    bandit_tower, hidden_chain_environment, mdp_environment, passive_environment,
    trap_environment, DownRule, EpsilonSchedule, PassiveSource, StableEnvironment,
};
use crate::interaction::{reward_from_f64, Reward};
use crate::mdp::FiniteMdp;

use super::HarnessError;

/// Only schema version understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// A complete experiment description, read from TOML.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Index into `members` of the environment actually simulated.
    #[serde(default)]
    pub true_member: usize,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub agent: AgentSection,
    pub members: Vec<MemberSpec>,
    #[serde(default)]
    pub certify: Option<CertifySection>,
}

fn default_horizon() -> u64 {
    10_000
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    /// Overrides every member's `ε0`.
    pub epsilon0: Option<f64>,
    pub k_cap: Option<u64>,
    pub m_cap: Option<u64>,
    /// Prior weights; `2^{-(i+1)}` normalized when absent.
    pub weights: Option<Vec<f64>>,
}

/// One class member. `family` selects the constructor.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum MemberSpec {
    Mdp {
        name: Option<String>,
        #[serde(default)]
        initial_state: usize,
        /// `transition[s][a][s']`.
        transition: Vec<Vec<Vec<f64>>>,
        /// `reward[s][a]` or `reward[s][a][s']`.
        reward: RewardTable,
        action_names: Option<Vec<String>>,
    },
    Bandit {
        name: Option<String>,
        arms: Vec<f64>,
        /// `d` drops by this many arms; to the bottom arm when absent.
        down_by: Option<usize>,
    },
    Trap {
        s: u64,
    },
    Passive {
        name: Option<String>,
        /// Deterministic source `prefix ++ cycle ++ cycle ++ ...`.
        #[serde(default)]
        prefix: Vec<usize>,
        cycle: Option<Vec<usize>>,
        /// I.i.d. binary source with `P(1) = p`.
        p: Option<f64>,
    },
    Pomdp {
        name: Option<String>,
        transition: Vec<Vec<f64>>,
        emission: Vec<Vec<f64>>,
        /// `reward[s][a]`.
        reward: Vec<Vec<f64>>,
        initial: Vec<f64>,
    },
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum RewardTable {
    StateAction(Vec<Vec<f64>>),
    Transition(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    /// Member to certify; all members when absent.
    pub member: Option<usize>,
    pub ks: Vec<u64>,
    pub ns: Vec<u64>,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: u32,
    #[serde(default = "default_adversaries")]
    pub adversaries: Vec<String>,
}

fn default_trials() -> u32 {
    200
}

fn default_adversaries() -> Vec<String> {
    vec!["uniform".into(), "worst".into()]
}

impl CertifySection {
    pub fn grid(&self) -> CertificationGrid {
        CertificationGrid::new(self.ks.clone(), self.ns.clone(), self.epsilons.clone())
    }

    pub fn adversaries(&self) -> Result<Vec<Adversary>, HarnessError> {
        self.adversaries
            .iter()
            .map(|a| {
                Adversary::parse(a).ok_or_else(|| {
                    HarnessError::Invalid(vec![format!(
                        "certify.adversaries: unknown adversary {a:?} (expected \"uniform\" or \"worst\")"
                    )])
                })
            })
            .collect()
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse {
            path: None,
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| HarnessError::Parse {
            path: Some(path.to_path_buf()),
            message: e.to_string(),
        })
    }

    pub fn agent_config(&self) -> AgentConfig {
        let d = AgentConfig::default();
        AgentConfig {
            k_cap: self.agent.k_cap.unwrap_or(d.k_cap),
            m_cap: self.agent.m_cap.unwrap_or(d.m_cap),
        }
    }

    /// Builds every member, collecting all problems before failing.
    pub fn build_members(&self) -> Result<Vec<StableEnvironment>, HarnessError> {
        let mut problems = Vec::new();
        let mut members = Vec::with_capacity(self.members.len());
        if let Some(e0) = self.agent.epsilon0 {
            if !(e0 > 0.0 && e0.is_finite()) {
                problems.push(format!("agent.epsilon0: must be positive, got {e0}"));
            }
        }
        for (i, spec) in self.members.iter().enumerate() {
            match spec.build(i) {
                Ok(mut env) => {
                    if let Some(e0) = self.agent.epsilon0.filter(|e| *e > 0.0) {
                        env.metadata.epsilon_schedule = EpsilonSchedule::with_eps0(e0);
                    }
                    members.push(env);
                }
                Err(msg) => problems.push(format!("members[{i}]: {msg}")),
            }
        }
        if problems.is_empty() {
            Ok(members)
        } else {
            Err(HarnessError::Invalid(problems))
        }
    }

    /// Full validation for an agent run: members, class and run parameters.
    pub fn build_class(&self) -> Result<ClassSpec, HarnessError> {
        let mut problems = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            problems.push(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        if self.members.is_empty() {
            problems.push("members: the class is empty".into());
        } else if self.true_member >= self.members.len() {
            problems.push(format!(
                "true_member: {} is out of range for {} members",
                self.true_member,
                self.members.len()
            ));
        }
        if self.horizon == 0 {
            problems.push("horizon: must be at least 1".into());
        }
        if self.seeds.is_empty() {
            problems.push("seeds: at least one seed is required".into());
        }
        let members = match self.build_members() {
            Ok(m) => Some(m),
            Err(HarnessError::Invalid(p)) => {
                problems.extend(p);
                None
            }
            Err(e) => return Err(e),
        };
        if !problems.is_empty() {
            return Err(HarnessError::Invalid(problems));
        }
        ClassSpec::new(members.expect("no problems"), self.agent.weights.clone())
            .map_err(|e| HarnessError::Invalid(vec![format!("class: {e}")]))
    }
}

fn reward(x: f64) -> Result<Reward, String> {
    reward_from_f64(x).ok_or_else(|| format!("reward {x} is not a finite number"))
}

fn rewards_2d(rows: &[Vec<f64>]) -> Result<Vec<Vec<Reward>>, String> {
    rows.iter()
        .map(|r| r.iter().map(|&x| reward(x)).collect())
        .collect()
}

impl MemberSpec {
    pub fn family(&self) -> &'static str {
        match self {
            MemberSpec::Mdp { .. } => "mdp",
            MemberSpec::Bandit { .. } => "bandit",
            MemberSpec::Trap { .. } => "trap",
            MemberSpec::Passive { .. } => "passive",
            MemberSpec::Pomdp { .. } => "pomdp",
        }
    }

    /// The transition and reward tables of an `mdp` member.
    pub fn finite_mdp(&self) -> Option<Result<FiniteMdp, String>> {
        let MemberSpec::Mdp {
            transition, reward, ..
        } = self
        else {
            return None;
        };
        let built = match reward {
            RewardTable::StateAction(r) => rewards_2d(r).and_then(|r| {
                FiniteMdp::with_state_action_rewards(transition.clone(), r).map_err(|e| e.to_string())
            }),
            RewardTable::Transition(r) => r
                .iter()
                .map(|s| rewards_2d(s))
                .collect::<Result<_, _>>()
                .and_then(|r| FiniteMdp::new(transition.clone(), r).map_err(|e| e.to_string())),
        };
        Some(built)
    }

    pub fn build(&self, index: usize) -> Result<StableEnvironment, String> {
        let default_name = || format!("{}{index}", self.family());
        match self {
            MemberSpec::Mdp {
                name,
                initial_state,
                action_names,
                ..
            } => {
                let mdp = self.finite_mdp().expect("mdp member")?;
                mdp_environment(
                    name.clone().unwrap_or_else(default_name),
                    mdp,
                    *initial_state,
                    action_names.clone(),
                )
                .map_err(|e| e.to_string())
            }
            MemberSpec::Bandit { name, arms, down_by } => {
                let down = match down_by {
                    None => DownRule::ToBottom,
                    Some(j) => DownRule::Fixed(*j),
                };
                bandit_tower(name.clone().unwrap_or_else(default_name), arms.clone(), down)
                    .map_err(|e| e.to_string())
            }
            MemberSpec::Trap { s } => Ok(trap_environment(*s)),
            MemberSpec::Passive {
                name,
                prefix,
                cycle,
                p,
            } => {
                let source = match (cycle, p) {
                    (Some(cycle), None) => PassiveSource::Periodic {
                        prefix: prefix.clone(),
                        cycle: cycle.clone(),
                    },
                    (None, Some(p)) if prefix.is_empty() => PassiveSource::Bernoulli { p: *p },
                    _ => {
                        return Err(
                            "passive source needs exactly one of `cycle` (with optional `prefix`) or `p`"
                                .into(),
                        )
                    }
                };
                passive_environment(name.clone().unwrap_or_else(default_name), source)
                    .map_err(|e| e.to_string())
            }
            MemberSpec::Pomdp {
                name,
                transition,
                emission,
                reward,
                initial,
            } => hidden_chain_environment(
                name.clone().unwrap_or_else(default_name),
                transition.clone(),
                emission.clone(),
                rewards_2d(reward)?,
                initial.clone(),
            )
            .map_err(|e| e.to_string()),
        }
    }
}
