//! Sampled certification of declared value-stability metadata.
//!
//! For each cell `(k, n, ε)` the certifier drives the environment through a
//! `k - 1` step adversarial prefix, hands control to the declared recovery
//! policy for steps `k..=k+n`, and counts how often the recovery loss against
//! the declared reference rewards exceeds `d(k, ε) + nε`. The observed
//! frequency is compared with `φ(n, ε)` plus a 3σ binomial slack.
//!
//! Histories are sampled, not enumerated, so a passing report is evidence,
//! not proof. A failing report cannot tell an environment that is not
//! value-stable apart from a recovery factory that is merely suboptimal.

use std::fmt::Write as _;
use std::io;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::environments::StableEnvironment;
use crate::interaction::{
    derive_seed, reward_to_f64, seeded, Action, History, InteractionError, Policy, RandomSource,
    Simulator,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("environment {0} declares no recovery-policy factory")]
    MissingRecovery(String),
    #[error("environment {0} declares no worst-case adversary")]
    MissingWorstCase(String),
    #[error("certification grid is empty")]
    EmptyGrid,
    #[error("at least one trial per cell is required")]
    NoTrials,
    #[error("at least one adversary is required")]
    NoAdversaries,
    #[error("cell k = 0: the recovery window starts at step 1 or later")]
    ZeroK,
    #[error(transparent)]
    Interaction(#[from] InteractionError),
}

/// Generator of the history `z_{<k}` handed to the recovery policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Adversary {
    /// Independent uniform actions.
    UniformRandom,
    /// The environment's declared worst-case hook.
    WorstDeclared,
    /// A fixed action script (its last action repeats).
    Scripted(Vec<Action>),
}

impl Adversary {
    pub fn name(&self) -> &'static str {
        match self {
            Adversary::UniformRandom => "uniform",
            Adversary::WorstDeclared => "worst",
            Adversary::Scripted(_) => "scripted",
        }
    }

    /// Parses `uniform` or `worst`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(Adversary::UniformRandom),
            "worst" => Some(Adversary::WorstDeclared),
            _ => None,
        }
    }

    fn policy(
        &self,
        env: &StableEnvironment,
        rng: &mut RandomSource,
    ) -> Result<Box<dyn Policy>, CertifyError> {
        Ok(match self {
            Adversary::UniformRandom => Box::new(UniformPolicy {
                actions: env.model.action_count(),
                rng: seeded(rng.random()),
            }),
            Adversary::WorstDeclared => env
                .worst_case
                .as_ref()
                .ok_or_else(|| CertifyError::MissingWorstCase(env.name().to_string()))?
                .adversary(rng),
            Adversary::Scripted(actions) => {
                if actions.is_empty() {
                    return Err(InteractionError::Argument("empty adversary script".into()).into());
                }
                Box::new(crate::environments::ScriptedPolicy::new(actions.clone()))
            }
        })
    }
}

struct UniformPolicy {
    actions: usize,
    rng: RandomSource,
}

impl Policy for UniformPolicy {
    fn act(&mut self, _history: &History) -> Action {
        Action(self.rng.random_range(0..self.actions))
    }
}

/// Cartesian product of prefix lengths, window lengths and tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificationGrid {
    pub ks: Vec<u64>,
    pub ns: Vec<u64>,
    pub epsilons: Vec<f64>,
}

impl CertificationGrid {
    pub fn new(ks: Vec<u64>, ns: Vec<u64>, epsilons: Vec<f64>) -> Self {
        Self { ks, ns, epsilons }
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty() || self.ns.is_empty() || self.epsilons.is_empty()
    }
}

/// Outcome of one `(k, n, ε)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub k: u64,
    pub n: u64,
    pub eps: f64,
    pub trials: u32,
    pub violations: u32,
    /// `violations / trials`.
    pub frequency: f64,
    /// Declared `φ(n, ε)`.
    pub phi: f64,
    /// `φ + 3 sqrt(φ(1-φ)/trials)`.
    pub threshold: f64,
    /// `d(k, ε) + nε`.
    pub allowance: f64,
    pub pass: bool,
    /// Losses of the same trials; identical across the `ε` of one `(k, n)`.
    pub loss: LossSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    pub environment: String,
    pub adversaries: Vec<String>,
    pub seed: u64,
    pub cells: Vec<CellResult>,
}

pub const CSV_HEADER: [&str; 15] = [
    "k",
    "n",
    "epsilon",
    "trials",
    "violations",
    "frequency",
    "phi",
    "threshold",
    "allowance",
    "verdict",
    "loss_mean",
    "loss_p50",
    "loss_p90",
    "loss_p99",
    "loss_max",
];

impl CertificationReport {
    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass)
    }

    pub fn cell(&self, k: u64, n: u64, eps: f64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.k == k && c.n == n && c.eps == eps)
    }

    /// One row per cell.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for c in &self.cells {
            w.write_record([
                c.k.to_string(),
                c.n.to_string(),
                c.eps.to_string(),
                c.trials.to_string(),
                c.violations.to_string(),
                c.frequency.to_string(),
                c.phi.to_string(),
                c.threshold.to_string(),
                c.allowance.to_string(),
                if c.pass { "pass" } else { "fail" }.to_string(),
                c.loss.mean.to_string(),
                c.loss.p50.to_string(),
                c.loss.p90.to_string(),
                c.loss.p99.to_string(),
                c.loss.max.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Human-readable summary block.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let failed = self.cells.iter().filter(|c| !c.pass).count();
        let _ = writeln!(s, "sampled certification of {}", self.environment);
        let _ = writeln!(
            s,
            "  adversaries: {}; seed {}",
            self.adversaries.join(", "),
            self.seed
        );
        for c in &self.cells {
            let _ = writeln!(
                s,
                "  k={:<8} n={:<8} eps={:<6} violations {}/{} (freq {:.4}, phi {:.4}, threshold {:.4}) loss p99 {:.3} vs allowance {:.3}  {}",
                c.k,
                c.n,
                c.eps,
                c.violations,
                c.trials,
                c.frequency,
                c.phi,
                c.threshold,
                c.loss.p99,
                c.allowance,
                if c.pass { "pass" } else { "FAIL" }
            );
        }
        let _ = writeln!(
            s,
            "  {} of {} cells pass",
            self.cells.len() - failed,
            self.cells.len()
        );
        let _ = writeln!(
            s,
            "  note: prefixes are sampled, not exhaustive; a failing cell may reflect a \
             suboptimal recovery factory rather than an environment that is not value-stable"
        );
        s
    }
}

/// Mean, nearest-rank quantiles and maximum of a loss sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSummary {
    pub trials: usize,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl LossSummary {
    pub fn from_samples(samples: &[f64]) -> Self {
        assert!(!samples.is_empty(), "loss summary of an empty sample");
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let rank = |q: f64| sorted[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
        Self {
            trials: n,
            mean: sorted.iter().sum::<f64>() / n as f64,
            p50: rank(0.5),
            p90: rank(0.9),
            p99: rank(0.99),
            max: sorted[n - 1],
        }
    }
}

/// Binomial 3σ slack around `φ`.
pub fn verdict_threshold(phi: f64, trials: u32) -> f64 {
    phi + 3.0 * (phi * (1.0 - phi) / trials as f64).sqrt()
}

/// Recovery loss `r^ν_{k..k+n} - r^{p}_{k..k+n}` of one trial whose prefix
/// (`k - 1` steps) is generated by `prefix`.
fn recovery_loss(
    env: &StableEnvironment,
    prefix: &mut dyn Policy,
    k: u64,
    n: u64,
    rng: &mut RandomSource,
) -> Result<f64, CertifyError> {
    let mut sim = Simulator::new(env.model.clone());
    sim.run(prefix, (k - 1) as usize, rng)?;
    let mut recovery = env
        .metadata
        .recovery_policy(sim.history())
        .ok_or_else(|| CertifyError::MissingRecovery(env.name().to_string()))?;
    let mut realized = 0.0;
    for _ in 0..=n {
        let (_, percept) = sim.step(recovery.as_mut(), rng)?;
        realized += reward_to_f64(percept.reward);
    }
    Ok(env.metadata.reference.sum(k, k + n) - realized)
}

fn trial_seed(seed: u64, k: u64, n: u64, trial: u64) -> u64 {
    derive_seed(derive_seed(derive_seed(seed, k), n), trial)
}

/// Estimates violation frequencies on every cell of `grid`.
///
/// Trial `t` of a cell uses `adversaries[t % len]`. Trial seeds depend on
/// `(seed, k, n, t)` only, so every `ε` of a `(k, n)` pair is judged on the
/// same sampled losses.
pub fn certify_value_stability(
    env: &StableEnvironment,
    grid: &CertificationGrid,
    trials: u32,
    adversaries: &[Adversary],
    seed: u64,
) -> Result<CertificationReport, CertifyError> {
    if grid.is_empty() {
        return Err(CertifyError::EmptyGrid);
    }
    if trials == 0 {
        return Err(CertifyError::NoTrials);
    }
    if adversaries.is_empty() {
        return Err(CertifyError::NoAdversaries);
    }
    if grid.ks.contains(&0) {
        return Err(CertifyError::ZeroK);
    }
    if env.metadata.recovery.is_none() {
        return Err(CertifyError::MissingRecovery(env.name().to_string()));
    }
    if adversaries.contains(&Adversary::WorstDeclared) && env.worst_case.is_none() {
        return Err(CertifyError::MissingWorstCase(env.name().to_string()));
    }

    let pairs: Vec<(u64, u64)> = grid
        .ks
        .iter()
        .flat_map(|&k| grid.ns.iter().map(move |&n| (k, n)))
        .collect();
    let losses: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(k, n)| {
            (0..trials as u64)
                .map(|t| {
                    let mut rng = seeded(trial_seed(seed, k, n, t));
                    let adversary = &adversaries[t as usize % adversaries.len()];
                    let mut prefix = adversary.policy(env, &mut rng)?;
                    recovery_loss(env, prefix.as_mut(), k, n, &mut rng)
                })
                .collect::<Result<Vec<f64>, CertifyError>>()
        })
        .collect::<Result<_, _>>()?;

    let md = &env.metadata;
    let mut cells = Vec::with_capacity(pairs.len() * grid.epsilons.len());
    for (&(k, n), sample) in pairs.iter().zip(&losses) {
        let loss = LossSummary::from_samples(sample);
        for &eps in &grid.epsilons {
            let allowance = md.d(k, eps) + n as f64 * eps;
            let violations = sample.iter().filter(|&&l| l > allowance).count() as u32;
            let frequency = violations as f64 / trials as f64;
            let phi = md.phi(n, eps);
            let threshold = verdict_threshold(phi, trials);
            cells.push(CellResult {
                k,
                n,
                eps,
                trials,
                violations,
                frequency,
                phi,
                threshold,
                allowance,
                pass: frequency <= threshold,
                loss,
            });
        }
    }
    Ok(CertificationReport {
        environment: env.name().to_string(),
        adversaries: adversaries.iter().map(|a| a.name().to_string()).collect(),
        seed,
        cells,
    })
}

/// Loss distribution of the recovery policy after a fixed action prefix.
///
/// The prefix actions are replayed in every trial; its percepts are
/// resampled. The recovery window is steps `k..=k+n` with `k = prefix.len() + 1`.
pub fn estimate_recovery_loss(
    env: &StableEnvironment,
    prefix: &[Action],
    n: u64,
    trials: u32,
    seed: u64,
) -> Result<LossSummary, CertifyError> {
    if trials == 0 {
        return Err(CertifyError::NoTrials);
    }
    let k = prefix.len() as u64 + 1;
    let samples = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeded(trial_seed(seed, k, n, t));
            let mut script = FixedPrefix(prefix.to_vec());
            recovery_loss(env, &mut script, k, n, &mut rng)
        })
        .collect::<Result<Vec<f64>, CertifyError>>()?;
    Ok(LossSummary::from_samples(&samples))
}

// Replays exactly the given actions; only ever asked for `len` steps.
struct FixedPrefix(Vec<Action>);

impl Policy for FixedPrefix {
    fn act(&mut self, history: &History) -> Action {
        self.0[history.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{
        bandit_tower, mdp_environment, passive_environment, trap_environment, DownRule,
        LossAllowance, PassiveSource,
    };
    use crate::interaction::reward_from_f64;
    use crate::mdp::FiniteMdp;

    fn alternating() -> StableEnvironment {
        passive_environment(
            "alt",
            PassiveSource::Periodic {
                prefix: vec![],
                cycle: vec![0, 1],
            },
        )
        .unwrap()
    }

    fn tower() -> StableEnvironment {
        bandit_tower("tower", vec![0.1, 0.3, 0.5, 0.98, 0.6], DownRule::ToBottom).unwrap()
    }

    fn both() -> Vec<Adversary> {
        vec![Adversary::UniformRandom, Adversary::WorstDeclared]
    }

    #[test]
    fn quantiles_are_nearest_rank() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        let q = LossSummary::from_samples(&s);
        assert_eq!((q.p50, q.p90, q.p99, q.max), (50.0, 90.0, 99.0, 100.0));
        assert!((q.mean - 50.5).abs() < 1e-12);
        let one = LossSummary::from_samples(&[3.0]);
        assert_eq!((one.p50, one.p99, one.max), (3.0, 3.0, 3.0));
    }

    #[test]
    fn threshold_is_three_sigma() {
        assert_eq!(verdict_threshold(0.0, 10), 0.0);
        let t = verdict_threshold(0.1, 100);
        assert!((t - (0.1 + 3.0 * 0.03)).abs() < 1e-12);
    }

    #[test]
    fn passive_deterministic_has_no_violations() {
        let grid = CertificationGrid::new(vec![10, 57], vec![50, 200], vec![0.0, 0.01]);
        let r = certify_value_stability(&alternating(), &grid, 40, &both(), 3).unwrap();
        assert_eq!(r.cells.len(), 8);
        for c in &r.cells {
            assert_eq!(c.violations, 0, "{c:?}");
            assert!(c.loss.max <= 1.0);
            assert!(c.pass);
        }
    }

    #[test]
    fn trap_declared_allowance_holds() {
        for s in [0, 2, 5] {
            let env = trap_environment(s);
            let grid = CertificationGrid::new(vec![1, 4, 30], vec![1, 10, 100], vec![0.0, 0.1]);
            let r = certify_value_stability(&env, &grid, 20, &both(), 11).unwrap();
            assert!(r.all_pass(), "trap {s}: {}", r.summary());
        }
    }

    #[test]
    fn trap_linear_allowance_is_tight() {
        // after an all-a prefix of k-1 steps the loss is exactly 2(k-1) for k-1 >= s
        let env = trap_environment(2);
        let k = 30;
        let loss =
            estimate_recovery_loss(&env, &vec![Action(0); (k - 1) as usize], 100, 3, 1).unwrap();
        assert_eq!(loss.max, 2.0 * (k - 1) as f64);
        assert_eq!(loss.p50, loss.max);
    }

    #[test]
    fn one_state_mdp_never_loses() {
        let r = |x: f64| reward_from_f64(x).unwrap();
        let mdp = FiniteMdp::new(
            vec![vec![vec![1.0], vec![1.0]]],
            vec![vec![vec![r(0.7)], vec![r(0.2)]]],
        )
        .unwrap();
        let env = mdp_environment("one", mdp, 0, None).unwrap();
        let loss = estimate_recovery_loss(&env, &[Action(1); 20], 500, 5, 0).unwrap();
        assert!(loss.max.abs() < 1e-9, "{loss:?}");
    }

    #[test]
    fn larger_epsilon_never_adds_violations() {
        let env = tower();
        let eps = vec![0.0, 0.001, 0.005, 0.01, 0.05];
        let grid = CertificationGrid::new(vec![50, 400], vec![20, 200], eps.clone());
        let r = certify_value_stability(&env, &grid, 60, &both(), 5).unwrap();
        for pair in r.cells.chunks(eps.len()) {
            for w in pair.windows(2) {
                assert!(w[1].violations <= w[0].violations, "{:?}", pair);
            }
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let env = tower();
        let grid = CertificationGrid::new(vec![100], vec![300], vec![0.01]);
        let a = certify_value_stability(&env, &grid, 30, &both(), 9).unwrap();
        let b = certify_value_stability(&env, &grid, 30, &both(), 9).unwrap();
        assert_eq!(a, b);
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn broken_metadata_is_refuted() {
        let mut env = tower();
        env.metadata.loss_allowance = LossAllowance::Constant(0.0);
        let grid = CertificationGrid::new(vec![900], vec![100], vec![0.01]);
        // φ(100, 0.01) ≈ 0.98, so refutation needs enough trials for the 3σ band to stay below 1
        let r = certify_value_stability(&env, &grid, 500, &[Adversary::WorstDeclared], 1).unwrap();
        let c = &r.cells[0];
        assert!(c.frequency > c.threshold, "{c:?}");
        assert!(!c.pass);
    }

    #[test]
    fn configuration_errors() {
        let mut env = alternating();
        let grid = CertificationGrid::new(vec![5], vec![5], vec![0.1]);
        assert_eq!(
            certify_value_stability(&env, &CertificationGrid::new(vec![], vec![1], vec![0.1]), 1, &both(), 0),
            Err(CertifyError::EmptyGrid)
        );
        assert_eq!(certify_value_stability(&env, &grid, 0, &both(), 0), Err(CertifyError::NoTrials));
        assert_eq!(certify_value_stability(&env, &grid, 1, &[], 0), Err(CertifyError::NoAdversaries));
        env.worst_case = None;
        assert!(matches!(
            certify_value_stability(&env, &grid, 1, &both(), 0),
            Err(CertifyError::MissingWorstCase(_))
        ));
        env.metadata.recovery = None;
        assert!(matches!(
            certify_value_stability(&env, &grid, 1, &[Adversary::UniformRandom], 0),
            Err(CertifyError::MissingRecovery(_))
        ));
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let grid = CertificationGrid::new(vec![5, 6], vec![5], vec![0.1, 0.2, 0.3]);
        let r = certify_value_stability(&alternating(), &grid, 3, &both(), 0).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert!(r.summary().contains("sampled certification"));
    }
}
