use std::fmt::Write as _;

use crate::environments::trap_environment;
use crate::interaction::{seeded, Action, History, Policy, Simulator};

const A: Action = Action(0);
const B: Action = Action(1);

/// Length of the `j`-th a-block.
pub const A_BLOCK: u64 = 10;

/// The probe policy `p_S`: for `j = 1..=S`, an a-block of `10 j` steps and
/// then a b-run one longer than every a played so far; b forever after.
///
/// On `ν_s` with `1 <= s <= S` the last b-run unlocks reward 2 for good.
/// On `ν_0` every b pays 0, so each probe drags the running average below 1/2.
#[derive(Debug, Clone)]
pub struct ProbePolicy {
    // cumulative end step (1-based, inclusive) of each segment and its action
    segments: Vec<(u64, Action)>,
}

impl ProbePolicy {
    pub fn new(s: u64) -> Self {
        let mut segments = Vec::new();
        let (mut t, mut a_total) = (0u64, 0u64);
        for j in 1..=s {
            a_total += A_BLOCK * j;
            t += A_BLOCK * j;
            segments.push((t, A));
            t += a_total + 1;
            segments.push((t, B));
        }
        Self { segments }
    }

    /// Step at which the `j`-th b-run (1-based) ends.
    pub fn probe_end(&self, j: usize) -> Option<u64> {
        self.segments.get(2 * j - 1).map(|s| s.0)
    }

    fn action_at(&self, step: u64) -> Action {
        self.segments
            .iter()
            .find(|(end, _)| step <= *end)
            .map_or(B, |(_, a)| *a)
    }
}

impl Policy for ProbePolicy {
    fn act(&mut self, history: &History) -> Action {
        self.action_at(history.len() as u64 + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NecessityReport {
    pub s: u64,
    pub horizon: u64,
    /// Running average of `p_S` on `ν_0` at the end of each probe.
    pub probe_end_averages: Vec<(u64, f64)>,
    /// Minimum running average of `p_S` on `ν_0` from the end of the first probe on.
    pub min_after_first_probe: f64,
    pub min_step: u64,
    pub final_average_probe: f64,
    /// Min and max running average of always-a on `ν_0`.
    pub always_a_range: (f64, f64),
    /// Final running average of `p_S` on `ν_1, ..., ν_S`.
    pub probe_on_members: Vec<f64>,
}

pub const DIP_BOUND: f64 = 0.55;

impl NecessityReport {
    pub fn dips(&self) -> bool {
        self.min_after_first_probe <= DIP_BOUND
    }

    pub fn always_a_is_one(&self) -> bool {
        self.always_a_range == (1.0, 1.0)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "necessity demo: S = {}, horizon {}", self.s, self.horizon);
        for (j, (step, avg)) in self.probe_end_averages.iter().enumerate() {
            let _ = writeln!(s, "  probe {} ends at step {step}: running average {avg:.4}", j + 1);
        }
        let _ = writeln!(
            s,
            "  probe policy on trap_0: min running average {:.4} at step {} ({} {DIP_BOUND}), final {:.4}",
            self.min_after_first_probe,
            self.min_step,
            if self.dips() { "<=" } else { ">" },
            self.final_average_probe
        );
        let _ = writeln!(
            s,
            "  always-a on trap_0: running average in [{}, {}]",
            self.always_a_range.0, self.always_a_range.1
        );
        for (i, v) in self.probe_on_members.iter().enumerate() {
            let _ = writeln!(s, "  probe policy on trap_{}: final average {v:.4}", i + 1);
        }
        s
    }
}

fn running_averages(s: u64, policy: &mut dyn Policy, horizon: u64, seed: u64) -> Vec<f64> {
    let env = trap_environment(s);
    let mut sim = Simulator::new(env.model);
    let mut rng = seeded(seed);
    let mut total = 0.0;
    let mut out = Vec::with_capacity(horizon as usize);
    for t in 1..=horizon {
        let (_, percept) = sim.step(policy, &mut rng).expect("trap actions are valid");
        total += crate::interaction::reward_to_f64(percept.reward);
        out.push(total / t as f64);
    }
    out
}

/// Runs `p_S` and always-a on the trap family; the whole demo is deterministic.
pub fn demo_necessity(s: u64, horizon: u64, seed: u64) -> NecessityReport {
    assert!(s >= 1, "the probe policy needs S >= 1");
    let probe = ProbePolicy::new(s);
    let on_zero = running_averages(0, &mut probe.clone(), horizon, seed);
    let probe_end_averages: Vec<(u64, f64)> = (1..=s as usize)
        .filter_map(|j| probe.probe_end(j))
        .filter(|&t| t <= horizon)
        .map(|t| (t, on_zero[(t - 1) as usize]))
        .collect();
    let first = probe.probe_end(1).unwrap_or(1).min(horizon);
    let (min_step, min) = on_zero[(first - 1) as usize..]
        .iter()
        .enumerate()
        .map(|(i, v)| (first + i as u64, *v))
        .fold((first, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let always = running_averages(0, &mut crate::environments::ConstantPolicy(A), horizon, seed);
    let lo = always.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = always.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let probe_on_members = (1..=s)
        .map(|m| *running_averages(m, &mut probe.clone(), horizon, seed).last().unwrap())
        .collect();
    NecessityReport {
        s,
        horizon,
        probe_end_averages,
        min_after_first_probe: min,
        min_step,
        final_average_probe: *on_zero.last().unwrap(),
        always_a_range: (lo, hi),
        probe_on_members,
    }
}
