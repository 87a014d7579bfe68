use std::fmt;
use std::sync::Arc;

use crate::interaction::{History, Policy};

/// The deterministic sequence `r_1, r_2, ...` that recovery loss is measured against.
pub trait ReferenceRewards: Send + Sync + fmt::Debug {
    /// `r_i`, 1-based.
    fn reward(&self, i: u64) -> f64;

    /// `r_from + ... + r_to`; zero when `from > to`.
    fn sum(&self, from: u64, to: u64) -> f64;
}

/// A reference sequence of the form `prefix ++ cycle ++ cycle ++ ...`.
///
/// Covers every shipped family: constants, "climb then stay" sequences and
/// the settled periodic orbit of a finite Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub struct EventuallyPeriodic {
    prefix: Vec<f64>,
    cycle: Vec<f64>,
    // cumulative sums; index j holds the sum of the first j entries
    prefix_cum: Vec<f64>,
    cycle_cum: Vec<f64>,
}

impl EventuallyPeriodic {
    pub fn new(prefix: Vec<f64>, cycle: Vec<f64>) -> Self {
        assert!(!cycle.is_empty(), "reference cycle must be non-empty");
        let cum = |v: &[f64]| {
            let mut out = Vec::with_capacity(v.len() + 1);
            out.push(0.0);
            let mut acc = 0.0;
            for x in v {
                acc += x;
                out.push(acc);
            }
            out
        };
        Self {
            prefix_cum: cum(&prefix),
            cycle_cum: cum(&cycle),
            prefix,
            cycle,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(Vec::new(), vec![value])
    }

    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    pub fn cycle(&self) -> &[f64] {
        &self.cycle
    }

    /// `r_1 + ... + r_i`.
    pub fn cumulative(&self, i: u64) -> f64 {
        let lp = self.prefix.len() as u64;
        if i <= lp {
            return self.prefix_cum[i as usize];
        }
        let rest = i - lp;
        let p = self.cycle.len() as u64;
        let full = rest / p;
        let partial = (rest % p) as usize;
        self.prefix_cum[lp as usize]
            + full as f64 * self.cycle_cum[p as usize]
            + self.cycle_cum[partial]
    }

    /// `sup_m |Σ_{i≤m} (r_i - value)|`, exact when the cycle averages to `value`.
    pub fn centered_sup(&self, value: f64) -> f64 {
        let horizon = self.prefix.len() + self.cycle.len();
        let mut acc = 0.0f64;
        let mut sup = 0.0f64;
        for i in 1..=horizon as u64 {
            acc += self.reward(i) - value;
            sup = sup.max(acc.abs());
        }
        sup
    }
}

impl ReferenceRewards for EventuallyPeriodic {
    fn reward(&self, i: u64) -> f64 {
        debug_assert!(i >= 1);
        let lp = self.prefix.len() as u64;
        if i <= lp {
            self.prefix[(i - 1) as usize]
        } else {
            self.cycle[((i - lp - 1) % self.cycle.len() as u64) as usize]
        }
    }

    fn sum(&self, from: u64, to: u64) -> f64 {
        if from > to {
            return 0.0;
        }
        self.cumulative(to) - self.cumulative(from.saturating_sub(1))
    }
}

type Curve = Arc<dyn Fn(u64, f64) -> f64 + Send + Sync>;

/// Result of solving `d(m, ε) / m <= ratio` for all large `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inversion {
    /// Holds for every `m >= start`.
    From(u64),
    /// Never holds eventually (`d` is not `o(k)` at this ratio).
    Never,
    /// No closed form; callers fall back to probing.
    Unknown,
}

/// The loss allowance `d(k, ε)`.
#[derive(Clone)]
pub enum LossAllowance {
    Constant(f64),
    /// `offset + scale * sqrt(k)`
    SquareRoot { scale: f64, offset: f64 },
    /// `slope * k`, deliberately not `o(k)`.
    Linear { slope: f64 },
    Custom(Curve),
}

impl fmt::Debug for LossAllowance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::SquareRoot { scale, offset } => write!(f, "SquareRoot({offset} + {scale}·√k)"),
            Self::Linear { slope } => write!(f, "Linear({slope}·k)"),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl LossAllowance {
    pub fn eval(&self, k: u64, eps: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::SquareRoot { scale, offset } => offset + scale * (k as f64).sqrt(),
            Self::Linear { slope } => slope * k as f64,
            Self::Custom(f) => f(k, eps),
        }
    }

    /// Smallest `m0 >= 1` with `d(m, ε) / m <= ratio` for every `m >= m0`.
    pub fn sublinear_start(&self, eps: f64, ratio: f64) -> Inversion {
        if ratio <= 0.0 {
            return Inversion::Never;
        }
        let holds = |m: u64| self.eval(m, eps) <= ratio * m as f64;
        let candidate = match self {
            Self::Constant(c) => (c.max(0.0) / ratio).ceil(),
            Self::SquareRoot { scale, offset } => {
                // offset + s√m <= ρ m  ⇔  √m >= (s + sqrt(s² + 4ρ·offset)) / (2ρ)
                let (s, o) = (scale.max(0.0), offset.max(0.0));
                let root = (s + (s * s + 4.0 * ratio * o).sqrt()) / (2.0 * ratio);
                (root * root).ceil()
            }
            Self::Linear { slope } => {
                return if *slope <= ratio {
                    Inversion::From(1)
                } else {
                    Inversion::Never
                };
            }
            Self::Custom(_) => return Inversion::Unknown,
        };
        if !candidate.is_finite() || candidate > 1e18 {
            return Inversion::Never;
        }
        // d(m)/m is nonincreasing for these forms, so nudge to the exact boundary
        let mut m = (candidate as u64).max(1);
        while !holds(m) {
            m += 1;
        }
        while m > 1 && holds(m - 1) {
            m -= 1;
        }
        Inversion::From(m)
    }
}

/// The violation probability bound `φ(n, ε)`.
#[derive(Clone)]
pub enum ViolationBound {
    Zero,
    /// `min(1, amplitude * exp(-rate * (n ε)² / (n + 1)))`: a Hoeffding-type
    /// bound for a window of `n + 1` bounded increments.
    Exponential { amplitude: f64, rate: f64 },
    Custom(Curve),
}

impl fmt::Debug for ViolationBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Exponential { amplitude, rate } => {
                write!(f, "Exponential({amplitude}·exp(-{rate}(nε)²/(n+1)))")
            }
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ViolationBound {
    pub fn eval(&self, n: u64, eps: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Exponential { amplitude, rate } => {
                let ne = n as f64 * eps;
                (amplitude * (-rate * ne * ne / (n as f64 + 1.0)).exp()).min(1.0)
            }
            Self::Custom(f) => f(n, eps).clamp(0.0, 1.0),
        }
    }

    /// Upper bound on `Σ_n φ(n, ε_n)` along `schedule`, when one is known.
    pub fn series_bound(&self, schedule: &EpsilonSchedule) -> Option<f64> {
        match self {
            Self::Zero => Some(0.0),
            Self::Exponential { amplitude, rate } => {
                // (nε_n)²/(n+1) >= ε0² n^{1-2x} / 2; for x = 1/4 the terms are
                // bounded by A exp(-c √n) with c = rate ε0² / 2, and
                // Σ_{n>=1} exp(-c √n) <= ∫_0^∞ exp(-c √x) dx = 2 / c².
                if (schedule.exponent - 0.25).abs() > 1e-12 {
                    return None;
                }
                let c = rate * schedule.eps0 * schedule.eps0 / 2.0;
                Some(2.0 * amplitude / (c * c))
            }
            Self::Custom(_) => None,
        }
    }
}

/// `ε_n = eps0 · n^{-exponent}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub eps0: f64,
    pub exponent: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            eps0: DEFAULT_EPS0,
            exponent: 0.25,
        }
    }
}

/// Default leading constant of the tolerance schedule.
pub const DEFAULT_EPS0: f64 = 0.5;

impl EpsilonSchedule {
    pub fn with_eps0(eps0: f64) -> Self {
        Self {
            eps0,
            ..Self::default()
        }
    }

    pub fn at(&self, n: u64) -> f64 {
        self.eps0 * (n.max(1) as f64).powf(-self.exponent)
    }
}

/// Builds the recovery policy `p_ν^{z_{<k}}` for a given history.
pub trait RecoveryFactory: Send + Sync + fmt::Debug {
    fn recovery_policy(&self, history: &History) -> Box<dyn Policy>;
}

/// Everything the agent and the certifier need to know about one environment.
#[derive(Clone)]
pub struct ValueStabilityMetadata {
    /// `V*_ν`.
    pub optimal_value: f64,
    pub reference: Arc<dyn ReferenceRewards>,
    /// `sup_m |Σ_{i≤m} (r_i - V*)|`; the running mean of the reference is within
    /// `reference_constant / n` of `V*`.
    pub reference_constant: f64,
    pub loss_allowance: LossAllowance,
    pub violation_bound: ViolationBound,
    pub epsilon_schedule: EpsilonSchedule,
    pub recovery: Option<Arc<dyn RecoveryFactory>>,
}

impl fmt::Debug for ValueStabilityMetadata {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ValueStabilityMetadata")
            .field("optimal_value", &self.optimal_value)
            .field("reference_constant", &self.reference_constant)
            .field("loss_allowance", &self.loss_allowance)
            .field("violation_bound", &self.violation_bound)
            .field("epsilon_schedule", &self.epsilon_schedule)
            .field("recovery", &self.recovery.is_some())
            .finish()
    }
}

impl ValueStabilityMetadata {
    /// `d_ν(k, ε)`.
    pub fn d(&self, k: u64, eps: f64) -> f64 {
        self.loss_allowance.eval(k, eps)
    }

    /// `φ_ν(n, ε)`.
    pub fn phi(&self, n: u64, eps: f64) -> f64 {
        self.violation_bound.eval(n, eps)
    }

    /// `ε_n^ν`.
    pub fn epsilon(&self, n: u64) -> f64 {
        self.epsilon_schedule.at(n)
    }

    /// Declared band for `|(1/n) Σ_{i≤n} r_i - V*|`.
    pub fn reference_tolerance(&self, n: u64) -> f64 {
        self.reference_constant / n.max(1) as f64 + 1e-9
    }

    pub fn recovery_policy(&self, history: &History) -> Option<Box<dyn Policy>> {
        self.recovery.as_ref().map(|f| f.recovery_policy(history))
    }
}

/// `r_1^ν, ..., r_n^ν`.
pub fn reference_reward_prefix(metadata: &ValueStabilityMetadata, n: u64) -> Vec<f64> {
    (1..=n).map(|i| metadata.reference.reward(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eventually_periodic_sums() {
        let r = EventuallyPeriodic::new(vec![1.0, 0.0], vec![2.0, 4.0]);
        let explicit = [1.0, 0.0, 2.0, 4.0, 2.0, 4.0, 2.0];
        for from in 1..=7u64 {
            for to in from..=7u64 {
                let want: f64 = explicit[(from - 1) as usize..to as usize].iter().sum();
                assert_eq!(r.sum(from, to), want, "{from}..={to}");
            }
        }
        assert_eq!(r.sum(3, 2), 0.0);
        assert_eq!(r.reward(1001), 2.0);
    }

    #[test]
    fn allowance_inversion() {
        let c = LossAllowance::Constant(2.0);
        assert_eq!(c.sublinear_start(0.1, 0.0125), Inversion::From(160));
        let s = LossAllowance::SquareRoot { scale: 1.0, offset: 0.0 };
        // √m <= m/80  ⇔  m >= 6400
        assert_eq!(s.sublinear_start(0.1, 0.1 / 8.0), Inversion::From(6400));
        let l = LossAllowance::Linear { slope: 2.0 };
        assert_eq!(l.sublinear_start(0.1, 0.0125), Inversion::Never);
        assert_eq!(
            LossAllowance::Constant(0.0).sublinear_start(0.1, 0.0125),
            Inversion::From(1)
        );
    }

    #[test]
    fn exponential_bound_is_capped() {
        let b = ViolationBound::Exponential { amplitude: 2.0, rate: 1.0 };
        assert_eq!(b.eval(1, 0.0), 1.0);
        assert!(b.eval(10_000, 0.1) < 1e-40);
    }

    #[test]
    fn schedule_decays() {
        let s = EpsilonSchedule::with_eps0(0.4);
        assert_eq!(s.at(1), 0.4);
        assert!((s.at(16) - 0.2).abs() < 1e-15);
    }
}
