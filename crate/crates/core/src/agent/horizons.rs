use crate::environments::{Inversion, ValueStabilityMetadata};

use super::AgentError;

/// Inputs of one exploration preparation.
#[derive(Debug, Clone, Copy)]
pub struct HorizonInputs<'a> {
    pub exploit: &'a ValueStabilityMetadata,
    pub explore: &'a ValueStabilityMetadata,
    pub nu_t: usize,
    pub nu_e: usize,
    /// Step at which the preparation happens.
    pub i_h: u64,
    /// Attempt counter.
    pub h: u64,
    pub eps: f64,
    pub delta: f64,
    pub r_max: f64,
    pub k_cap: u64,
    pub m_cap: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizons {
    pub k1: u64,
    pub k2: u64,
    pub k3: u64,
    pub k4: u64,
    /// Exploration start; exceeds every `k_j`.
    pub k: u64,
}

/// Probe points `c+1, 2c, 4c, ...` up to `m_cap`.
pub fn probe_grid(c: u64, m_cap: u64) -> Vec<u64> {
    let mut out = vec![c + 1];
    let mut m = c.max(1).saturating_mul(2);
    while m <= m_cap {
        if m > c + 1 {
            out.push(m);
        }
        m = m.saturating_mul(2);
    }
    out
}

/// Smallest `k1 >= 1` with `i_h · V* / k1 <= ε/8`.
pub fn k1(i_h: u64, v_star: f64, eps: f64) -> u64 {
    let holds = |k: u64| i_h as f64 * v_star / k as f64 <= eps / 8.0;
    let guess = (8.0 * i_h as f64 * v_star / eps).ceil();
    let mut k = if guess.is_finite() && guess >= 1.0 { guess as u64 } else { 1 };
    while !holds(k) {
        k += 1;
    }
    while k > 1 && holds(k - 1) {
        k -= 1;
    }
    k
}

/// `|r_{i_h+1..m} / (m - i_h) - V*| <= ε/8` against the exploited member's reference.
pub fn eq3_holds(md: &ValueStabilityMetadata, i_h: u64, m: u64, eps: f64) -> bool {
    if m <= i_h {
        return false;
    }
    let mean = md.reference.sum(i_h + 1, m) / (m - i_h) as f64;
    (mean - md.optimal_value).abs() <= eps / 8.0
}

/// Smallest `k2 > 2 i_h` whose probe grid satisfies the reference band.
pub fn k2(md: &ValueStabilityMetadata, i_h: u64, eps: f64, m_cap: u64) -> Option<u64> {
    let ok = |c: u64| probe_grid(c, m_cap).into_iter().all(|m| eq3_holds(md, i_h, m, eps));
    let first = 2 * i_h + 1;
    if ok(first) {
        return Some(first);
    }
    let mut lo = first;
    let mut hi = first;
    loop {
        if hi >= m_cap {
            return None;
        }
        hi = hi.saturating_mul(2).min(m_cap);
        if ok(hi) {
            break;
        }
        lo = hi;
    }
    // lo fails, hi passes
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Smallest `k3` with `h · r_max / k3 < ε/8`.
pub fn k3(h: u64, r_max: f64, eps: f64) -> u64 {
    let holds = |k: u64| h as f64 * r_max / (k as f64) < eps / 8.0;
    let guess = (8.0 * h as f64 * r_max / eps).floor() + 1.0;
    let mut k = if guess.is_finite() && guess >= 1.0 { guess as u64 } else { 1 };
    while !holds(k) {
        k += 1;
    }
    while k > 1 && holds(k - 1) {
        k -= 1;
    }
    k
}

/// The three `d/m <= ε/8` bounds as separate thresholds `m0` (each holding for all `m >= m0`).
pub fn eq5_thresholds(
    exploit: &ValueStabilityMetadata,
    explore: &ValueStabilityMetadata,
    i_h: u64,
    eps: f64,
    m_cap: u64,
) -> Result<[u64; 3], Eq5Failure> {
    let ratio = eps / 8.0;
    let explore_start = invert(&explore.loss_allowance, eps / 4.0, ratio, m_cap)
        .ok_or(Eq5Failure::Explore)?;
    let exploit_start = invert(&exploit.loss_allowance, eps / 8.0, ratio, m_cap)
        .ok_or(Eq5Failure::Exploit)?;
    // d_t(i_h, ε/8) is a constant in m
    let c = exploit.d(i_h, eps / 8.0);
    let holds = |m: u64| c / m as f64 <= ratio;
    let guess = (c.max(0.0) / ratio).ceil();
    if !guess.is_finite() || guess > m_cap as f64 {
        return Err(Eq5Failure::Exploit);
    }
    let mut m = (guess as u64).max(1);
    while !holds(m) {
        m += 1;
    }
    while m > 1 && holds(m - 1) {
        m -= 1;
    }
    Ok([explore_start, exploit_start, m])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eq5Failure {
    Explore,
    Exploit,
}

fn invert(
    d: &crate::environments::LossAllowance,
    eps: f64,
    ratio: f64,
    m_cap: u64,
) -> Option<u64> {
    match d.sublinear_start(eps, ratio) {
        Inversion::From(m) => Some(m),
        Inversion::Never => None,
        Inversion::Unknown => {
            // smallest grid start c whose probes all pass
            let ok = |c: u64| probe_grid(c, m_cap).into_iter().all(|m| d.eval(m, eps) <= ratio * m as f64);
            let mut c = 1u64;
            while c < m_cap {
                if ok(c) {
                    return Some(c + 1);
                }
                c *= 2;
            }
            None
        }
    }
}

/// `(1/2k) r^e_{k..3k} >= (1/2k) r^t_{k..3k} + δ`.
pub fn eq6_holds(
    exploit: &ValueStabilityMetadata,
    explore: &ValueStabilityMetadata,
    k: u64,
    delta: f64,
) -> bool {
    let two_k = 2.0 * k as f64;
    explore.reference.sum(k, 3 * k) / two_k >= exploit.reference.sum(k, 3 * k) / two_k + delta
}

/// Computes all exploration horizons for one preparation.
pub fn compute_horizons(inp: &HorizonInputs<'_>) -> Result<Horizons, AgentError> {
    let k1 = k1(inp.i_h, inp.exploit.optimal_value, inp.eps);
    let k2 = k2(inp.exploit, inp.i_h, inp.eps, inp.m_cap).ok_or(AgentError::ReferenceBand {
        member: inp.nu_t,
        m_cap: inp.m_cap,
    })?;
    let k3 = k3(inp.h, inp.r_max, inp.eps);
    let thresholds = eq5_thresholds(inp.exploit, inp.explore, inp.i_h, inp.eps, inp.m_cap)
        .map_err(|f| AgentError::NotSublinear {
            member: match f {
                Eq5Failure::Explore => inp.nu_e,
                Eq5Failure::Exploit => inp.nu_t,
            },
        })?;
    let k4 = thresholds.iter().copied().max().unwrap_or(1).saturating_sub(1);
    let start = k1.max(k2).max(k3).max(k4) + 1;
    let k = (start..=inp.k_cap)
        .find(|&k| eq6_holds(inp.exploit, inp.explore, k, inp.delta))
        .ok_or(AgentError::HorizonSearch {
            nu_t: inp.nu_t,
            nu_e: inp.nu_e,
            k_cap: inp.k_cap,
        })?;
    Ok(Horizons { k1, k2, k3, k4, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{
        passive_environment, trap_environment, LossAllowance, PassiveSource, StableEnvironment,
    };

    #[test]
    fn k1_examples() {
        assert_eq!(k1(10, 0.5, 0.1), 400);
        assert_eq!(k1(10, 0.0, 0.1), 1);
        assert_eq!(k1(0, 0.9, 0.1), 1);
        // independent check: smallest k with 10·0.5/k <= 0.0125
        let brute = (1..10_000u64).find(|&k| 5.0 / k as f64 <= 0.0125).unwrap();
        assert_eq!(brute, 400);
    }

    #[test]
    fn k3_examples() {
        assert_eq!(k3(2, 1.0, 0.1), 161);
        assert_eq!(k3(1, 2.0, 0.5), 33);
        let brute = (1..10_000u64).find(|&k| 2.0 / (k as f64) < 0.1 / 8.0).unwrap();
        assert_eq!(brute, 161);
    }

    #[test]
    fn grid_shape() {
        assert_eq!(probe_grid(5, 100), vec![6, 10, 20, 40, 80]);
        assert_eq!(probe_grid(1, 8), vec![2, 4, 8]);
    }

    fn passive() -> StableEnvironment {
        passive_environment(
            "ones",
            PassiveSource::Periodic {
                prefix: vec![],
                cycle: vec![1],
            },
        )
        .unwrap()
    }

    #[test]
    fn k2_constant_reference_is_immediate() {
        let env = passive();
        assert_eq!(k2(&env.metadata, 7, 0.1, 1 << 30), Some(15));
    }

    #[test]
    fn k2_waits_out_a_warm_up() {
        // trap reference 1^5 0^5 2^∞ with V* = 2
        let env = trap_environment(5);
        let eps = 0.35;
        let k = k2(&env.metadata, 0, eps, 1 << 30).unwrap();
        // mean after m steps is (2m - 15)/m: band needs 15/m <= 0.04375, i.e. m >= 343
        assert_eq!(k, 342);
        assert!(eq3_holds(&env.metadata, 0, 343, eps));
        assert!(!eq3_holds(&env.metadata, 0, 342, eps));
    }

    #[test]
    fn eq5_uses_closed_forms() {
        let mut a = passive().metadata;
        let mut b = passive().metadata;
        a.loss_allowance = LossAllowance::Constant(2.0);
        b.loss_allowance = LossAllowance::SquareRoot { scale: 1.0, offset: 0.0 };
        // explore: √m <= m ε/8  ⇔  m >= (8/ε)² = 6400 for ε = 0.1
        // exploit: 2 <= m·0.0125 ⇔ m >= 160, twice (d is constant)
        let t = eq5_thresholds(&a, &b, 10, 0.1, u64::MAX).unwrap();
        assert_eq!(t, [6400, 160, 160]);
        let mut c = passive().metadata;
        c.loss_allowance = LossAllowance::Linear { slope: 2.0 };
        assert_eq!(eq5_thresholds(&a, &c, 10, 0.1, u64::MAX), Err(Eq5Failure::Explore));
    }

    #[test]
    fn custom_allowance_uses_probe_grid() {
        let mut a = passive().metadata;
        a.loss_allowance = LossAllowance::Custom(std::sync::Arc::new(|m, _| (m as f64).sqrt()));
        let t = eq5_thresholds(&a, &a, 1, 0.1, 1 << 40).unwrap();
        // first power-of-two start whose grid clears √m <= 0.0125 m (m >= 6400)
        assert_eq!(t[0], 8193);
    }

    #[test]
    fn eq6_needs_gap() {
        let low = passive_environment("b", PassiveSource::Bernoulli { p: 0.7 }).unwrap();
        let high = passive();
        // V* 0.7 vs 1: gap 0.3, δ = 0.15 holds from the start
        assert!(eq6_holds(&low.metadata, &high.metadata, 1, 0.15));
        // k = 10: (21 - 14.7) / 20 = 0.315
        assert!(eq6_holds(&low.metadata, &high.metadata, 10, 0.31));
        assert!(!eq6_holds(&low.metadata, &high.metadata, 10, 0.32));
    }
}
