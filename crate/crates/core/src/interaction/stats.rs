use super::InteractionError;

/// Finite-horizon proxies for the lower and upper average value.
///
/// `running[i-1] = (r_1 + ... + r_i) / i`; `suffix_inf[i-1]` and
/// `suffix_sup[i-1]` are the infimum and supremum of `running` over
/// indices `>= i`. The first entries of the suffix arrays stand in for
/// `liminf` and `limsup` at the chosen horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageValueEstimates {
    pub running: Vec<f64>,
    pub suffix_inf: Vec<f64>,
    pub suffix_sup: Vec<f64>,
}

impl AverageValueEstimates {
    /// Infimum of the running average over steps `>= from` (1-based).
    pub fn lower_after(&self, from: usize) -> f64 {
        self.suffix_inf[from.clamp(1, self.running.len()) - 1]
    }

    pub fn upper_after(&self, from: usize) -> f64 {
        self.suffix_sup[from.clamp(1, self.running.len()) - 1]
    }

    pub fn last(&self) -> f64 {
        *self.running.last().expect("non-empty by construction")
    }
}

/// Running averages of the first `horizon` rewards plus their suffix extrema.
pub fn average_value_estimates(
    rewards: &[f64],
    horizon: usize,
) -> Result<AverageValueEstimates, InteractionError> {
    if rewards.is_empty() {
        return Err(InteractionError::Argument("empty reward sequence".into()));
    }
    if horizon == 0 || horizon > rewards.len() {
        return Err(InteractionError::Argument(format!(
            "horizon {horizon} must lie in 1..={}",
            rewards.len()
        )));
    }
    let mut running = Vec::with_capacity(horizon);
    let mut total = 0.0;
    for (i, r) in rewards[..horizon].iter().enumerate() {
        total += r;
        running.push(total / (i + 1) as f64);
    }
    let mut suffix_inf = running.clone();
    let mut suffix_sup = running.clone();
    for i in (0..horizon.saturating_sub(1)).rev() {
        suffix_inf[i] = suffix_inf[i].min(suffix_inf[i + 1]);
        suffix_sup[i] = suffix_sup[i].max(suffix_sup[i + 1]);
    }
    Ok(AverageValueEstimates {
        running,
        suffix_inf,
        suffix_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rewards() {
        let est = average_value_estimates(&[1.0; 50], 50).unwrap();
        assert!(est.running.iter().all(|&v| v == 1.0));
        assert_eq!(est.lower_after(1), 1.0);
        assert_eq!(est.upper_after(1), 1.0);
    }

    #[test]
    fn alternating_rewards_converge_to_one() {
        let m = 1000;
        let rewards: Vec<f64> = (0..m).map(|i| if i % 2 == 0 { 0.0 } else { 2.0 }).collect();
        let est = average_value_estimates(&rewards, m).unwrap();
        assert!((est.last() - 1.0).abs() <= 1.0 / m as f64);
        // Tail proxies over the last half.
        assert!((est.lower_after(m / 2) - 1.0).abs() <= 2.0 / m as f64 * 2.0);
        assert!((est.upper_after(m / 2) - 1.0).abs() <= 2.0 / m as f64 * 2.0);
    }

    #[test]
    fn decaying_prefix() {
        let est = average_value_estimates(&[1.0, 0.0, 0.0, 0.0], 4).unwrap();
        let expected = [1.0, 0.5, 1.0 / 3.0, 0.25];
        for (a, b) in est.running.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(est.suffix_inf[0], 0.25);
        assert_eq!(est.suffix_sup[1], 0.5);
    }

    #[test]
    fn empty_sequence_is_an_error() {
        assert!(average_value_estimates(&[], 1).is_err());
        assert!(average_value_estimates(&[1.0], 0).is_err());
        assert!(average_value_estimates(&[1.0], 2).is_err());
    }
}
