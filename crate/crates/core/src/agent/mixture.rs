use crate::interaction::{History, ModelState};

use super::ClassSpec;

/// Per-member log-likelihoods of the observed percepts given the taken actions.
///
/// Policy factors are omitted: they are common to every member and cancel in
/// each ratio `ν(z_{<i}) / ξ(z_{<i})`. A member that assigned probability 0
/// to an observed percept has log-likelihood `-∞` from then on.
#[derive(Debug)]
pub struct Mixture {
    log_weights: Vec<f64>,
    log_lik: Vec<f64>,
    states: Vec<Box<dyn ModelState>>,
    seen: usize,
}

impl Mixture {
    pub fn new(class: &ClassSpec) -> Self {
        Self {
            log_weights: class.weights().iter().map(|w| w.ln()).collect(),
            log_lik: vec![0.0; class.len()],
            states: class.members().iter().map(|m| m.model.start()).collect(),
            seen: 0,
        }
    }

    /// Number of history steps absorbed so far.
    pub fn seen(&self) -> usize {
        self.seen
    }

    /// Absorbs every step of `history` past the ones already seen.
    pub fn absorb(&mut self, history: &History) {
        assert!(
            history.len() >= self.seen,
            "mixture cannot rewind from {} to {} steps",
            self.seen,
            history.len()
        );
        for step in &history.steps()[self.seen..] {
            for (state, ll) in self.states.iter_mut().zip(self.log_lik.iter_mut()) {
                if *ll > f64::NEG_INFINITY {
                    let p = state.probability(step.action, &step.percept);
                    *ll += if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
                }
                state.advance(step.action, &step.percept);
            }
        }
        self.seen = history.len();
    }

    pub fn log_likelihood(&self, i: usize) -> f64 {
        self.log_lik[i]
    }

    /// `ν(z_{<i}) > 0`.
    pub fn is_possible(&self, i: usize) -> bool {
        self.log_lik[i] > f64::NEG_INFINITY
    }

    /// `log ξ(z_{<i})` via a max-shifted sum.
    pub fn log_xi(&self) -> f64 {
        let terms: Vec<f64> = self
            .log_weights
            .iter()
            .zip(&self.log_lik)
            .map(|(w, l)| w + l)
            .collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return top;
        }
        top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
    }

    /// `ν(z_{<i}) / ξ(z_{<i})` for every member.
    pub fn ratios(&self) -> Vec<f64> {
        let lx = self.log_xi();
        self.log_lik
            .iter()
            .map(|l| if *l == f64::NEG_INFINITY { 0.0 } else { (l - lx).exp() })
            .collect()
    }

    /// Members whose ratio is at least `alpha`.
    pub fn consistency_set(&self, alpha: f64) -> Vec<bool> {
        consistency_set(&self.ratios(), alpha)
    }
}

/// `T = {ν : ratio_ν >= α}`.
pub fn consistency_set(ratios: &[f64], alpha: f64) -> Vec<bool> {
    ratios.iter().map(|r| *r >= alpha).collect()
}
