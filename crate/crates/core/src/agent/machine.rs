use crate::interaction::{Action, History, Policy};

use super::horizons::{compute_horizons, HorizonInputs, Horizons};
use super::{AgentConfig, AgentError, ClassSpec, Mixture, Phase};

/// Why an exploration attempt ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakReason {
    /// Realized rewards left the explored member's reference band.
    Deviation,
    /// The attempt reached step `3k`.
    Length,
    /// The explored member left the consistency set.
    Inconsistent,
}

/// Consistency-check measurements taken before acting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// `Σ_ν w_ν · ratio_ν`.
    pub mixture_sum: f64,
    /// `max_ν (ratio_ν - 1 / w_ν)`; never positive up to rounding.
    pub max_ratio_excess: f64,
    /// `|T|` at the consistency check.
    pub consistency_size: usize,
}

/// What the agent did on one step, and in which state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub step: u64,
    pub phase: Phase,
    pub nu_t: usize,
    pub nu_e: Option<usize>,
    pub s: u32,
    pub action: Action,
    pub diagnostics: StepDiagnostics,
}

/// Everything needed to re-check one horizon computation after the fact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonRecord {
    pub i_h: u64,
    pub n: u64,
    pub nu_t: usize,
    pub nu_e: usize,
    pub h: u64,
    pub eps: f64,
    pub delta: f64,
    pub horizons: Horizons,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stage {
    Uninitialized,
    LoopStart,
    /// No member beats `ν^t`; retry every step.
    WaitE,
    Prepare,
    ExploitToK { k: u64 },
    Explore { k: u64 },
}

/// The exploit/explore state machine.
pub struct Agent {
    class: ClassSpec,
    config: AgentConfig,
    mixture: Mixture,
    r_max: f64,
    s: u32,
    // numbering cursors; `j_t` wraps with the numbering period, `j_e` counts selections
    j_t: u64,
    j_e: u64,
    h: u64,
    n: u64,
    nu_t: Option<usize>,
    nu_e: Option<usize>,
    eps: f64,
    delta: f64,
    stage: Stage,
    p_t: Option<Box<dyn Policy>>,
    p_e: Option<Box<dyn Policy>>,
    explore_steps: u64,
    horizon_log: Vec<HorizonRecord>,
    break_log: Vec<(u64, BreakReason)>,
    last: Option<Decision>,
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent")
            .field("s", &self.s)
            .field("n", &self.n)
            .field("h", &self.h)
            .field("nu_t", &self.nu_t)
            .field("nu_e", &self.nu_e)
            .field("stage", &self.stage)
            .finish()
    }
}

impl Agent {
    pub fn new(class: ClassSpec, config: AgentConfig) -> Result<Self, AgentError> {
        if let Some(m) = class.members().iter().find(|m| m.metadata.recovery.is_none()) {
            return Err(AgentError::Config(format!(
                "member {} declares no recovery policy",
                m.name()
            )));
        }
        Ok(Self {
            mixture: Mixture::new(&class),
            r_max: class.max_reward(),
            class,
            config,
            s: 1,
            j_t: 0,
            j_e: 0,
            h: 0,
            n: 1,
            nu_t: None,
            nu_e: None,
            eps: 0.0,
            delta: 0.0,
            stage: Stage::Uninitialized,
            p_t: None,
            p_e: None,
            explore_steps: 0,
            horizon_log: Vec::new(),
            break_log: Vec::new(),
            last: None,
        })
    }

    pub fn class(&self) -> &ClassSpec {
        &self.class
    }

    pub fn mixture(&self) -> &Mixture {
        &self.mixture
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    pub fn alpha(&self) -> f64 {
        alpha(self.s)
    }

    pub fn nu_t(&self) -> Option<usize> {
        self.nu_t
    }

    pub fn nu_e(&self) -> Option<usize> {
        self.nu_e
    }

    pub fn loop_count(&self) -> u64 {
        self.n
    }

    pub fn last_decision(&self) -> Option<&Decision> {
        self.last.as_ref()
    }

    pub fn horizon_log(&self) -> &[HorizonRecord] {
        &self.horizon_log
    }

    pub fn break_log(&self) -> &[(u64, BreakReason)] {
        &self.break_log
    }

    /// First member of `T` strictly after cursor `j_t` in the numbering;
    /// lowers the threshold until `T` is non-empty.
    fn select_nu_t(&mut self, ratios: &[f64]) -> usize {
        let m = self.class.len() as u64;
        loop {
            let a = alpha(self.s);
            let found = (1..=m)
                .map(|off| self.class.numbering(self.j_t + off))
                .find(|&c| ratios[c] >= a);
            if let Some(c) = found {
                self.j_t = (self.j_t + 1) % m;
                return c;
            }
            self.s += 1;
        }
    }

    /// First member after cursor `j_e` with a larger optimal value and positive likelihood.
    fn select_nu_e(&mut self) -> Option<usize> {
        let t = self.nu_t?;
        let v_t = self.class.optimal_value(t);
        let m = self.class.len() as u64;
        let found = (1..=m)
            .map(|off| self.class.numbering(self.j_e + off))
            .find(|&c| self.class.optimal_value(c) > v_t && self.mixture.is_possible(c));
        if found.is_some() {
            self.j_e += 1;
        }
        found
    }

    fn nu_e_valid(&self) -> bool {
        match (self.nu_t, self.nu_e) {
            (Some(t), Some(e)) => {
                self.class.optimal_value(e) > self.class.optimal_value(t)
                    && self.mixture.is_possible(e)
            }
            _ => false,
        }
    }

    fn recovery(&self, member: usize, history: &History) -> Box<dyn Policy> {
        self.class
            .member(member)
            .metadata
            .recovery_policy(history)
            .expect("recovery factories are checked at construction")
    }

    /// Chooses the action for step `history.len() + 1`.
    pub fn act(&mut self, history: &History) -> Result<Action, AgentError> {
        let i = history.len() as u64 + 1;
        self.mixture.absorb(history);
        let ratios = self.mixture.ratios();
        let mut label: Option<Phase> = None;

        let a = alpha(self.s);
        let diagnostics = StepDiagnostics {
            mixture_sum: ratios
                .iter()
                .zip(self.class.weights())
                .map(|(r, w)| r * w)
                .sum(),
            max_ratio_excess: ratios
                .iter()
                .zip(self.class.weights())
                .map(|(r, w)| r - 1.0 / w)
                .fold(f64::NEG_INFINITY, f64::max),
            consistency_size: ratios.iter().filter(|r| **r >= a).count(),
        };

        // consistency
        match self.nu_t {
            None => {
                let t = self.select_nu_t(&ratios);
                self.nu_t = Some(t);
                self.p_t = Some(self.recovery(t, history));
                mark(&mut label, Phase::ChooseT);
                self.stage = Stage::LoopStart;
            }
            Some(t) if ratios[t] < a => {
                let t = self.select_nu_t(&ratios);
                self.nu_t = Some(t);
                self.s += 1;
                self.p_t = Some(self.recovery(t, history));
                mark(&mut label, Phase::ChooseT);
                self.stage = Stage::LoopStart;
            }
            Some(_) => {}
        }

        if let Stage::Explore { k } = self.stage {
            if self.explore_steps >= self.h {
                if let Some(reason) = self.exploration_break(history, &ratios, k) {
                    self.break_log.push((i - 1, reason));
                    let e = self.nu_e.expect("exploring requires ν^e");
                    if ratios[e] < alpha(self.s) {
                        self.nu_e = self.select_nu_e();
                        if self.nu_e.is_some() {
                            mark(&mut label, Phase::ChooseE);
                        }
                        self.stage = Stage::LoopStart;
                    } else {
                        self.stage = Stage::Prepare;
                    }
                }
            }
        }

        let (action, phase) = loop {
            match self.stage {
                Stage::Uninitialized => unreachable!("ν^t is selected before the loop"),
                Stage::LoopStart => {
                    self.n += 1;
                    if !self.nu_e_valid() {
                        self.nu_e = self.select_nu_e();
                        if self.nu_e.is_none() {
                            self.stage = Stage::WaitE;
                            break (self.play_t(history), Phase::IdleT);
                        }
                        mark(&mut label, Phase::ChooseE);
                    }
                    self.setup();
                    self.stage = Stage::Prepare;
                }
                Stage::WaitE => {
                    self.nu_e = self.select_nu_e();
                    if self.nu_e.is_none() {
                        break (self.play_t(history), Phase::IdleT);
                    }
                    mark(&mut label, Phase::ChooseE);
                    self.setup();
                    self.stage = Stage::Prepare;
                }
                Stage::Prepare => {
                    self.h += 1;
                    let t = self.nu_t.expect("ν^t is set");
                    let e = self.nu_e.expect("ν^e is set");
                    self.p_t = Some(self.recovery(t, history));
                    let inputs = HorizonInputs {
                        exploit: &self.class.member(t).metadata,
                        explore: &self.class.member(e).metadata,
                        nu_t: t,
                        nu_e: e,
                        i_h: i,
                        h: self.h,
                        eps: self.eps,
                        delta: self.delta,
                        r_max: self.r_max,
                        k_cap: self.config.k_cap,
                        m_cap: self.config.m_cap,
                    };
                    let horizons = compute_horizons(&inputs)?;
                    self.horizon_log.push(HorizonRecord {
                        i_h: i,
                        n: self.n,
                        nu_t: t,
                        nu_e: e,
                        h: self.h,
                        eps: self.eps,
                        delta: self.delta,
                        horizons,
                    });
                    mark(&mut label, Phase::Prepare);
                    self.stage = Stage::ExploitToK { k: horizons.k };
                }
                Stage::ExploitToK { k } => {
                    if i < k {
                        break (self.play_t(history), Phase::ExploitToK);
                    }
                    let e = self.nu_e.expect("ν^e is set");
                    self.p_e = Some(self.recovery(e, history));
                    self.explore_steps = 0;
                    self.stage = Stage::Explore { k };
                }
                Stage::Explore { .. } => {
                    let action = self.p_e.as_mut().expect("p^e is set").act(history);
                    self.explore_steps += 1;
                    break (action, Phase::Explore);
                }
            }
        };

        self.last = Some(Decision {
            step: i,
            phase: label.unwrap_or(phase),
            nu_t: self.nu_t.expect("ν^t is set"),
            nu_e: self.nu_e,
            s: self.s,
            action,
            diagnostics,
        });
        Ok(action)
    }

    fn play_t(&mut self, history: &History) -> Action {
        self.p_t.as_mut().expect("p^t is set").act(history)
    }

    /// `δ`, `ε` and `h` at the top of the loop.
    fn setup(&mut self) {
        let t = self.nu_t.expect("ν^t is set");
        let e = self.nu_e.expect("ν^e is set");
        self.delta = (self.class.optimal_value(e) - self.class.optimal_value(t)) / 2.0;
        self.eps = self.class.member(t).metadata.epsilon(self.n);
        if self.eps < self.delta {
            self.delta = self.eps;
        }
        self.h = self.j_e;
    }

    /// Evaluates the three continuation conditions after the last completed step.
    fn exploration_break(&self, history: &History, ratios: &[f64], k: u64) -> Option<BreakReason> {
        let last = history.len() as u64;
        let e = self.nu_e.expect("exploring requires ν^e");
        let md = &self.class.member(e).metadata;
        let reference = md.reference.sum(k, last);
        let realized = history.reward_sum_f64(k as usize, last as usize);
        let band = (last - k) as f64 * self.eps / 4.0 + md.d(k, self.eps / 4.0);
        if (reference - realized).abs() >= band {
            return Some(BreakReason::Deviation);
        }
        if last + 1 >= 3 * k {
            return Some(BreakReason::Length);
        }
        if ratios[e] < alpha(self.s) {
            return Some(BreakReason::Inconsistent);
        }
        None
    }
}

/// `α_s = 2^{-s}`.
pub fn alpha(s: u32) -> f64 {
    0.5f64.powi(s as i32)
}

fn mark(label: &mut Option<Phase>, p: Phase) {
    *label = Some(label.map_or(p, |l| l.min(p)));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{
        mdp_environment, passive_environment, trap_environment, PassiveSource,
        StableEnvironment,
    };
    use crate::interaction::{reward_from_f64, seeded, Simulator};
    use crate::mdp::FiniteMdp;

    fn periodic(name: &str, cycle: Vec<usize>) -> StableEnvironment {
        passive_environment(name, PassiveSource::Periodic { prefix: vec![], cycle }).unwrap()
    }

    fn two_state_mdp() -> StableEnvironment {
        let r = |x: f64| reward_from_f64(x).unwrap();
        let mdp = FiniteMdp::with_state_action_rewards(
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            ],
            vec![vec![r(1.0), r(0.0)], vec![r(0.0), r(0.0)]],
        )
        .unwrap();
        mdp_environment("two", mdp, 1, None).unwrap()
    }

    #[test]
    fn singleton_mdp_follows_recovery_policy() {
        let env = two_state_mdp();
        let class = ClassSpec::new(vec![env.clone()], None).unwrap();
        let mut agent = Agent::new(class, AgentConfig::default()).unwrap();
        let mut reference = env.metadata.recovery_policy(&History::new()).unwrap();
        let mut sim = Simulator::new(env.model.clone());
        let mut rng = seeded(1);
        for _ in 0..500 {
            let a = agent.act(sim.history()).unwrap();
            assert_eq!(a, reference.act(sim.history()));
            assert!(agent.nu_e().is_none());
            sim.step_with(a, &mut rng).unwrap();
        }
        assert_eq!(agent.last_decision().unwrap().phase, Phase::IdleT);
    }

    #[test]
    fn select_nu_t_scans_forward() {
        let class = ClassSpec::new(
            vec![periodic("a", vec![0]), periodic("b", vec![1]), periodic("c", vec![0, 1])],
            None,
        )
        .unwrap();
        let mut agent = Agent::new(class, AgentConfig::default()).unwrap();
        // only member 2 is in T
        let chosen = agent.select_nu_t(&[0.0, 0.0, 4.0]);
        assert_eq!(chosen, 2);
        assert_eq!(agent.j_t, 1);
        assert_eq!(agent.s, 1);
        // from cursor 1 the scan starts at member 1
        assert_eq!(agent.select_nu_t(&[1.0, 1.0, 1.0]), 1);
        // empty T at every level above the ratios lowers the threshold
        assert_eq!(agent.select_nu_t(&[0.1, 0.0, 0.0]), 0);
        assert_eq!(agent.s, 4);
    }

    #[test]
    fn wrong_deterministic_member_is_dropped() {
        // both predict 0 first; they disagree at step 2
        let a = periodic("a", vec![0, 0]);
        let b = periodic("b", vec![0, 1]);
        let class = ClassSpec::new(vec![a, b.clone()], None).unwrap();
        let mut agent = Agent::new(class, AgentConfig::default()).unwrap();
        let mut sim = Simulator::new(b.model.clone());
        let mut rng = seeded(0);
        for step in 1..=50u64 {
            let act = agent.act(sim.history()).unwrap();
            if step >= 3 {
                assert!(!agent.mixture().is_possible(0));
                assert_eq!(agent.nu_t(), Some(1));
            }
            sim.step_with(act, &mut rng).unwrap();
        }
    }

    #[test]
    fn maximal_member_never_explores() {
        let low = passive_environment("low", PassiveSource::Bernoulli { p: 0.7 }).unwrap();
        let high = periodic("high", vec![1]);
        let class = ClassSpec::new(vec![high.clone(), low], None).unwrap();
        let mut agent = Agent::new(class, AgentConfig::default()).unwrap();
        let mut sim = Simulator::new(high.model.clone());
        let mut rng = seeded(0);
        for _ in 0..200 {
            let a = agent.act(sim.history()).unwrap();
            sim.step_with(a, &mut rng).unwrap();
        }
        assert_eq!(agent.nu_t(), Some(0));
        assert_eq!(agent.nu_e(), None);
        assert_eq!(agent.last_decision().unwrap().phase, Phase::IdleT);
    }

    #[test]
    fn explores_a_better_member_then_adopts_it() {
        // ν_0 predicts a constant 0 stream, ν_1 an i.i.d. stream; truth is ν_1
        let zeros = periodic("zeros", vec![0]);
        let coin = passive_environment("coin", PassiveSource::Bernoulli { p: 0.5 }).unwrap();
        let class = ClassSpec::new(vec![coin.clone(), zeros], None).unwrap();
        let mut agent = Agent::new(class, AgentConfig::default()).unwrap();
        let mut sim = Simulator::new(coin.model.clone());
        let mut rng = seeded(3);
        for _ in 0..200 {
            let a = agent.act(sim.history()).unwrap();
            sim.step_with(a, &mut rng).unwrap();
        }
        // a single 1 rules out the constant stream
        assert!(!agent.mixture().is_possible(1));
        assert_eq!(agent.nu_t(), Some(0));
    }

    #[test]
    fn condition_i_threshold_example() {
        // k = 100, i = 120, ε = 0.2, d = 0: the band is (i - k) ε / 4 = 1.0
        let band = (120 - 100) as f64 * 0.2 / 4.0;
        assert!((band - 1.0).abs() < 1e-12);
        assert!(1.2 >= band);
        assert!(0.8 < band);
    }

    #[test]
    fn trap_class_reports_non_sublinear_allowance() {
        // ν_0 (V* = 1) exploits while ν_1 (V* = 2, d = 2k) is the candidate
        let class = ClassSpec::new(vec![trap_environment(0), trap_environment(1)], None).unwrap();
        let mut agent = Agent::new(class, AgentConfig::default()).unwrap();
        let err = agent.act(&History::new()).unwrap_err();
        assert_eq!(err, AgentError::NotSublinear { member: 1 });
    }

    #[test]
    fn exploration_respects_minimum_length_and_cap() {
        let zeros = periodic("zeros", vec![0]);
        let coin = passive_environment("coin", PassiveSource::Bernoulli { p: 0.5 }).unwrap();
        let class = ClassSpec::new(vec![coin, zeros.clone()], None).unwrap();
        let mut agent = Agent::new(class, AgentConfig::default()).unwrap();
        let mut sim = Simulator::new(zeros.model.clone());
        let mut rng = seeded(3);
        let mut phases = Vec::new();
        for _ in 0..5_000 {
            let a = agent.act(sim.history()).unwrap();
            phases.push(agent.last_decision().unwrap().phase);
            sim.step_with(a, &mut rng).unwrap();
        }
        for rec in agent.horizon_log() {
            let k = rec.horizons.k;
            assert!(k > 2 * rec.i_h);
            let start = k as usize - 1;
            if start >= phases.len() || phases[start] != Phase::Explore {
                continue;
            }
            let run = phases[start..].iter().take_while(|p| **p == Phase::Explore).count() as u64;
            assert!(run >= rec.h.min(phases.len() as u64 - k + 1), "run {run} h {}", rec.h);
            assert!(run <= 2 * k);
        }
    }
}
