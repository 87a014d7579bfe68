#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use selfopt::interaction::{reward_from_f64, RandomSource};
use selfopt::mdp::FiniteMdp;

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// Stationary distribution by the Markov chain tree theorem: `π_r` is
/// proportional to the total weight of spanning trees directed into `r`.
/// Enumerates every successor map, so only for tiny chains. `None` when no
/// spanning in-tree has positive weight (no unique stationary law).
pub fn tree_stationary(p: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = p.len();
    let mut weights = vec![0.0; n];
    for root in 0..n {
        let others: Vec<usize> = (0..n).filter(|&s| s != root).collect();
        let combos = n.pow(others.len() as u32);
        for code in 0..combos {
            let mut succ = vec![usize::MAX; n];
            let mut c = code;
            for &s in &others {
                succ[s] = c % n;
                c /= n;
            }
            if others.iter().any(|&s| succ[s] == s) {
                continue;
            }
            // every node must reach the root without revisiting
            let acyclic = others.iter().all(|&s| {
                let mut cur = s;
                for _ in 0..n {
                    if cur == root {
                        return true;
                    }
                    cur = succ[cur];
                }
                cur == root
            });
            if acyclic {
                weights[root] += others.iter().map(|&s| p[s][succ[s]]).product::<f64>();
            }
        }
    }
    let total: f64 = weights.iter().sum();
    (total > 1e-300).then(|| weights.iter().map(|w| w / total).collect())
}

/// Best long-run average reward over all deterministic stationary policies,
/// with a maximizing policy. Policies without a unique stationary law are skipped.
pub fn brute_force_gain(mdp: &FiniteMdp) -> (f64, Vec<usize>) {
    let n = mdp.n_states();
    let m = mdp.n_actions();
    let mut best = (f64::NEG_INFINITY, vec![]);
    for code in 0..m.pow(n as u32) {
        let policy: Vec<usize> = (0..n).map(|s| (code / m.pow(s as u32)) % m).collect();
        let p: Vec<Vec<f64>> = (0..n)
            .map(|s| (0..n).map(|t| mdp.p(s, policy[s], t)).collect())
            .collect();
        let Some(pi) = tree_stationary(&p) else { continue };
        let gain: f64 = (0..n)
            .map(|s| {
                let a = policy[s];
                pi[s] * (0..n).map(|t| mdp.p(s, a, t) * mdp.reward_f64(s, a, t)).sum::<f64>()
            })
            .sum();
        if gain > best.0 {
            best = (gain, policy);
        }
    }
    best
}

/// Random MDP with strictly positive transitions and rewards on a 0.01 grid.
pub fn random_positive_mdp(rng: &mut RandomSource, n: usize, m: usize) -> FiniteMdp {
    let mut transition = vec![vec![vec![0.0; n]; m]; n];
    let mut reward = vec![vec![vec![reward_from_f64(0.0).unwrap(); n]; m]; n];
    for s in 0..n {
        for a in 0..m {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut row: Vec<f64> = raw.iter().map(|x| x / total).collect();
            // exact row sum: push the rounding residue into the last entry
            let head: f64 = row[..n - 1].iter().sum();
            row[n - 1] = 1.0 - head;
            transition[s][a] = row;
            for t in 0..n {
                let r = rng.random_range(0..=100) as f64 / 100.0;
                reward[s][a][t] = reward_from_f64(r).unwrap();
            }
        }
    }
    FiniteMdp::new(transition, reward).unwrap()
}
