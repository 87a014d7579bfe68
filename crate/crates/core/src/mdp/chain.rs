use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::{MdpError, STOCHASTIC_TOL};

/// A validated row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    p: DMatrix<f64>,
}

impl StochasticMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, MdpError> {
        let n = rows.len();
        if n == 0 {
            return Err(MdpError::Shape("empty chain".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(MdpError::Shape(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(MdpError::NotStochastic { row: i.to_string(), sum });
            }
        }
        Ok(Self::from_rows_unchecked(rows))
    }

    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        Self {
            p: DMatrix::from_fn(n, n, |i, j| rows[i][j]),
        }
    }

    pub fn size(&self) -> usize {
        self.p.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.size()).filter(move |&j| self.p[(i, j)] > 0.0)
    }

    fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.size()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            for j in self.successors(i) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }
}

/// First pair `(from, to)` such that `to` is unreachable from `from`, if any.
pub fn reachability_witness(chain: &StochasticMatrix) -> Option<(usize, usize)> {
    (0..chain.size()).find_map(|from| {
        chain
            .reachable_from(from)
            .iter()
            .position(|r| !r)
            .map(|to| (from, to))
    })
}

fn require_irreducible(chain: &StochasticMatrix) -> Result<(), MdpError> {
    match reachability_witness(chain) {
        Some((from, to)) => Err(MdpError::Reducible { from, to }),
        None => Ok(()),
    }
}

/// Closed communicating classes, each sorted, ordered by smallest member.
pub fn closed_classes(chain: &StochasticMatrix) -> Vec<Vec<usize>> {
    let n = chain.size();
    let reach: Vec<Vec<bool>> = (0..n).map(|i| chain.reachable_from(i)).collect();
    let mut assigned = vec![false; n];
    let mut classes = Vec::new();
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &class {
            assigned[j] = true;
        }
        // closed iff everything reachable from i is inside the class
        if (0..n).all(|j| !reach[i][j] || class.contains(&j)) {
            classes.push(class);
        }
    }
    classes
}

/// Stationary distribution `π P = π`, `Σ π = 1` of an irreducible chain.
pub fn stationary_distribution(chain: &StochasticMatrix) -> Result<Vec<f64>, MdpError> {
    require_irreducible(chain)?;
    let n = chain.size();
    // (P^T - I) π = 0 with the last equation replaced by normalization.
    let mut a = chain.p.transpose() - DMatrix::identity(n, n);
    let mut b = DVector::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or(MdpError::Singular)?;
    let mut pi: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}

/// `H[a][b] = E l(a, b)`, the expected first-passage time from `a` to `b`
/// (at least one step); the diagonal is 0 by convention.
pub fn expected_hitting_times(chain: &StochasticMatrix) -> Result<Vec<Vec<f64>>, MdpError> {
    require_irreducible(chain)?;
    let n = chain.size();
    let mut h = vec![vec![0.0; n]; n];
    if n == 1 {
        return Ok(h);
    }
    for target in 0..n {
        let others: Vec<usize> = (0..n).filter(|&s| s != target).collect();
        let m = others.len();
        // (I - Q) x = 1 over non-target states
        let a = DMatrix::from_fn(m, m, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - chain.p[(others[i], others[j])]
        });
        let x = a
            .lu()
            .solve(&DVector::from_element(m, 1.0))
            .ok_or(MdpError::Singular)?;
        for (i, &s) in others.iter().enumerate() {
            h[s][target] = x[i];
        }
    }
    Ok(h)
}

/// Period of an irreducible chain (gcd of cycle lengths).
pub fn period(chain: &StochasticMatrix) -> Result<usize, MdpError> {
    require_irreducible(chain)?;
    let n = chain.size();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = VecDeque::from([0]);
    while let Some(i) = queue.pop_front() {
        for j in chain.successors(i) {
            if level[j] == usize::MAX {
                level[j] = level[i] + 1;
                queue.push_back(j);
            }
        }
    }
    let mut g = 0usize;
    for i in 0..n {
        for j in chain.successors(i) {
            let diff = (level[i] + 1).abs_diff(level[j]);
            g = gcd(g, diff);
        }
    }
    Ok(g.max(1))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Total-variation distance to stationarity after `k` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingBound {
    /// `sup_i TV(P^k(i, ·), π)`.
    pub value: f64,
    /// Set when the chain is periodic; the bound then does not decay.
    pub periodic: bool,
}

/// Computable stand-in for the mixing coefficients of the chain: the worst-case
/// total-variation distance between the `k`-step law and the stationary law.
pub fn mixing_bound(chain: &StochasticMatrix, k: u32) -> Result<MixingBound, MdpError> {
    let pi = stationary_distribution(chain)?;
    let periodic = period(chain)? > 1;
    let n = chain.size();
    let pk = matrix_power(&chain.p, k);
    let value = (0..n)
        .map(|i| 0.5 * (0..n).map(|j| (pk[(i, j)] - pi[j]).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    Ok(MixingBound {
        value: value.clamp(0.0, 1.0),
        periodic,
    })
}

fn matrix_power(p: &DMatrix<f64>, mut k: u32) -> DMatrix<f64> {
    let n = p.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut base = p.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        base = &base * &base;
        k >>= 1;
    }
    result
}

/// Solves the average-reward Poisson equation `h + g = r + P h`, `h(reference) = 0`
/// for a unichain `P`. Returns `(g, h)`.
pub fn poisson_solution(
    chain: &StochasticMatrix,
    rewards: &[f64],
    reference: usize,
) -> Result<(f64, Vec<f64>), MdpError> {
    let n = chain.size();
    if rewards.len() != n || reference >= n {
        return Err(MdpError::Shape("reward vector does not match the chain".into()));
    }
    // unknowns: h(s) for s != reference (in order), then g
    let col = |s: usize| if s < reference { s } else { s - 1 };
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for s in 0..n {
        for sp in 0..n {
            let coef = if s == sp { 1.0 } else { 0.0 } - chain.p[(s, sp)];
            if sp != reference {
                a[(s, col(sp))] += coef;
            }
        }
        a[(s, n - 1)] = 1.0;
        b[s] = rewards[s];
    }
    let x = a.lu().solve(&b).ok_or(MdpError::Singular)?;
    let g = x[n - 1];
    let h = (0..n)
        .map(|s| if s == reference { 0.0 } else { x[col(s)] })
        .collect();
    Ok((g, h))
}
