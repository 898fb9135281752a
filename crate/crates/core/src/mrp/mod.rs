//! Finite Markov reward processes.
//!
//! A [`MarkovRewardProcess`] is a row-stochastic transition matrix together
//! with a finite reward law for every transition that can occur. This module
//! computes the stationary distribution, the expected one-step reward vector,
//! the gain (long-run average reward) and a pinned solution of the Poisson
//! equation `v = r - gain * 1 + P v`.

mod config;
mod graph;
mod sampler;

pub use config::{AtomEntry, MrpFile, RewardEntry};
pub use graph::{is_irreducible, period};
pub use sampler::{Sampler, SamplerConfig, SamplingMode, Transition};

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance used by the structural invariants (row sums, reward-law masses).
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// One atom of a finite reward law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardAtom {
    pub value: f64,
    pub prob: f64,
}

/// Finite discrete law of the reward collected on one transition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RewardLaw {
    atoms: Vec<RewardAtom>,
}

impl RewardLaw {
    pub fn new(atoms: Vec<RewardAtom>) -> Self {
        Self { atoms }
    }

    pub fn deterministic(value: f64) -> Self {
        Self::new(vec![RewardAtom { value, prob: 1.0 }])
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self::new(
            pairs
                .iter()
                .map(|&(value, prob)| RewardAtom { value, prob })
                .collect(),
        )
    }

    pub fn atoms(&self) -> &[RewardAtom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.value * a.prob).sum()
    }

    /// Atoms carrying positive probability.
    pub fn support(&self) -> impl Iterator<Item = &RewardAtom> {
        self.atoms.iter().filter(|a| a.prob > 0.0)
    }
}

/// A failed [`MarkovRewardProcess`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeTransition { row: usize, col: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    MissingReward { from: usize, to: usize },
    RewardMass { from: usize, to: usize, sum: f64 },
    NegativeRewardProb { from: usize, to: usize, prob: f64 },
    RewardOutOfRange { from: usize, to: usize, value: f64 },
    NotIrreducible,
    Periodic { period: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeTransition { row, col, value } => {
                write!(f, "transition[{row}][{col}] = {value} is negative")
            }
            Violation::RowSum { row, sum } => write!(f, "row {row} sums to {sum}"),
            Violation::MissingReward { from, to } => {
                write!(f, "no reward law for reachable transition {from} -> {to}")
            }
            Violation::RewardMass { from, to, sum } => {
                write!(f, "reward law {from} -> {to} has total probability {sum}")
            }
            Violation::NegativeRewardProb { from, to, prob } => {
                write!(f, "reward law {from} -> {to} has negative probability {prob}")
            }
            Violation::RewardOutOfRange { from, to, value } => {
                write!(f, "reward law {from} -> {to} has value {value} outside [0, 1]")
            }
            Violation::NotIrreducible => write!(f, "not irreducible"),
            Violation::Periodic { period } => write!(f, "not aperiodic (period {period})"),
        }
    }
}

/// Finite Markov reward process: transition matrix plus per-transition reward laws.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovRewardProcess {
    num_states: usize,
    /// Row-major `m x m`.
    transition: Vec<f64>,
    /// Row-major `m x m`; empty laws for transitions that never occur.
    rewards: Vec<RewardLaw>,
}

impl MarkovRewardProcess {
    /// Builds a process from its parts. Only shapes are checked here; call
    /// [`validate`](Self::validate) or [`validated`](Self::validated) for the
    /// stochastic invariants.
    pub fn new(
        transition: Vec<Vec<f64>>,
        rewards: impl IntoIterator<Item = ((usize, usize), RewardLaw)>,
    ) -> Result<Self> {
        let m = transition.len();
        if m == 0 {
            return Err(Error::Dimension("transition matrix has no rows".into()));
        }
        if let Some((i, row)) = transition.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(Error::Dimension(format!(
                "transition row {i} has {} entries, expected {m}",
                row.len()
            )));
        }
        let mut laws = vec![RewardLaw::default(); m * m];
        for ((i, j), law) in rewards {
            if i >= m || j >= m {
                return Err(Error::Dimension(format!(
                    "reward law for transition {i} -> {j} refers to a state outside 0..{m}"
                )));
            }
            laws[i * m + j] = law;
        }
        Ok(Self {
            num_states: m,
            transition: transition.into_iter().flatten().collect(),
            rewards: laws,
        })
    }

    /// Convenience constructor for deterministic rewards `reward[i][j]`.
    pub fn with_deterministic_rewards(transition: Vec<Vec<f64>>, reward: &[Vec<f64>]) -> Result<Self> {
        let m = transition.len();
        let mut laws = Vec::new();
        for i in 0..m {
            for j in 0..m {
                if transition[i].get(j).copied().unwrap_or(0.0) > 0.0 {
                    let value = reward
                        .get(i)
                        .and_then(|r| r.get(j))
                        .copied()
                        .ok_or_else(|| Error::Dimension(format!("missing reward[{i}][{j}]")))?;
                    laws.push(((i, j), RewardLaw::deterministic(value)));
                }
            }
        }
        Self::new(transition, laws)
    }

    /// Checks the invariants and returns `self` if they all hold.
    pub fn validated(self) -> Result<Self> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(self)
        } else {
            let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            Err(Error::InvalidMrp(msg.join("; ")))
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.transition[i * self.num_states + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.num_states;
        &self.transition[i * m..(i + 1) * m]
    }

    #[inline]
    pub fn reward_law(&self, i: usize, j: usize) -> &RewardLaw {
        &self.rewards[i * self.num_states + j]
    }

    /// Successors `j` with `P_ij > 0`.
    pub fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(j, _)| j)
    }

    /// Every reward value `r` with `P(R_ij = r) > 0` on some transition.
    pub fn reward_values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_states).flat_map(move |i| {
            self.successors(i)
                .flat_map(move |j| self.reward_law(i, j).support().map(|a| a.value))
        })
    }

    /// Returns every violated invariant; empty iff the process is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let m = self.num_states;
        let mut out = Vec::new();
        for i in 0..m {
            let row = self.row(i);
            for (j, &p) in row.iter().enumerate() {
                if !(p >= 0.0) {
                    out.push(Violation::NegativeTransition { row: i, col: j, value: p });
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
                out.push(Violation::RowSum { row: i, sum });
            }
            for j in 0..m {
                let law = self.reward_law(i, j);
                if row[j] > 0.0 && law.is_empty() {
                    out.push(Violation::MissingReward { from: i, to: j });
                    continue;
                }
                if law.is_empty() {
                    continue;
                }
                let mass: f64 = law.atoms().iter().map(|a| a.prob).sum();
                if !((mass - 1.0).abs() <= STOCHASTIC_TOL) {
                    out.push(Violation::RewardMass { from: i, to: j, sum: mass });
                }
                for a in law.atoms() {
                    if !(a.prob >= 0.0) {
                        out.push(Violation::NegativeRewardProb { from: i, to: j, prob: a.prob });
                    }
                    if !(0.0..=1.0).contains(&a.value) {
                        out.push(Violation::RewardOutOfRange { from: i, to: j, value: a.value });
                    }
                }
            }
        }
        // Graph properties are only meaningful once the entries are sane.
        if out.iter().all(|v| !matches!(v, Violation::NegativeTransition { .. })) {
            if !is_irreducible(self) {
                out.push(Violation::NotIrreducible);
            } else {
                let d = period(self);
                if d != 1 {
                    out.push(Violation::Periodic { period: d });
                }
            }
        }
        out
    }

    /// Scalar quantities only need a stochastic, irreducible chain; periodic
    /// chains still have a unique stationary law and Poisson solution.
    fn ensure_scalar_solvable(&self) -> Result<()> {
        match self
            .validate()
            .into_iter()
            .find(|v| !matches!(v, Violation::Periodic { .. }))
        {
            None => Ok(()),
            Some(v) => Err(Error::InvalidMrp(v.to_string())),
        }
    }

    /// Stationary distribution from the augmented system `(I - P^T + 1 1^T) mu = 1`,
    /// with lazy power iteration as a fallback when the direct solve misses `tol`.
    pub fn stationary_distribution(&self, tol: f64) -> Result<StationaryDistribution> {
        if !(tol > 0.0) {
            return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
        }
        self.ensure_scalar_solvable()?;
        let m = self.num_states;
        let a = DMatrix::from_fn(m, m, |r, c| {
            let id = if r == c { 1.0 } else { 0.0 };
            id - self.prob(c, r) + 1.0
        });
        let b = DVector::from_element(m, 1.0);
        let mut mu: Vec<f64> = match a.lu().solve(&b) {
            Some(x) => x.iter().copied().collect(),
            None => vec![1.0 / m as f64; m],
        };
        normalize_probability(&mut mu);
        if stationarity_defect(self, &mu) > tol {
            mu = self.power_iteration(mu, tol)?;
        }
        let mu_min = mu.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(StationaryDistribution { mu, mu_min })
    }

    const POWER_ITERATION_CAP: usize = 1_000_000;

    fn power_iteration(&self, mut mu: Vec<f64>, tol: f64) -> Result<Vec<f64>> {
        let m = self.num_states;
        let mut next = vec![0.0; m];
        for _ in 0..Self::POWER_ITERATION_CAP {
            // Lazy chain (I + P) / 2 has the same stationary law and no periodicity.
            for (j, slot) in next.iter_mut().enumerate() {
                let flow: f64 = (0..m).map(|i| mu[i] * self.prob(i, j)).sum();
                *slot = 0.5 * (mu[j] + flow);
            }
            std::mem::swap(&mut mu, &mut next);
            normalize_probability(&mut mu);
            if stationarity_defect(self, &mu) <= tol {
                return Ok(mu);
            }
        }
        Err(Error::NoConvergence {
            what: "stationary power iteration",
            cap: Self::POWER_ITERATION_CAP,
        })
    }

    /// `r_i = sum_j P_ij E[R_ij]`.
    pub fn expected_reward_vector(&self) -> Vec<f64> {
        (0..self.num_states)
            .map(|i| {
                self.successors(i)
                    .map(|j| self.prob(i, j) * self.reward_law(i, j).mean())
                    .sum()
            })
            .collect()
    }

    /// Long-run average reward `mu^T r`.
    pub fn gain(&self) -> Result<f64> {
        let st = self.stationary_distribution(1e-12)?;
        let r = self.expected_reward_vector();
        Ok(st.mu.iter().zip(&r).map(|(m, r)| m * r).sum())
    }

    /// Poisson solution pinned at `v[0] = 0`.
    pub fn solve_poisson(&self) -> Result<ScalarSolution> {
        self.solve_poisson_pinned(0)
    }

    /// Poisson solution pinned at `v[pin] = 0`.
    ///
    /// Solves `(I - P + 1 e_pin^T) v = r - gain * 1`; left-multiplying by `mu^T`
    /// shows the added column forces `v[pin] = 0`, and the matrix is regular
    /// for irreducible chains.
    pub fn solve_poisson_pinned(&self, pin: usize) -> Result<ScalarSolution> {
        let m = self.num_states;
        if pin >= m {
            return Err(Error::Dimension(format!("pin index {pin} outside 0..{m}")));
        }
        let gain = self.gain()?;
        let r = self.expected_reward_vector();
        let a = DMatrix::from_fn(m, m, |row, col| {
            let id = if row == col { 1.0 } else { 0.0 };
            let pinned = if col == pin { 1.0 } else { 0.0 };
            id - self.prob(row, col) + pinned
        });
        let b = DVector::from_iterator(m, r.iter().map(|ri| ri - gain));
        let v = a
            .lu()
            .solve(&b)
            .ok_or(Error::Singular("Poisson system (I - P + 1 e^T)"))?;
        let mut bias: Vec<f64> = v.iter().copied().collect();
        bias[pin] = 0.0;
        let sol = ScalarSolution {
            expected_reward: r,
            gain,
            bias,
        };
        if sol.poisson_residual(self) > 1e-8 {
            return Err(Error::Singular("Poisson residual above 1e-8"));
        }
        Ok(sol)
    }
}

fn normalize_probability(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// `||mu^T P - mu^T||_inf`.
fn stationarity_defect(mrp: &MarkovRewardProcess, mu: &[f64]) -> f64 {
    let m = mrp.num_states();
    (0..m)
        .map(|j| {
            let flow: f64 = (0..m).map(|i| mu[i] * mrp.prob(i, j)).sum();
            (flow - mu[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// Stationary law `mu` of the chain and its smallest entry.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub mu: Vec<f64>,
    pub mu_min: f64,
}

impl StationaryDistribution {
    pub fn defect(&self, mrp: &MarkovRewardProcess) -> f64 {
        stationarity_defect(mrp, &self.mu)
    }
}

/// Expected reward vector, gain and pinned bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSolution {
    pub expected_reward: Vec<f64>,
    pub gain: f64,
    pub bias: Vec<f64>,
}

impl ScalarSolution {
    /// `||v - (r - gain 1 + P v)||_inf`.
    pub fn poisson_residual(&self, mrp: &MarkovRewardProcess) -> f64 {
        let m = mrp.num_states();
        (0..m)
            .map(|i| {
                let pv: f64 = (0..m).map(|j| mrp.prob(i, j) * self.bias[j]).sum();
                (self.bias[i] - (self.expected_reward[i] - self.gain + pv)).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flip() -> MarkovRewardProcess {
        MarkovRewardProcess::with_deterministic_rewards(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            &[vec![0.0, 0.0], vec![1.0, 0.0]],
        )
        .unwrap()
    }

    fn two_state(a: f64, b: f64) -> MarkovRewardProcess {
        MarkovRewardProcess::with_deterministic_rewards(
            vec![vec![1.0 - a, a], vec![b, 1.0 - b]],
            &[vec![0.2, 0.4], vec![0.9, 0.1]],
        )
        .unwrap()
    }

    #[test]
    fn flip_chain_is_only_periodic() {
        let v = flip().validate();
        assert_eq!(v, vec![Violation::Periodic { period: 2 }]);
    }

    #[test]
    fn bad_row_sum_is_reported() {
        let mrp = MarkovRewardProcess::with_deterministic_rewards(
            vec![vec![0.5, 0.6], vec![0.5, 0.5]],
            &[vec![0.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        let v = mrp.validate();
        assert!(v.iter().any(|x| x.to_string() == "row 0 sums to 1.1"), "{v:?}");
    }

    #[test]
    fn identity_is_reducible() {
        let mrp = MarkovRewardProcess::with_deterministic_rewards(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            &[vec![0.5, 0.0], vec![0.0, 0.5]],
        )
        .unwrap();
        let v = mrp.validate();
        assert!(v.iter().any(|x| x.to_string() == "not irreducible"));
    }

    #[test]
    fn missing_and_out_of_range_rewards() {
        let mrp = MarkovRewardProcess::new(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![
                ((0, 0), RewardLaw::deterministic(1.5)),
                ((0, 1), RewardLaw::from_pairs(&[(0.1, 0.5), (0.2, 0.4)])),
                ((1, 0), RewardLaw::deterministic(0.0)),
            ],
        )
        .unwrap();
        let v = mrp.validate();
        assert!(v.contains(&Violation::MissingReward { from: 1, to: 1 }));
        assert!(v.contains(&Violation::RewardOutOfRange { from: 0, to: 0, value: 1.5 }));
        assert!(v.iter().any(|x| matches!(x, Violation::RewardMass { from: 0, to: 1, .. })));
    }

    #[test]
    fn two_state_stationary_law() {
        // mu proportional to (b, a).
        let st = two_state(0.3, 0.1).stationary_distribution(1e-12).unwrap();
        assert!((st.mu[0] - 0.25).abs() < 1e-12);
        assert!((st.mu[1] - 0.75).abs() < 1e-12);
        assert!((st.mu_min - 0.25).abs() < 1e-12);
    }

    #[test]
    fn stationary_rejects_reducible() {
        let mrp = MarkovRewardProcess::with_deterministic_rewards(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            &[vec![0.5, 0.0], vec![0.0, 0.5]],
        )
        .unwrap();
        assert!(matches!(
            mrp.stationary_distribution(1e-10),
            Err(Error::InvalidMrp(_))
        ));
    }

    #[test]
    fn flip_chain_scalars() {
        let mrp = flip();
        let st = mrp.stationary_distribution(1e-12).unwrap();
        assert_eq!(st.mu, vec![0.5, 0.5]);
        assert!((mrp.gain().unwrap() - 0.5).abs() < 1e-15);
        let sol = mrp.solve_poisson().unwrap();
        assert_eq!(sol.bias[0], 0.0);
        assert!((sol.bias[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn expected_reward_examples() {
        let mrp = MarkovRewardProcess::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![
                ((0, 1), RewardLaw::from_pairs(&[(0.2, 0.5), (0.8, 0.5)])),
                ((1, 0), RewardLaw::deterministic(1.0)),
            ],
        )
        .unwrap();
        let r = mrp.expected_reward_vector();
        assert!((r[0] - 0.5).abs() < 1e-15);
        assert_eq!(r[1], 1.0);
    }

    #[test]
    fn constant_rewards_have_constant_gain_and_zero_bias() {
        let p = vec![vec![0.2, 0.8], vec![0.6, 0.4]];
        let mrp = MarkovRewardProcess::with_deterministic_rewards(p, &[vec![0.3, 0.3], vec![0.3, 0.3]])
            .unwrap();
        assert!((mrp.gain().unwrap() - 0.3).abs() < 1e-14);
        let sol = mrp.solve_poisson().unwrap();
        assert!(sol.bias.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn uniform_chain_poisson() {
        // P = [[.5,.5],[.5,.5]], r = (0, 0.5): gain 0.25 and, since P v is constant,
        // v1 - v0 = r1 - r0.
        let mrp = MarkovRewardProcess::with_deterministic_rewards(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            &[vec![0.0, 0.0], vec![1.0, 0.0]],
        )
        .unwrap();
        let sol = mrp.solve_poisson().unwrap();
        assert!((sol.gain - 0.25).abs() < 1e-14);
        // v1 - v0 = r1 - r0 = 0.5 since P v is constant.
        assert_eq!(sol.bias[0], 0.0);
        assert!((sol.bias[1] - 0.5).abs() < 1e-12);
        assert!(sol.poisson_residual(&mrp) < 1e-12);
    }
}
