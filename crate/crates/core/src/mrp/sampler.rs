//! Seeded transition samplers.
//!
//! Streams come from ChaCha8 (`rand_chacha::ChaCha8Rng`), a counter-based
//! generator whose output is specified independently of platform, so a
//! `(config, seed)` pair replays bit-exactly everywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MarkovRewardProcess;
use crate::error::{Error, Result};

/// One observed step `(s, r, s')`; `centered` marks `r` as `R - g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from_state: usize,
    pub reward: f64,
    pub to_state: usize,
    pub centered: bool,
}

impl Transition {
    pub fn raw(from_state: usize, reward: f64, to_state: usize) -> Self {
        Self {
            from_state,
            reward,
            to_state,
            centered: false,
        }
    }

    /// Replaces the reward by `reward - g`. Expects a raw transition.
    pub fn center(self, g: f64) -> Self {
        debug_assert!(!self.centered, "transition already centered");
        Self {
            reward: self.reward - g,
            centered: true,
            ..self
        }
    }

    /// Indices in range and reward in `[0, 1]` (raw) or `[-1, 1]` (centered).
    pub fn is_valid_for(&self, mrp: &MarkovRewardProcess) -> bool {
        let m = mrp.num_states();
        let lo = if self.centered { -1.0 } else { 0.0 };
        self.from_state < m && self.to_state < m && (lo..=1.0).contains(&self.reward)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplingMode {
    /// `S ~ state_law` independently at every call.
    Iid { state_law: Vec<f64> },
    /// One trajectory of the chain started at `initial_state`.
    Markov { initial_state: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub mode: SamplingMode,
    pub seed: u64,
}

/// Draws raw transitions from a [`MarkovRewardProcess`].
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    mrp: &'a MarkovRewardProcess,
    rng: ChaCha8Rng,
    /// Cumulative state law (IID mode only).
    state_cdf: Option<Vec<f64>>,
    current: usize,
    /// Per row: successors with their cumulative probabilities.
    rows: Vec<Vec<(usize, f64)>>,
}

impl<'a> Sampler<'a> {
    pub fn new(mrp: &'a MarkovRewardProcess, config: &SamplerConfig) -> Result<Self> {
        let m = mrp.num_states();
        let (state_cdf, current) = match &config.mode {
            SamplingMode::Iid { state_law } => {
                if state_law.len() != m {
                    return Err(Error::Dimension(format!(
                        "state law has {} entries for {m} states",
                        state_law.len()
                    )));
                }
                if state_law.iter().any(|&x| !(x > 0.0)) {
                    return Err(Error::Domain("i.i.d. state law needs min_i rho_i > 0".into()));
                }
                let s: f64 = state_law.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::Domain(format!("state law sums to {s}, expected 1")));
                }
                (Some(cumulative(state_law.iter().copied())), 0)
            }
            SamplingMode::Markov { initial_state } => {
                if *initial_state >= m {
                    return Err(Error::Dimension(format!(
                        "initial state {initial_state} outside 0..{m}"
                    )));
                }
                (None, *initial_state)
            }
        };
        let rows = (0..m)
            .map(|i| {
                let succ: Vec<usize> = mrp.successors(i).collect();
                let cdf = cumulative(succ.iter().map(|&j| mrp.prob(i, j)));
                succ.into_iter().zip(cdf).collect()
            })
            .collect();
        Ok(Self {
            mrp,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            state_cdf,
            current,
            rows,
        })
    }

    /// Draws the next raw transition.
    pub fn sample(&mut self) -> Transition {
        let from = match &self.state_cdf {
            Some(cdf) => pick(cdf, self.rng.random::<f64>()),
            None => self.current,
        };
        let row = &self.rows[from];
        let u: f64 = self.rng.random();
        let to = row[pick_by(row.len(), |k| row[k].1, u)].0;
        let law = self.mrp.reward_law(from, to);
        let reward = if law.atoms().len() == 1 {
            law.atoms()[0].value
        } else {
            let u: f64 = self.rng.random();
            let mut acc = 0.0;
            let mut value = law.atoms().last().map_or(0.0, |a| a.value);
            for a in law.support() {
                acc += a.prob;
                if u < acc {
                    value = a.value;
                    break;
                }
            }
            value
        };
        self.current = to;
        Transition::raw(from, reward, to)
    }

    /// State the next Markov-mode sample departs from.
    pub fn current_state(&self) -> usize {
        self.current
    }
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn pick(cdf: &[f64], u: f64) -> usize {
    pick_by(cdf.len(), |k| cdf[k], u)
}

/// First index whose cumulative weight exceeds `u`; the last index absorbs
/// rounding in the final partial sum.
fn pick_by(n: usize, cdf: impl Fn(usize) -> f64, u: f64) -> usize {
    (0..n).find(|&k| u < cdf(k)).unwrap_or(n - 1)
}
