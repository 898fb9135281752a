//! The synchronous sample map: every state draws its own successor and reward.

use rand::Rng;

use crate::categorical::{AtomicLaw, ExactLawFamily};
use crate::error::{Error, Result};
use crate::mrp::MarkovRewardProcess;

/// One draw `(S'_i, R_i)` per state `i`, rewards raw.
#[derive(Debug, Clone, PartialEq)]
pub struct SynchronousSample {
    pub per_state: Vec<(usize, f64)>,
}

impl SynchronousSample {
    /// Draws successor and reward independently for every state.
    pub fn draw<R: Rng>(mrp: &MarkovRewardProcess, rng: &mut R) -> Self {
        let per_state = (0..mrp.num_states())
            .map(|i| {
                let j = pick(mrp.successors(i).map(|j| (j, mrp.prob(i, j))), rng.random());
                let r = pick(
                    mrp.reward_law(i, j).support().map(|a| (a.value, a.prob)),
                    rng.random(),
                );
                (j, r)
            })
            .collect();
        Self { per_state }
    }

    /// `P_{i S'_i} > 0` and `R_i` is an atom of the reward law on that transition.
    pub fn check_feasible(&self, mrp: &MarkovRewardProcess) -> Result<()> {
        let m = mrp.num_states();
        if self.per_state.len() != m {
            return Err(Error::InfeasibleSample(format!(
                "{} entries for {m} states",
                self.per_state.len()
            )));
        }
        for (i, &(j, r)) in self.per_state.iter().enumerate() {
            if j >= m || mrp.prob(i, j) <= 0.0 {
                return Err(Error::InfeasibleSample(format!("state {i}: successor {j} has zero probability")));
            }
            if !mrp.reward_law(i, j).support().any(|a| a.value == r) {
                return Err(Error::InfeasibleSample(format!(
                    "state {i}: reward {r} is not an atom of the law on {i} -> {j}"
                )));
            }
        }
        Ok(())
    }
}

fn pick<T: Copy>(items: impl Iterator<Item = (T, f64)>, u: f64) -> T {
    let mut acc = 0.0;
    let mut last = None;
    for (x, w) in items {
        acc += w;
        last = Some(x);
        if u < acc {
            return x;
        }
    }
    last.expect("rows and reward laws are nonempty")
}

/// `H_g(eta, Y)`: state `i` receives `eta_{S'_i}` translated by `R_i - g`.
pub fn synchronous_backup(
    eta: &ExactLawFamily,
    y: &SynchronousSample,
    g: f64,
    mrp: &MarkovRewardProcess,
) -> Result<ExactLawFamily> {
    y.check_feasible(mrp)?;
    if eta.num_states() != mrp.num_states() {
        return Err(Error::Dimension(format!(
            "law family has {} states, MRP has {}",
            eta.num_states(),
            mrp.num_states()
        )));
    }
    let laws: Vec<AtomicLaw> = y
        .per_state
        .iter()
        .map(|&(j, r)| eta.law(j).translate(r - g))
        .collect();
    ExactLawFamily::new(laws, 0.0)
}

/// Every synchronous sample with its product probability
/// `prod_i P_{i S'_i} nu_{i S'_i}(R_i)`.
pub fn enumerate_synchronous(mrp: &MarkovRewardProcess) -> Vec<(SynchronousSample, f64)> {
    let m = mrp.num_states();
    let choices: Vec<Vec<(usize, f64, f64)>> = (0..m)
        .map(|i| {
            mrp.successors(i)
                .flat_map(|j| {
                    mrp.reward_law(i, j)
                        .support()
                        .map(move |a| (j, a.value, mrp.prob(i, j) * a.prob))
                })
                .collect()
        })
        .collect();
    let mut out = vec![(Vec::with_capacity(m), 1.0)];
    for opts in &choices {
        out = out
            .into_iter()
            .flat_map(|(prefix, w): (Vec<(usize, f64)>, f64)| {
                opts.iter().map(move |&(j, r, q)| {
                    let mut next = prefix.clone();
                    next.push((j, r));
                    (next, w * q)
                })
            })
            .collect();
    }
    out.into_iter()
        .map(|(per_state, w)| (SynchronousSample { per_state }, w))
        .collect()
}
