//! Random instances for property tests and randomized checks.

use rand::Rng;

use crate::categorical::{AtomicLaw, Coeff, CoeffFamily, ExactLawFamily};
use crate::mrp::{MarkovRewardProcess, RewardLaw};

/// Random irreducible, aperiodic MRP on `m` states.
///
/// Every state has the edge `i -> i + 1 (mod m)` and state 0 has a self-loop,
/// plus each other edge independently with probability `density`. Each
/// transition carries one or up to `max_atoms` reward atoms in `[0, 1]`.
pub fn random_mrp<R: Rng>(rng: &mut R, m: usize, density: f64, max_atoms: usize) -> MarkovRewardProcess {
    let mut transition = vec![vec![0.0; m]; m];
    let mut laws = Vec::new();
    for (i, row) in transition.iter_mut().enumerate() {
        for (j, p) in row.iter_mut().enumerate() {
            let forced = j == (i + 1) % m || (i == 0 && j == 0);
            if forced || rng.random::<f64>() < density {
                *p = 0.05 + rng.random::<f64>();
            }
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= s);
        // Push the rounding residue onto the largest entry.
        let resid = 1.0 - row.iter().sum::<f64>();
        let jmax = (0..m).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(0);
        row[jmax] += resid;
        for j in 0..m {
            if row[j] > 0.0 {
                laws.push(((i, j), random_reward_law(rng, max_atoms)));
            }
        }
    }
    MarkovRewardProcess::new(transition, laws).expect("shapes are consistent by construction")
}

fn random_reward_law<R: Rng>(rng: &mut R, max_atoms: usize) -> RewardLaw {
    let n = rng.random_range(1..=max_atoms.max(1));
    if n == 1 {
        return RewardLaw::deterministic(rng.random());
    }
    let w: Vec<f64> = (0..n).map(|_| 0.1 + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    let mut pairs: Vec<(f64, f64)> = w.iter().map(|x| (rng.random::<f64>(), x / s)).collect();
    let resid = 1.0 - pairs.iter().map(|p| p.1).sum::<f64>();
    pairs[0].1 += resid;
    RewardLaw::from_pairs(&pairs)
}

/// Random point of the simplex; about a third of draws are sparse.
pub fn random_coeff<R: Rng>(rng: &mut R, d: usize) -> Coeff {
    let sparse = rng.random::<f64>() < 0.3;
    let mut w: Vec<f64> = (0..d)
        .map(|_| {
            if sparse && rng.random::<f64>() < 0.7 {
                0.0
            } else {
                -rng.random::<f64>().max(f64::MIN_POSITIVE).ln()
            }
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        let k = rng.random_range(0..d);
        w[k] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    Coeff::from_hygiene(w)
}

pub fn random_family<R: Rng>(rng: &mut R, m: usize, d: usize) -> CoeffFamily {
    CoeffFamily::new((0..m).map(|_| random_coeff(rng, d)).collect()).expect("nonempty, equal lengths")
}

/// Random finitely supported law with `1..=max_atoms` atoms in `[lo, hi]`.
pub fn random_atomic_law<R: Rng>(rng: &mut R, max_atoms: usize, lo: f64, hi: f64) -> AtomicLaw {
    let n = rng.random_range(1..=max_atoms.max(1));
    let w: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    let atoms = w
        .iter()
        .map(|x| (lo + (hi - lo) * rng.random::<f64>(), x / s))
        .collect();
    AtomicLaw::canonical(atoms, crate::categorical::MERGE_TOL)
}

pub fn random_law_family<R: Rng>(rng: &mut R, m: usize, max_atoms: usize) -> ExactLawFamily {
    let laws = (0..m).map(|_| random_atomic_law(rng, max_atoms, -1.0, 1.0)).collect();
    ExactLawFamily::new(laws, rng.random_range(-1.0..1.0)).expect("nonempty family")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_instances_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let m = rng.random_range(1..=5);
            let mrp = random_mrp(&mut rng, m, 0.4, 2);
            assert!(mrp.validate().is_empty(), "{:?}", mrp.validate());
            let p = random_family(&mut rng, m, 11);
            for b in p.blocks() {
                assert!((b.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
