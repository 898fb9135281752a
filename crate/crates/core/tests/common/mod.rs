#![allow(dead_code)]

use qcat::categorical::SupportGrid;
use qcat::instances::random_mrp;
use qcat::operators::OperatorContext;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-12;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Grid on `[-3, 3]` with a random atom count, wide enough for centred bias laws.
pub fn random_grid(rng: &mut ChaCha8Rng) -> SupportGrid {
    let d = rng.random_range(3..40);
    SupportGrid::from_range(-3.0, 3.0, d).unwrap()
}

/// Random MRP on 1..=6 states bound to a random grid.
pub fn random_ctx(rng: &mut ChaCha8Rng) -> OperatorContext {
    let m = rng.random_range(1..=6);
    let density = rng.random::<f64>();
    let mrp = random_mrp(rng, m, density, 3);
    let grid = random_grid(rng);
    OperatorContext::new(mrp, grid).unwrap()
}

pub fn random_state_law(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..m).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}
