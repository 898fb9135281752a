//! Categorical representations on a fixed uniform grid.
//!
//! A law is stored as a coefficient vector `p` on the atoms
//! `theta_k = theta_1 + (k - 1) * stride`. A [`CoeffFamily`] holds one such
//! vector per state and stands for the whole class of state-indexed laws
//! `sum_k p_{i,k} delta_{theta_k + c}` obtained by any common shift `c`.
//!
//! Distances use the coordinate Cramér metric
//! `sqrt(stride * sum_{k<d} (F_p(theta_k) - F_q(theta_k))^2)`, which equals the
//! L2 distance between the CDFs of the represented laws for every common shift.

mod exact;
mod io;

pub use exact::{cramer_distance, equal_up_to_translation, AtomicLaw, ExactLawFamily, MERGE_TOL};
pub use io::{read_family_csv, write_family_csv};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Negative entries down to this are rounding noise and get clamped to zero.
pub const CLAMP_TOL: f64 = 1e-12;
/// Accepted deviation of a coefficient vector's total mass from one.
pub const MASS_TOL: f64 = 1e-10;

/// Uniform categorical support `theta_1 < ... < theta_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportGrid {
    theta_1: f64,
    stride: f64,
    num_atoms: usize,
}

/// `theta_min`, `theta_max`, `num_atoms` as they appear in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub theta_min: f64,
    pub theta_max: f64,
    pub num_atoms: usize,
}

impl SupportGrid {
    pub fn new(theta_1: f64, stride: f64, num_atoms: usize) -> Result<Self> {
        if num_atoms < 2 {
            return Err(Error::Domain(format!("grid needs at least 2 atoms, got {num_atoms}")));
        }
        if !(stride > 0.0) || !stride.is_finite() || !theta_1.is_finite() {
            return Err(Error::Domain(format!(
                "grid needs finite theta_1 and positive stride (theta_1 = {theta_1}, stride = {stride})"
            )));
        }
        Ok(Self {
            theta_1,
            stride,
            num_atoms,
        })
    }

    /// Grid with `num_atoms` atoms spanning `[theta_min, theta_max]`.
    pub fn from_range(theta_min: f64, theta_max: f64, num_atoms: usize) -> Result<Self> {
        if !(theta_max > theta_min) {
            return Err(Error::Domain(format!(
                "theta_max ({theta_max}) must exceed theta_min ({theta_min})"
            )));
        }
        if num_atoms < 2 {
            return Err(Error::Domain(format!("grid needs at least 2 atoms, got {num_atoms}")));
        }
        Self::new(theta_min, (theta_max - theta_min) / (num_atoms - 1) as f64, num_atoms)
    }

    pub fn from_config(cfg: &GridConfig) -> Result<Self> {
        Self::from_range(cfg.theta_min, cfg.theta_max, cfg.num_atoms)
    }

    pub fn config(&self) -> GridConfig {
        GridConfig {
            theta_min: self.theta_min(),
            theta_max: self.theta_max(),
            num_atoms: self.num_atoms,
        }
    }

    /// Grid of `num_atoms` atoms centred on the range of `values`, widened by
    /// `margin` times the spread on each side.
    pub fn bracketing(values: &[f64], margin: f64, num_atoms: usize) -> Result<Self> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Domain("cannot bracket an empty or non-finite set".into()));
        }
        let spread = (hi - lo).max(f64::EPSILON);
        Self::from_range(lo - margin * spread, hi + margin * spread, num_atoms)
    }

    #[inline]
    pub fn num_atoms(&self) -> usize {
        self.num_atoms
    }

    #[inline]
    pub fn stride(&self) -> f64 {
        self.stride
    }

    /// Atom `k`, zero-based.
    #[inline]
    pub fn atom(&self, k: usize) -> f64 {
        self.theta_1 + k as f64 * self.stride
    }

    pub fn atoms(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_atoms).map(|k| self.atom(k))
    }

    #[inline]
    pub fn theta_min(&self) -> f64 {
        self.theta_1
    }

    #[inline]
    pub fn theta_max(&self) -> f64 {
        self.atom(self.num_atoms - 1)
    }

    /// `sqrt(theta_d - theta_1)`: the sup-Cramér diameter of the coefficient simplex.
    pub fn diameter_metric(&self) -> f64 {
        (self.theta_max() - self.theta_min()).sqrt()
    }

    /// `stride^{-1/2}`, the Lipschitz constant of the shift-project map in its shift.
    pub fn shift_lipschitz(&self) -> f64 {
        self.stride.sqrt().recip()
    }

    /// The same grid translated by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            theta_1: self.theta_1 + c,
            ..*self
        }
    }

    /// Adds `mass` at `x` into `out` with linear interpolation and edge clipping.
    #[inline]
    fn deposit(&self, x: f64, mass: f64, out: &mut [f64]) {
        let d = self.num_atoms;
        if x <= self.theta_1 {
            out[0] += mass;
        } else if x >= self.theta_max() {
            out[d - 1] += mass;
        } else {
            let u = (x - self.theta_1) / self.stride;
            let k = (u.floor() as usize).min(d - 2);
            let upper = (u - k as f64).clamp(0.0, 1.0);
            out[k] += mass * (1.0 - upper);
            out[k + 1] += mass * upper;
        }
    }
}

/// Coefficient vector on a grid: a point of the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Coeff {
    weights: Vec<f64>,
}

impl Coeff {
    /// Accepts weights within [`CLAMP_TOL`] of nonnegative and [`MASS_TOL`] of
    /// unit mass, then clamps and renormalizes.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::Dimension(format!(
                "coefficient vector needs at least 2 entries, got {}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= -CLAMP_TOL) || !w.is_finite()) {
            return Err(Error::Domain(format!("coefficient {w} is negative or not finite")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(Error::Domain(format!("coefficients sum to {sum}, expected 1")));
        }
        // Already on the simplex up to summation rounding: keep the bits, so
        // written families read back unchanged.
        let rounding = weights.len() as f64 * f64::EPSILON;
        if weights.iter().all(|&w| w >= 0.0) && (sum - 1.0).abs() <= rounding {
            return Ok(Self { weights });
        }
        Ok(Self::from_hygiene(weights))
    }

    /// Clamp-and-renormalize after arithmetic that is known to stay on the simplex.
    pub(crate) fn from_hygiene(mut weights: Vec<f64>) -> Self {
        simplex_hygiene(&mut weights);
        Self { weights }
    }

    pub fn dirac(num_atoms: usize, k: usize) -> Self {
        let mut w = vec![0.0; num_atoms];
        w[k] = 1.0;
        Self { weights: w }
    }

    pub fn uniform(num_atoms: usize) -> Self {
        Self {
            weights: vec![1.0 / num_atoms as f64; num_atoms],
        }
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Raw access for in-place operators, which restore the simplex afterwards.
    #[inline]
    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `F_p(theta_k)` for `k = 1..d-1`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.weights[..self.weights.len() - 1]
            .iter()
            .map(|w| {
                acc += w;
                acc.min(1.0)
            })
            .collect()
    }

    /// `sum_k p_k (theta_k + shift)`.
    pub fn mean(&self, grid: &SupportGrid, shift: f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(k, w)| w * grid.atom(k))
            .sum::<f64>()
            + shift
    }

    /// `(1 - alpha) self + alpha target`, in place.
    pub fn relax_toward(&mut self, target: &[f64], alpha: f64) {
        debug_assert_eq!(target.len(), self.weights.len());
        for (w, t) in self.weights.iter_mut().zip(target) {
            *w += alpha * (t - *w);
        }
        simplex_hygiene(&mut self.weights);
    }
}

/// Clamps tiny negatives to zero and renormalizes to unit mass.
pub fn simplex_hygiene(w: &mut [f64]) {
    let mut sum = 0.0;
    for x in w.iter_mut() {
        if *x < 0.0 {
            debug_assert!(*x >= -1e-9, "simplex drift {x}");
            *x = 0.0;
        }
        sum += *x;
    }
    if sum != 1.0 && sum > 0.0 {
        w.iter_mut().for_each(|x| *x /= sum);
    }
}

/// One coefficient vector per state.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffFamily {
    blocks: Vec<Coeff>,
}

impl CoeffFamily {
    pub fn new(blocks: Vec<Coeff>) -> Result<Self> {
        let Some(d) = blocks.first().map(Coeff::len) else {
            return Err(Error::Dimension("coefficient family has no states".into()));
        };
        if blocks.iter().any(|b| b.len() != d) {
            return Err(Error::Dimension("coefficient blocks differ in length".into()));
        }
        Ok(Self { blocks })
    }

    pub fn uniform(num_states: usize, num_atoms: usize) -> Self {
        Self {
            blocks: vec![Coeff::uniform(num_atoms); num_states],
        }
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.blocks.len()
    }

    #[inline]
    pub fn num_atoms(&self) -> usize {
        self.blocks[0].len()
    }

    #[inline]
    pub fn block(&self, i: usize) -> &Coeff {
        &self.blocks[i]
    }

    #[inline]
    pub fn block_mut(&mut self, i: usize) -> &mut Coeff {
        &mut self.blocks[i]
    }

    pub fn blocks(&self) -> &[Coeff] {
        &self.blocks
    }

    pub fn set_block(&mut self, i: usize, c: Coeff) {
        debug_assert_eq!(c.len(), self.num_atoms());
        self.blocks[i] = c;
    }

    /// Largest absolute coefficient difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .flat_map(|(a, b)| a.weights.iter().zip(&b.weights).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Linear-interpolation projection of a finite atomic law `(location, mass)` onto `grid`.
pub fn project(law: &[(f64, f64)], grid: &SupportGrid) -> Result<Coeff> {
    if law.is_empty() {
        return Err(Error::EmptyLaw);
    }
    let mut out = vec![0.0; grid.num_atoms()];
    for &(x, mass) in law {
        if !x.is_finite() {
            return Err(Error::Domain(format!("atom location {x} is not finite")));
        }
        grid.deposit(x, mass, &mut out);
    }
    Coeff::new(out)
}

/// The shift-project map `L_b`: translate the law of `p` by `b`, project back onto `grid`.
pub fn shift_project(p: &Coeff, b: f64, grid: &SupportGrid) -> Coeff {
    let mut out = vec![0.0; grid.num_atoms()];
    shift_project_into(p.weights(), b, grid, &mut out);
    Coeff::from_hygiene(out)
}

/// Accumulates `scale * L_b p` into `out` without allocating.
pub(crate) fn shift_project_accumulate(p: &[f64], b: f64, grid: &SupportGrid, scale: f64, out: &mut [f64]) {
    for (k, &w) in p.iter().enumerate() {
        if w != 0.0 {
            grid.deposit(grid.atom(k) + b, scale * w, out);
        }
    }
}

/// Writes `L_b p` into `out` (overwriting it), without hygiene.
pub(crate) fn shift_project_into(p: &[f64], b: f64, grid: &SupportGrid, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    shift_project_accumulate(p, b, grid, 1.0, out);
}

fn check_same_len(p: &Coeff, q: &Coeff, grid: &SupportGrid) -> Result<()> {
    if p.len() != q.len() || p.len() != grid.num_atoms() {
        return Err(Error::Dimension(format!(
            "coefficient lengths {} and {} on a grid of {} atoms",
            p.len(),
            q.len(),
            grid.num_atoms()
        )));
    }
    Ok(())
}

/// Coordinate Cramér metric between two coefficient vectors on `grid`.
pub fn cramer(p: &Coeff, q: &Coeff, grid: &SupportGrid) -> Result<f64> {
    check_same_len(p, q, grid)?;
    Ok(cramer_unchecked(p.weights(), q.weights(), grid.stride()))
}

#[inline]
pub(crate) fn cramer_unchecked(p: &[f64], q: &[f64], stride: f64) -> f64 {
    let mut fp = 0.0;
    let mut fq = 0.0;
    let mut acc = 0.0;
    for k in 0..p.len() - 1 {
        fp += p[k];
        fq += q[k];
        let diff = fp - fq;
        acc += diff * diff;
    }
    (stride * acc).sqrt()
}

/// Supremum over states of the coordinate Cramér metric.
pub fn cramer_sup(p: &CoeffFamily, q: &CoeffFamily, grid: &SupportGrid) -> Result<f64> {
    if p.num_states() != q.num_states() {
        return Err(Error::Dimension(format!(
            "families have {} and {} states",
            p.num_states(),
            q.num_states()
        )));
    }
    let mut best = 0.0f64;
    for (a, b) in p.blocks().iter().zip(q.blocks()) {
        best = best.max(cramer(a, b, grid)?);
    }
    Ok(best)
}

/// Common shift `c` minimising `sum_i (mean(A_i) + c - mean(B_i))^2`.
pub fn align_common_shift(a: &CoeffFamily, b: &CoeffFamily, grid: &SupportGrid) -> f64 {
    let m = a.num_states().min(b.num_states());
    if m == 0 {
        return 0.0;
    }
    (0..m)
        .map(|i| b.block(i).mean(grid, 0.0) - a.block(i).mean(grid, 0.0))
        .sum::<f64>()
        / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3() -> SupportGrid {
        SupportGrid::from_range(0.0, 2.0, 3).unwrap()
    }

    fn c(w: &[f64]) -> Coeff {
        Coeff::new(w.to_vec()).unwrap()
    }

    #[test]
    fn grid_basics() {
        let g = SupportGrid::from_range(-1.0, 1.0, 5).unwrap();
        assert_eq!(g.stride(), 0.5);
        assert_eq!(g.atom(4), 1.0);
        assert!((g.diameter_metric() - 2f64.sqrt()).abs() < 1e-15);
        assert!(SupportGrid::from_range(1.0, 1.0, 5).is_err());
        assert!(SupportGrid::from_range(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn projection_examples() {
        let g = grid3();
        assert_eq!(project(&[(1.0, 1.0)], &g).unwrap().weights(), &[0.0, 1.0, 0.0]);
        assert_eq!(project(&[(-5.0, 1.0)], &g).unwrap().weights(), &[1.0, 0.0, 0.0]);
        assert_eq!(project(&[(0.5, 1.0)], &g).unwrap().weights(), &[0.5, 0.5, 0.0]);
        assert_eq!(project(&[(7.0, 1.0)], &g).unwrap().weights(), &[0.0, 0.0, 1.0]);
        assert!(matches!(project(&[], &g), Err(Error::EmptyLaw)));
    }

    #[test]
    fn shift_project_examples() {
        let g = grid3();
        let p = c(&[0.2, 0.3, 0.5]);
        assert_eq!(shift_project(&p, 0.0, &g), p);
        assert_eq!(shift_project(&c(&[1.0, 0.0, 0.0]), 1.0, &g).weights(), &[0.0, 1.0, 0.0]);
        let half = SupportGrid::from_range(0.0, 1.0, 3).unwrap();
        assert_eq!(shift_project(&c(&[0.0, 1.0, 0.0]), 0.7, &half).weights(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn cramer_examples() {
        let unit = SupportGrid::from_range(0.0, 1.0, 2).unwrap();
        assert_eq!(cramer(&c(&[1.0, 0.0]), &c(&[0.0, 1.0]), &unit).unwrap(), 1.0);
        let half = SupportGrid::from_range(0.0, 1.0, 3).unwrap();
        let d = cramer(&c(&[1.0, 0.0, 0.0]), &c(&[0.0, 0.0, 1.0]), &half).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        let p = c(&[0.1, 0.6, 0.3]);
        assert_eq!(cramer(&p, &p, &half).unwrap(), 0.0);
        assert!(cramer(&p, &c(&[0.5, 0.5]), &half).is_err());
    }

    #[test]
    fn cramer_sup_picks_differing_block() {
        let g = grid3();
        let a = CoeffFamily::new(vec![c(&[1.0, 0.0, 0.0]), c(&[0.0, 1.0, 0.0])]).unwrap();
        let mut b = a.clone();
        assert_eq!(cramer_sup(&a, &b, &g).unwrap(), 0.0);
        b.set_block(1, c(&[0.0, 0.0, 1.0]));
        let expect = cramer(a.block(1), b.block(1), &g).unwrap();
        assert_eq!(cramer_sup(&a, &b, &g).unwrap(), expect);
        let short = CoeffFamily::new(vec![c(&[1.0, 0.0, 0.0])]).unwrap();
        assert!(cramer_sup(&a, &short, &g).is_err());
    }

    #[test]
    fn cumulative_examples() {
        assert_eq!(c(&[1.0, 0.0, 0.0]).cumulative(), vec![1.0, 1.0]);
        assert_eq!(c(&[0.0, 0.0, 1.0]).cumulative(), vec![0.0, 0.0]);
        let u = Coeff::uniform(3).cumulative();
        assert!((u[0] - 1.0 / 3.0).abs() < 1e-15 && (u[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mean_examples() {
        let g = grid3();
        assert_eq!(Coeff::dirac(3, 1).mean(&g, 0.0), 1.0);
        assert!((Coeff::uniform(3).mean(&g, 0.0) - 1.0).abs() < 1e-15);
        let p = c(&[0.2, 0.3, 0.5]);
        assert!((p.mean(&g, 0.4) - (p.mean(&g, 0.0) + 0.4)).abs() < 1e-15);
    }

    #[test]
    fn align_examples() {
        let g = SupportGrid::from_range(0.0, 1.0, 11).unwrap();
        let a = CoeffFamily::new(vec![Coeff::dirac(11, 2), Coeff::dirac(11, 5)]).unwrap();
        assert_eq!(align_common_shift(&a, &a, &g), 0.0);
        let b = CoeffFamily::new(vec![Coeff::dirac(11, 4), Coeff::dirac(11, 7)]).unwrap();
        assert!((align_common_shift(&a, &b, &g) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn coeff_validation_and_hygiene() {
        assert!(Coeff::new(vec![0.5, 0.6]).is_err());
        assert!(Coeff::new(vec![-0.1, 1.1]).is_err());
        let p = Coeff::new(vec![-1e-13, 1.0 + 1e-13]).unwrap();
        assert_eq!(p.weights()[0], 0.0);
        assert!((p.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
