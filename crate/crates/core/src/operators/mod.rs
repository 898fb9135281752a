//! Distributional operators on law families and on coefficient families.
//!
//! `T_g` acts on exact laws: state `i` receives the mixture over successors
//! `j` and reward atoms `r` of state `j`'s law translated by `r - g`. `G_g` is
//! its blockwise projection onto the grid, and `G = G_{gain}` is the
//! correctly centred operator. Every expectation here is an exact finite sum.

mod synchronous;

pub use synchronous::{enumerate_synchronous, synchronous_backup, SynchronousSample};

use crate::categorical::{
    cramer_sup, cramer_unchecked, shift_project_accumulate, shift_project_into, simplex_hygiene, AtomicLaw,
    Coeff, CoeffFamily, ExactLawFamily, SupportGrid, MERGE_TOL,
};
use crate::error::{Error, Result};
use crate::mrp::{MarkovRewardProcess, Transition};

/// One term of the one-step kernel: successor, probability `P_ij nu(r)`, reward `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct KernelTerm {
    to: usize,
    weight: f64,
    reward: f64,
}

/// An MRP bound to a grid, with its gain and stationary law cached.
#[derive(Debug, Clone)]
pub struct OperatorContext {
    mrp: MarkovRewardProcess,
    grid: SupportGrid,
    gain_ref: f64,
    mu: Vec<f64>,
    kernel: Vec<Vec<KernelTerm>>,
}

impl OperatorContext {
    /// Validates `mrp` (periodicity aside) and solves for its gain and stationary law.
    pub fn new(mrp: MarkovRewardProcess, grid: SupportGrid) -> Result<Self> {
        let violations: Vec<String> = mrp
            .validate()
            .into_iter()
            .filter(|v| !matches!(v, crate::mrp::Violation::Periodic { .. }))
            .map(|v| v.to_string())
            .collect();
        if !violations.is_empty() {
            return Err(Error::InvalidMrp(violations.join("; ")));
        }
        let mu = mrp.stationary_distribution(1e-12)?.mu;
        let r = mrp.expected_reward_vector();
        let gain_ref = mu.iter().zip(&r).map(|(a, b)| a * b).sum();
        let kernel = (0..mrp.num_states())
            .map(|i| {
                mrp.successors(i)
                    .flat_map(|j| {
                        let pij = mrp.prob(i, j);
                        mrp.reward_law(i, j).support().map(move |a| KernelTerm {
                            to: j,
                            weight: pij * a.prob,
                            reward: a.value,
                        })
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            mrp,
            grid,
            gain_ref,
            mu,
            kernel,
        })
    }

    pub fn mrp(&self) -> &MarkovRewardProcess {
        &self.mrp
    }

    pub fn grid(&self) -> &SupportGrid {
        &self.grid
    }

    pub fn num_states(&self) -> usize {
        self.mrp.num_states()
    }

    /// The gain `mu^T r`.
    pub fn gain_ref(&self) -> f64 {
        self.gain_ref
    }

    /// The stationary distribution.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn mu_min(&self) -> f64 {
        self.mu.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn check_family(&self, p: &CoeffFamily) -> Result<()> {
        if p.num_states() != self.num_states() || p.num_atoms() != self.grid.num_atoms() {
            return Err(Error::Dimension(format!(
                "family is {}x{}, context expects {}x{}",
                p.num_states(),
                p.num_atoms(),
                self.num_states(),
                self.grid.num_atoms()
            )));
        }
        Ok(())
    }

    /// `T_g` on exact laws. The output keeps `eta`'s common shift; coincident
    /// atoms are merged within [`MERGE_TOL`].
    pub fn apply_t_g(&self, eta: &ExactLawFamily, g: f64) -> Result<ExactLawFamily> {
        if eta.num_states() != self.num_states() {
            return Err(Error::Dimension(format!(
                "law family has {} states, MRP has {}",
                eta.num_states(),
                self.num_states()
            )));
        }
        let c = eta.common_shift();
        let relative: Vec<AtomicLaw> = eta.absolute().iter().map(|l| l.translate(-c)).collect();
        let laws = self
            .kernel
            .iter()
            .map(|terms| {
                let atoms = terms
                    .iter()
                    .flat_map(|t| {
                        relative[t.to]
                            .atoms()
                            .iter()
                            .map(move |&(x, w)| (x + t.reward - g, t.weight * w))
                    })
                    .collect();
                AtomicLaw::canonical(atoms, MERGE_TOL)
            })
            .collect();
        ExactLawFamily::new(laws, c)
    }

    /// `G_g(p)`: block `i` is `sum_j P_ij E[L_{R_ij - g} p_j]`.
    pub fn apply_g_g(&self, p: &CoeffFamily, g: f64) -> Result<CoeffFamily> {
        self.check_family(p)?;
        let mut out = p.clone();
        self.apply_g_g_into(p, g, &mut out);
        Ok(out)
    }

    /// `G_g(p)` written into `out`, which must have `p`'s shape.
    pub fn apply_g_g_into(&self, p: &CoeffFamily, g: f64, out: &mut CoeffFamily) {
        for (i, terms) in self.kernel.iter().enumerate() {
            let buf = out.block_mut(i).weights_mut();
            buf.iter_mut().for_each(|x| *x = 0.0);
            for t in terms {
                shift_project_accumulate(p.block(t.to).weights(), t.reward - g, &self.grid, t.weight, buf);
            }
            simplex_hygiene(buf);
        }
    }

    /// `G(p) = G_{gain}(p)`.
    pub fn apply_g(&self, p: &CoeffFamily) -> Result<CoeffFamily> {
        self.apply_g_g(p, self.gain_ref)
    }

    /// `h_rho^{(g)}(p)`: block `i` is `(1 - rho_i) p_i + rho_i G_g(p)_i`.
    pub fn mean_field(&self, p: &CoeffFamily, rho: &[f64], g: f64) -> Result<CoeffFamily> {
        check_state_law(rho, self.num_states())?;
        let mut out = self.apply_g_g(p, g)?;
        for (i, &r) in rho.iter().enumerate() {
            let mut b = p.block(i).clone();
            b.relax_toward(out.block(i).weights(), r);
            out.set_block(i, b);
        }
        Ok(out)
    }

    /// `H(p, y)`: block `s` becomes `L_b p_{s'}` for a centred sample `y = (s, b, s')`.
    pub fn one_sample_backup(&self, p: &CoeffFamily, t: &Transition) -> Result<CoeffFamily> {
        if !t.centered {
            return Err(Error::Centering {
                expected: "centered",
                found: "raw",
            });
        }
        self.check_family(p)?;
        self.check_transition(t)?;
        let mut out = p.clone();
        let mut buf = vec![0.0; self.grid.num_atoms()];
        shift_project_into(p.block(t.to_state).weights(), t.reward, &self.grid, &mut buf);
        out.set_block(t.from_state, Coeff::from_hygiene(buf));
        Ok(out)
    }

    /// `H_g(p, y)` for a raw sample: block `s` becomes `L_{r - g} p_{s'}`.
    pub fn one_sample_backup_gain(&self, p: &CoeffFamily, t: &Transition, g: f64) -> Result<CoeffFamily> {
        if t.centered {
            return Err(Error::Centering {
                expected: "raw",
                found: "centered",
            });
        }
        self.one_sample_backup(p, &t.center(g))
    }

    /// `(H_g(p, y), r)` with `g` the state's gain estimate and `y` raw.
    pub fn augmented_update(&self, z: &AugmentedState, t: &Transition) -> Result<AugmentedState> {
        let coeffs = self.one_sample_backup_gain(&z.coeffs, t, z.gain_estimate)?;
        AugmentedState::new(coeffs, t.reward)
    }

    /// One relaxed step `p <- p + alpha (H(p, y) - p)` for a centred sample, in place.
    /// Only block `s` changes.
    pub fn relax_one_sample(&self, p: &mut CoeffFamily, t: &Transition, alpha: f64, scratch: &mut Vec<f64>) {
        debug_assert!(t.centered);
        scratch.resize(self.grid.num_atoms(), 0.0);
        shift_project_into(p.block(t.to_state).weights(), t.reward, &self.grid, scratch);
        p.block_mut(t.from_state).relax_toward(scratch, alpha);
    }

    fn check_transition(&self, t: &Transition) -> Result<()> {
        let m = self.num_states();
        if t.from_state >= m || t.to_state >= m {
            return Err(Error::Dimension(format!(
                "transition {} -> {} outside 0..{m}",
                t.from_state, t.to_state
            )));
        }
        Ok(())
    }

    /// `ell_inf(p, G(p))`.
    pub fn residual_g(&self, p: &CoeffFamily) -> Result<f64> {
        self.residual_g_g(p, self.gain_ref)
    }

    /// `ell_inf(p, G_g(p))`.
    pub fn residual_g_g(&self, p: &CoeffFamily, g: f64) -> Result<f64> {
        let gp = self.apply_g_g(p, g)?;
        cramer_sup(p, &gp, &self.grid)
    }

    /// `ell_inf(p, h_rho(p))` for the correctly centred mean-field map.
    pub fn residual_mean_field(&self, p: &CoeffFamily, rho: &[f64]) -> Result<f64> {
        self.residual_mean_field_g(p, rho, self.gain_ref)
    }

    /// `ell_inf(p, h_rho^{(g)}(p))`.
    pub fn residual_mean_field_g(&self, p: &CoeffFamily, rho: &[f64], g: f64) -> Result<f64> {
        let h = self.mean_field(p, rho, g)?;
        cramer_sup(p, &h, &self.grid)
    }

    /// `d_lambda(z, (h_mu^{(g)}(p), gain))`.
    pub fn residual_product(&self, z: &AugmentedState, lambda: &ProductMetricParam) -> Result<f64> {
        let h = self.mean_field(&z.coeffs, &self.mu, z.gain_estimate)?;
        let target = AugmentedState {
            coeffs: h,
            gain_estimate: self.gain_ref,
        };
        product_metric(z, &target, lambda, &self.grid)
    }

    /// `|g - gain|`.
    pub fn gain_error(&self, z: &AugmentedState) -> f64 {
        (z.gain_estimate - self.gain_ref).abs()
    }

    /// Per-state `ell(p_i, G_g(p)_i)`.
    pub fn blockwise_residual(&self, p: &CoeffFamily, g: f64) -> Result<Vec<f64>> {
        let gp = self.apply_g_g(p, g)?;
        Ok(p
            .blocks()
            .iter()
            .zip(gp.blocks())
            .map(|(a, b)| cramer_unchecked(a.weights(), b.weights(), self.grid.stride()))
            .collect())
    }
}

fn check_state_law(rho: &[f64], m: usize) -> Result<()> {
    if rho.len() != m {
        return Err(Error::Dimension(format!("state law has {} entries for {m} states", rho.len())));
    }
    if rho.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Domain("state law has a negative entry".into()));
    }
    let s: f64 = rho.iter().sum();
    if (s - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!("state law sums to {s}, expected 1")));
    }
    Ok(())
}

/// A point `z = (p, g)` of the product space.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub coeffs: CoeffFamily,
    pub gain_estimate: f64,
}

impl AugmentedState {
    pub fn new(coeffs: CoeffFamily, gain_estimate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gain_estimate) {
            return Err(Error::Domain(format!("gain estimate {gain_estimate} outside [0, 1]")));
        }
        Ok(Self { coeffs, gain_estimate })
    }
}

/// Weight `lambda >= stride^{-1/2}` on the gain coordinate of `d_lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductMetricParam {
    lambda: f64,
}

impl ProductMetricParam {
    pub fn new(lambda: f64, grid: &SupportGrid) -> Result<Self> {
        let floor = grid.shift_lipschitz();
        // Relative slack so that passing `shift_lipschitz()` back in always works.
        if !(lambda >= floor * (1.0 - 1e-12)) || !lambda.is_finite() {
            return Err(Error::Domain(format!(
                "lambda = {lambda} violates lambda >= stride^(-1/2) = {floor}"
            )));
        }
        Ok(Self { lambda })
    }

    /// The smallest admissible weight, `stride^{-1/2}`.
    pub fn minimal(grid: &SupportGrid) -> Self {
        Self {
            lambda: grid.shift_lipschitz(),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// `d_lambda(z1, z2) = ell_inf(p, q) + lambda |g - g'|`.
pub fn product_metric(
    z1: &AugmentedState,
    z2: &AugmentedState,
    lambda: &ProductMetricParam,
    grid: &SupportGrid,
) -> Result<f64> {
    Ok(cramer_sup(&z1.coeffs, &z2.coeffs, grid)? + lambda.lambda * (z1.gain_estimate - z2.gain_estimate).abs())
}

/// Every one-step sample `(s, r, s')` with `s ~ rho` and its probability, raw rewards.
pub fn enumerate_one_step(mrp: &MarkovRewardProcess, rho: &[f64]) -> Vec<(Transition, f64)> {
    let mut out = Vec::new();
    for (s, &rs) in rho.iter().enumerate() {
        if rs == 0.0 {
            continue;
        }
        for j in mrp.successors(s) {
            for a in mrp.reward_law(s, j).support() {
                out.push((Transition::raw(s, a.value, j), rs * mrp.prob(s, j) * a.prob));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::categorical::{cramer, project};

    fn one_state(r: f64, grid: SupportGrid) -> OperatorContext {
        let mrp = MarkovRewardProcess::with_deterministic_rewards(vec![vec![1.0]], &[vec![r]]).unwrap();
        OperatorContext::new(mrp, grid).unwrap()
    }

    fn half_grid() -> SupportGrid {
        SupportGrid::from_range(0.0, 1.0, 3).unwrap()
    }

    fn fam(w: &[&[f64]]) -> CoeffFamily {
        CoeffFamily::new(w.iter().map(|b| Coeff::new(b.to_vec()).unwrap()).collect()).unwrap()
    }

    #[test]
    fn one_state_centered_operator_is_identity() {
        let ctx = one_state(0.7, half_grid());
        assert!((ctx.gain_ref() - 0.7).abs() < 1e-15);
        let p = fam(&[&[0.2, 0.5, 0.3]]);
        let gp = ctx.apply_g(&p).unwrap();
        assert!(gp.max_abs_diff(&p) < 1e-15);
        let eta = ExactLawFamily::from_coeffs(&p, ctx.grid(), 0.0);
        assert_eq!(ctx.apply_t_g(&eta, 0.7).unwrap().absolute(), eta.absolute());
    }

    #[test]
    fn uncentered_one_state_moves_interior_dirac() {
        let ctx = one_state(0.7, half_grid());
        let p = fam(&[&[0.0, 1.0, 0.0]]);
        assert_eq!(ctx.apply_g_g(&p, 0.0).unwrap().block(0).weights(), &[0.0, 0.0, 1.0]);
        let e1 = fam(&[&[1.0, 0.0, 0.0]]);
        let out = ctx.apply_g_g(&e1, 0.0).unwrap();
        let expect = [0.0, 0.6, 0.4];
        for (a, b) in out.block(0).weights().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_operator_on_diracs_at_zero() {
        let mrp = MarkovRewardProcess::with_deterministic_rewards(
            vec![vec![0.25, 0.75], vec![0.5, 0.5]],
            &[vec![0.1, 0.9], vec![0.4, 0.6]],
        )
        .unwrap();
        let ctx = OperatorContext::new(mrp, half_grid()).unwrap();
        let eta = ExactLawFamily::new(vec![AtomicLaw::dirac(0.0), AtomicLaw::dirac(0.0)], 0.0).unwrap();
        let g = 0.3;
        let out = ctx.apply_t_g(&eta, g).unwrap();
        let l0 = out.law(0);
        assert_eq!(l0.atoms().len(), 2);
        assert!((l0.atoms()[0].0 - (0.1 - g)).abs() < 1e-15 && (l0.atoms()[0].1 - 0.25).abs() < 1e-15);
        assert!((l0.atoms()[1].0 - (0.9 - g)).abs() < 1e-15 && (l0.atoms()[1].1 - 0.75).abs() < 1e-15);
    }

    #[test]
    fn projected_operator_matches_projected_exact_operator() {
        let mrp = MarkovRewardProcess::new(
            vec![vec![0.2, 0.8, 0.0], vec![0.0, 0.3, 0.7], vec![0.6, 0.0, 0.4]],
            vec![
                ((0, 0), crate::mrp::RewardLaw::deterministic(0.3)),
                ((0, 1), crate::mrp::RewardLaw::from_pairs(&[(0.0, 0.5), (1.0, 0.5)])),
                ((1, 1), crate::mrp::RewardLaw::deterministic(0.9)),
                ((1, 2), crate::mrp::RewardLaw::deterministic(0.2)),
                ((2, 0), crate::mrp::RewardLaw::from_pairs(&[(0.4, 0.25), (0.6, 0.75)])),
                ((2, 2), crate::mrp::RewardLaw::deterministic(0.5)),
            ],
        )
        .unwrap();
        let grid = SupportGrid::from_range(-1.0, 1.0, 11).unwrap();
        let ctx = OperatorContext::new(mrp, grid).unwrap();
        let p = fam(&[
            &[0.0, 0.1, 0.0, 0.2, 0.0, 0.3, 0.0, 0.0, 0.4, 0.0, 0.0],
            &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5],
        ]);
        let g = 0.45;
        let gp = ctx.apply_g_g(&p, g).unwrap();
        let t = ctx.apply_t_g(&ExactLawFamily::from_coeffs(&p, &grid, 0.0), g).unwrap();
        for i in 0..3 {
            let proj = project(t.law(i).atoms(), &grid).unwrap();
            assert!(cramer(&proj, gp.block(i), &grid).unwrap() < 1e-12);
        }
    }

    #[test]
    fn backups_touch_one_block() {
        let ctx = one_state(0.5, half_grid());
        let p = fam(&[&[0.2, 0.5, 0.3]]);
        let t = Transition::raw(0, 0.5, 0).center(0.5);
        assert_eq!(t.reward, 0.0);
        assert!(ctx.one_sample_backup(&p, &t).unwrap().max_abs_diff(&p) < 1e-15);
        assert!(matches!(
            ctx.one_sample_backup(&p, &Transition::raw(0, 0.5, 0)),
            Err(Error::Centering { .. })
        ));
    }

    #[test]
    fn gain_backup_equals_centered_backup() {
        let mrp = MarkovRewardProcess::with_deterministic_rewards(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            &[vec![0.0, 1.0], vec![0.2, 0.4]],
        )
        .unwrap();
        let ctx = OperatorContext::new(mrp, SupportGrid::from_range(-1.0, 1.0, 5).unwrap()).unwrap();
        let p = fam(&[&[0.2, 0.2, 0.2, 0.2, 0.2], &[0.0, 0.5, 0.5, 0.0, 0.0]]);
        let t = Transition::raw(1, 0.4, 0);
        let a = ctx.one_sample_backup_gain(&p, &t, 0.3).unwrap();
        let b = ctx.one_sample_backup(&p, &t.center(0.3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.block(0), p.block(0));
        // g = r: the updated block is the successor's block.
        let c = ctx.one_sample_backup_gain(&p, &t, 0.4).unwrap();
        assert_eq!(c.block(1), p.block(0));
        let z = AugmentedState::new(p.clone(), 0.9).unwrap();
        assert_eq!(ctx.augmented_update(&z, &t).unwrap().gain_estimate, 0.4);
    }

    #[test]
    fn relax_matches_backup_combination() {
        let mrp = MarkovRewardProcess::with_deterministic_rewards(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            &[vec![0.0, 1.0], vec![0.2, 0.4]],
        )
        .unwrap();
        let ctx = OperatorContext::new(mrp, SupportGrid::from_range(-1.0, 1.0, 5).unwrap()).unwrap();
        let p = fam(&[&[0.2, 0.2, 0.2, 0.2, 0.2], &[0.0, 0.5, 0.5, 0.0, 0.0]]);
        for t in [Transition::raw(1, 0.4, 0), Transition::raw(0, 1.0, 0)] {
            let t = t.center(0.37);
            let h = ctx.one_sample_backup(&p, &t).unwrap();
            let mut q = p.clone();
            ctx.relax_one_sample(&mut q, &t, 0.3, &mut Vec::new());
            for i in 0..2 {
                for k in 0..5 {
                    let want = p.block(i).weights()[k] + 0.3 * (h.block(i).weights()[k] - p.block(i).weights()[k]);
                    assert!((q.block(i).weights()[k] - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn mean_field_frozen_and_uniform_blocks() {
        let mrp = MarkovRewardProcess::with_deterministic_rewards(
            vec![vec![0.5, 0.5], vec![1.0, 0.0]],
            &[vec![0.0, 1.0], vec![0.3, 0.0]],
        )
        .unwrap();
        let ctx = OperatorContext::new(mrp, SupportGrid::from_range(-1.0, 1.0, 5).unwrap()).unwrap();
        let p = fam(&[&[0.2, 0.2, 0.2, 0.2, 0.2], &[0.0, 0.5, 0.5, 0.0, 0.0]]);
        let h = ctx.mean_field(&p, &[1.0, 0.0], 0.1).unwrap();
        assert_eq!(h.block(1), p.block(1));
        let gp = ctx.apply_g_g(&p, 0.1).unwrap();
        let u = ctx.mean_field(&p, &[0.5, 0.5], 0.1).unwrap();
        for i in 0..2 {
            for k in 0..5 {
                let want = p.block(i).weights()[k] + 0.5 * (gp.block(i).weights()[k] - p.block(i).weights()[k]);
                assert!((u.block(i).weights()[k] - want).abs() < 1e-15);
            }
        }
        assert!(ctx.mean_field(&p, &[1.0, 1.0], 0.1).is_err());
    }

    #[test]
    fn product_metric_examples() {
        let grid = SupportGrid::from_range(0.0, 1.0, 5).unwrap();
        let p = CoeffFamily::uniform(2, 5);
        let z1 = AugmentedState::new(p.clone(), 0.3).unwrap();
        let z2 = AugmentedState::new(p, 0.4).unwrap();
        let lam = ProductMetricParam::new(2.0, &grid).unwrap();
        assert_eq!(product_metric(&z1, &z1, &lam, &grid).unwrap(), 0.0);
        assert!((product_metric(&z1, &z2, &lam, &grid).unwrap() - 0.2).abs() < 1e-15);
        let err = ProductMetricParam::new(1.0, &grid).unwrap_err().to_string();
        assert!(err.contains("stride^(-1/2)"), "{err}");
        assert!(ProductMetricParam::new(ProductMetricParam::minimal(&grid).lambda(), &grid).is_ok());
    }

    #[test]
    fn enumeration_weights_sum_to_one() {
        let mrp = MarkovRewardProcess::new(
            vec![vec![0.5, 0.5], vec![1.0, 0.0]],
            vec![
                ((0, 0), crate::mrp::RewardLaw::from_pairs(&[(0.0, 0.5), (1.0, 0.5)])),
                ((0, 1), crate::mrp::RewardLaw::deterministic(0.2)),
                ((1, 0), crate::mrp::RewardLaw::deterministic(0.6)),
            ],
        )
        .unwrap();
        let all = enumerate_one_step(&mrp, &[0.3, 0.7]);
        assert_eq!(all.len(), 4);
        assert!((all.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
