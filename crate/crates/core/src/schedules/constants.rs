//! Explicit constants of the two-phase residual bounds.

use std::f64::consts::PI;

use super::{kappa, threshold_t, Regime};
use crate::categorical::SupportGrid;
use crate::error::Result;

/// Constant stack of the i.i.d. two-phase bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhaseConstants {
    pub a1: f64,
    pub epsilon: f64,
    pub kappa: f64,
    pub threshold: f64,
    /// `D = sqrt(theta_d - theta_1)`.
    pub diameter: f64,
    /// `M_2 = sqrt(m) D`.
    pub m2: f64,
    /// `S = sum_{t>=1} (t+1)^{-3 a1 / 2}`.
    pub s_tail: f64,
    pub omega: f64,
    pub nu: f64,
    pub eta_c: f64,
    pub r_const: f64,
    pub k_const: f64,
    pub b_t: f64,
    pub c_iid: f64,
}

impl TwoPhaseConstants {
    /// `(name, value)` pairs in display order.
    pub fn fields(&self) -> [(&'static str, f64); 14] {
        [
            ("a1", self.a1),
            ("epsilon", self.epsilon),
            ("kappa", self.kappa),
            ("T", self.threshold),
            ("D", self.diameter),
            ("M2", self.m2),
            ("S", self.s_tail),
            ("omega", self.omega),
            ("nu", self.nu),
            ("eta", self.eta_c),
            ("R", self.r_const),
            ("K", self.k_const),
            ("B_T", self.b_t),
            ("C_iid", self.c_iid),
        ]
    }
}

/// The Markov regime's computable quantities. The multiplicative constant
/// depends on a Poisson constant of the sample chain and is not formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovTwoPhaseConstants {
    pub a1: f64,
    pub epsilon: f64,
    pub kappa: f64,
    pub threshold: f64,
    pub gamma_t: f64,
}

pub fn iid_constants(a1: f64, grid: &SupportGrid, num_states: usize) -> Result<TwoPhaseConstants> {
    let epsilon = Regime::Iid.epsilon(a1)?;
    let threshold = threshold_t(a1, Regime::Iid)?;
    let diameter = grid.diameter_metric();
    let m2 = (num_states as f64).sqrt() * diameter;
    let s_tail = tail_zeta(1.5 * a1);
    let half_pow = 1.0 - (-a1).exp2();
    let omega = half_pow / 2.0;
    let nu = half_pow / (1.0 - a1);
    let eta_c = 1.0 - 0.75f64.powf(1.0 - a1);
    let r_const = (4.0f64 / 3.0).powf(a1) / (1.0 - 4f64.powf(-a1));
    let k_const = diameter / (PI * omega).sqrt()
        + 2.0 * m2 / PI.sqrt()
            * (s_tail / (nu * eta_c).sqrt() + (1.0 + a1 / 2.0).exp2() * r_const / (1.0 - a1).sqrt());
    let b_t = (2.0 / 3f64.sqrt()).max(8f64.powf(1.0 / 6.0) * (epsilon * (threshold + 2.0).ln()).exp());
    let c_iid = (k_const + 6.0 * m2).max(k_const * b_t + 2.0 * m2 * 6f64.sqrt() / PI.sqrt() + 6.0 * m2);
    Ok(TwoPhaseConstants {
        a1,
        epsilon,
        kappa: kappa(epsilon),
        threshold,
        diameter,
        m2,
        s_tail,
        omega,
        nu,
        eta_c,
        r_const,
        k_const,
        b_t,
        c_iid,
    })
}

pub fn markov_constants(a1: f64) -> Result<MarkovTwoPhaseConstants> {
    let epsilon = Regime::Markov.epsilon(a1)?;
    let threshold = threshold_t(a1, Regime::Markov)?;
    let gamma_t = (-a1 * (threshold + 1.0).ln() + 0.8 * (threshold + 2.0).ln()).exp();
    Ok(MarkovTwoPhaseConstants {
        a1,
        epsilon,
        kappa: kappa(epsilon),
        threshold,
        gamma_t,
    })
}

/// `sum_{n>=2} n^{-s}` for `s > 1`.
///
/// Direct summation up to `N - 1`, then the Euler-Maclaurin tail
/// `N^{1-s}/(s-1) + N^{-s}/2 + sum_j B_{2j}/(2j)! (s)_{2j-1} N^{-s-2j+1}`
/// with three Bernoulli terms; at `N = 10^4` the remainder is below `1e-20`.
/// Plain truncation cannot reach the required accuracy because the terms decay
/// like `n^{-s}` with `s` barely above 1.
pub fn tail_zeta(s: f64) -> f64 {
    assert!(s > 1.0, "series diverges for s = {s}");
    const N: u32 = 10_000;
    let head: f64 = (2..N).rev().map(|n| f64::from(n).powf(-s)).sum();
    let n = f64::from(N);
    let tail = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s / 12.0 * n.powf(-s - 1.0)
        - s * (s + 1.0) * (s + 2.0) / 720.0 * n.powf(-s - 3.0)
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) / 30240.0 * n.powf(-s - 5.0);
    head + tail
}
