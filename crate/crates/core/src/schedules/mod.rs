//! Step sizes `alpha_k` (indexed from `k = 1`), two-phase thresholds, the
//! accumulator `tau_k = sum_{t<=k} alpha_t (1 - alpha_t)` and rate guides.

mod constants;

pub use constants::{iid_constants, markov_constants, tail_zeta, MarkovTwoPhaseConstants, TwoPhaseConstants};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling regime a two-phase schedule is tuned for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Iid,
    Markov,
}

impl Regime {
    /// Critical tail exponent: 2/3 (i.i.d.) or 4/5 (Markov).
    pub fn critical_exponent(self) -> f64 {
        match self {
            Regime::Iid => 2.0 / 3.0,
            Regime::Markov => 4.0 / 5.0,
        }
    }

    pub fn interval_label(self) -> &'static str {
        match self {
            Regime::Iid => "2/3 < a1 < 1",
            Regime::Markov => "4/5 < a1 < 1",
        }
    }

    fn check_a1(self, a1: f64) -> Result<()> {
        if a1 > self.critical_exponent() && a1 < 1.0 {
            Ok(())
        } else {
            Err(Error::Schedule(format!(
                "a1 = {a1} outside the admissible interval {}",
                self.interval_label()
            )))
        }
    }

    /// `epsilon_{a1}`: `(3 a1 - 2) / 6` (i.i.d.) or `(5 a1 - 4) / 10` (Markov).
    pub fn epsilon(self, a1: f64) -> Result<f64> {
        self.check_a1(a1)?;
        Ok(match self {
            Regime::Iid => (3.0 * a1 - 2.0) / 6.0,
            Regime::Markov => (5.0 * a1 - 4.0) / 10.0,
        })
    }
}

/// `kappa = 2^eps / ln 2`, which makes the threshold inequality an equality at `k = 1`.
pub fn kappa(epsilon: f64) -> f64 {
    epsilon.exp2() / std::f64::consts::LN_2
}

/// Largest `T` with `(k+1)^eps <= kappa ln(k+1)` for every `1 <= k <= T`.
///
/// With `y = ln(k+1)` the inequality reads `f(y) = eps y - ln kappa - ln y <= 0`.
/// `f` is convex, vanishes at `y = ln 2` and has its second root `y*` beyond
/// `1/eps`, so the admissible `k` form the initial interval `k + 1 <= e^{y*}`.
/// `y*` is found by bisection. The result is integer-valued but returned as
/// `f64` because it routinely exceeds `u64::MAX`. Below `2^53` the integer is
/// refined on the predicate itself; where the two sides differ by a few ulps
/// per step the last digit is a floating-point tie.
pub fn threshold_t(a1: f64, regime: Regime) -> Result<f64> {
    let eps = regime.epsilon(a1)?;
    let ln_kappa = kappa(eps).ln();
    let f = |y: f64| eps * y - ln_kappa - y.ln();
    let mut lo = 1.0 / eps;
    let mut hi = 2.0 / eps;
    while f(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut t = (lo.exp().floor() - 1.0).max(1.0);
    if t < 2f64.powi(53) {
        let holds = |k: f64| f((k + 1.0).ln()) <= 0.0;
        while t > 1.0 && !holds(t) {
            t -= 1.0;
        }
        while holds(t + 1.0) {
            t += 1.0;
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleKind {
    /// `alpha_k = alpha`.
    Constant { alpha: f64 },
    /// `alpha_k = (k+1)^{-a}`.
    Polynomial { a: f64 },
    /// `(k+1)^{-a1}` up to `T`, then `(k+1)^{-2/3}`.
    TwoPhaseIid { a1: f64 },
    /// `(k+1)^{-a1}` up to `T`, then `gamma_T (k+1)^{-4/5}`.
    TwoPhaseMarkov { a1: f64 },
}

/// A validated step-size rule with its derived threshold quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    kind: ScheduleKind,
    threshold: Option<f64>,
    ln_gamma_t: Option<f64>,
}

impl StepSchedule {
    pub fn new(kind: ScheduleKind) -> Result<Self> {
        let threshold = match kind {
            ScheduleKind::Constant { alpha } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::Schedule(format!("constant step {alpha} outside (0, 1)")));
                }
                None
            }
            ScheduleKind::Polynomial { a } => {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(Error::Schedule(format!("exponent a = {a} outside 0 < a <= 1")));
                }
                None
            }
            ScheduleKind::TwoPhaseIid { a1 } => Some(threshold_t(a1, Regime::Iid)?),
            ScheduleKind::TwoPhaseMarkov { a1 } => Some(threshold_t(a1, Regime::Markov)?),
        };
        Self::assemble(kind, threshold)
    }

    /// A two-phase schedule switching at the given `threshold` instead of the
    /// computed one. The computed thresholds exceed any feasible run length,
    /// so this is how the tail phase gets exercised.
    pub fn with_threshold(kind: ScheduleKind, threshold: f64) -> Result<Self> {
        let a1 = match kind {
            ScheduleKind::TwoPhaseIid { a1 } => {
                Regime::Iid.check_a1(a1)?;
                a1
            }
            ScheduleKind::TwoPhaseMarkov { a1 } => {
                Regime::Markov.check_a1(a1)?;
                a1
            }
            _ => return Err(Error::Schedule("only two-phase schedules have a threshold".into())),
        };
        if !(threshold >= 1.0) || threshold.fract() != 0.0 {
            return Err(Error::Schedule(format!(
                "threshold {threshold} is not a positive integer (a1 = {a1})"
            )));
        }
        Self::assemble(kind, Some(threshold))
    }

    fn assemble(kind: ScheduleKind, threshold: Option<f64>) -> Result<Self> {
        let ln_gamma_t = match (kind, threshold) {
            (ScheduleKind::TwoPhaseMarkov { a1 }, Some(t)) => Some(-a1 * (t + 1.0).ln() + 0.8 * (t + 2.0).ln()),
            _ => None,
        };
        Ok(Self {
            kind,
            threshold,
            ln_gamma_t,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Two-phase switch point `T`.
    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    /// `gamma_T = (T+1)^{-a1} (T+2)^{4/5}` (Markov two-phase only).
    pub fn gamma_t(&self) -> Option<f64> {
        self.ln_gamma_t.map(f64::exp)
    }

    /// `alpha_k` for `k >= 1`; always in `(0, 1)`.
    pub fn step_size(&self, k: u64) -> f64 {
        debug_assert!(k >= 1, "iterations are indexed from 1");
        let x = (k + 1) as f64;
        let in_phase_one = |t: f64| (k as f64) <= t;
        match self.kind {
            ScheduleKind::Constant { alpha } => alpha,
            ScheduleKind::Polynomial { a } => x.powf(-a),
            ScheduleKind::TwoPhaseIid { a1 } => {
                if in_phase_one(self.threshold.unwrap_or(f64::INFINITY)) {
                    x.powf(-a1)
                } else {
                    x.powf(-2.0 / 3.0)
                }
            }
            ScheduleKind::TwoPhaseMarkov { a1 } => {
                if in_phase_one(self.threshold.unwrap_or(f64::INFINITY)) {
                    x.powf(-a1)
                } else {
                    (self.ln_gamma_t.unwrap_or(0.0) - 0.8 * x.ln()).exp()
                }
            }
        }
    }

    /// Errors unless the schedule is one the convergence results cover in `regime`:
    /// `(k+1)^{-a}` with `a` above the critical exponent, or the matching two-phase rule.
    pub fn check_admissible(&self, regime: Regime) -> Result<()> {
        let ok = match (self.kind, regime) {
            (ScheduleKind::Polynomial { a }, r) => a > r.critical_exponent() && a <= 1.0,
            (ScheduleKind::TwoPhaseIid { .. }, Regime::Iid) => true,
            (ScheduleKind::TwoPhaseMarkov { .. }, Regime::Markov) => true,
            _ => false,
        };
        if ok {
            return Ok(());
        }
        let range = match regime {
            Regime::Iid => "alpha_k = (k+1)^{-a} with 2/3 < a <= 1, or the i.i.d. two-phase rule",
            Regime::Markov => "alpha_k = (k+1)^{-a} with 4/5 < a <= 1, or the Markov two-phase rule",
        };
        Err(Error::Schedule(format!("{:?} is not admissible; expected {range}", self.kind)))
    }
}

/// Running `tau_k`, advanced one step at a time.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TauAccumulator {
    k: u64,
    tau: f64,
}

impl TauAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `alpha_{k+1} (1 - alpha_{k+1})` and returns the new `tau`.
    pub fn advance(&mut self, schedule: &StepSchedule) -> f64 {
        self.k += 1;
        let a = schedule.step_size(self.k);
        self.tau += a * (1.0 - a);
        self.tau
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn value(&self) -> f64 {
        self.tau
    }
}

/// `tau_k` by direct summation.
pub fn tau(schedule: &StepSchedule, k: u64) -> f64 {
    let mut acc = TauAccumulator::new();
    for _ in 0..k {
        acc.advance(schedule);
    }
    acc.value()
}

/// `D / sqrt(pi tau_k)`, the noiseless KM residual envelope.
pub fn km_residual_bound(diameter: f64, tau: f64) -> f64 {
    diameter / (std::f64::consts::PI * tau).sqrt()
}

/// Theorem-rate envelopes without multiplicative constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateGuide {
    /// `(k+1)^{-(1-a)/2}`.
    Iid,
    /// `(k+1)^{-(1-a)/2}`, for `a` in `(4/5, 1]`.
    Markov,
    /// `(k+1)^{-1/6} min{kappa ln(k+1), (k+1)^eps}`.
    IidTwoPhase,
    /// `(k+1)^{-1/10} min{kappa ln(k+1), (k+1)^eps}`.
    MarkovTwoPhase,
}

impl RateGuide {
    /// The guide evaluated at iteration `k`, with `a_or_a1` the fixed exponent
    /// or the phase-one exponent.
    pub fn value(self, a_or_a1: f64, k: u64) -> Result<f64> {
        let x = (k + 1) as f64;
        let two_phase = |regime: Regime, power: f64| -> Result<f64> {
            let eps = regime.epsilon(a_or_a1)?;
            Ok(x.powf(-power) * (kappa(eps) * x.ln()).min(x.powf(eps)))
        };
        match self {
            RateGuide::Iid => Ok(x.powf(-(1.0 - a_or_a1) / 2.0)),
            RateGuide::Markov => {
                if !(a_or_a1 > 0.8 && a_or_a1 <= 1.0) {
                    return Err(Error::Schedule(format!("Markov rate guide needs 4/5 < a <= 1, got {a_or_a1}")));
                }
                Ok(x.powf(-(1.0 - a_or_a1) / 2.0))
            }
            RateGuide::IidTwoPhase => two_phase(Regime::Iid, 1.0 / 6.0),
            RateGuide::MarkovTwoPhase => two_phase(Regime::Markov, 0.1),
        }
    }

    /// The guide matching a schedule in a sampling regime, if any.
    pub fn for_schedule(schedule: &StepSchedule, regime: Regime) -> Option<(Self, f64)> {
        match (schedule.kind(), regime) {
            (ScheduleKind::Polynomial { a }, Regime::Iid) => Some((RateGuide::Iid, a)),
            (ScheduleKind::Polynomial { a }, Regime::Markov) if a > 0.8 => Some((RateGuide::Markov, a)),
            (ScheduleKind::TwoPhaseIid { a1 }, _) => Some((RateGuide::IidTwoPhase, a1)),
            (ScheduleKind::TwoPhaseMarkov { a1 }, _) => Some((RateGuide::MarkovTwoPhase, a1)),
            _ => None,
        }
    }
}
