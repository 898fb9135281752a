//! Iteration drivers producing residual traces.
//!
//! Iteration `k` (from 1) applies step `alpha_k` to `p_{k-1}` and produces
//! `p_k`; the row logged at `k` describes `p_k`.

mod trace;

pub use trace::{read_trace_csv, write_trace_csv, IterateTrace, TraceRow, TRACE_COLUMNS};

use crate::categorical::{cramer_sup, CoeffFamily};
use crate::error::{Error, Result};
use crate::mrp::{Sampler, SamplerConfig, SamplingMode};
use crate::operators::{AugmentedState, OperatorContext, ProductMetricParam};
use crate::schedules::{km_residual_bound, RateGuide, Regime, StepSchedule, TauAccumulator};

#[derive(Debug, Clone, PartialEq)]
pub enum RunMode {
    /// Deterministic `p <- p + alpha (G(p) - p)`.
    ExactKm,
    /// Centred one-sample updates with `S ~ rho` i.i.d.
    SkmIid { rho: Vec<f64> },
    /// Centred one-sample updates along one trajectory.
    SkmMarkov { initial_state: usize },
    /// Uncentred updates with a running gain estimate `g_k`.
    SkmCoupled {
        lambda: f64,
        g0: f64,
        initial_state: usize,
    },
    /// Like [`RunMode::SkmMarkov`] but centred with `g = 0`.
    AblationG0 { initial_state: usize },
}

impl RunMode {
    pub fn name(&self) -> &'static str {
        match self {
            RunMode::ExactKm => "exact_km",
            RunMode::SkmIid { .. } => "skm_iid",
            RunMode::SkmMarkov { .. } => "skm_markov",
            RunMode::SkmCoupled { .. } => "skm_coupled",
            RunMode::AblationG0 { .. } => "ablation_g0",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schedule: StepSchedule,
    pub num_iterations: u64,
    pub seed: u64,
    /// Sorted iterations in `[1, num_iterations]` at which a row is logged.
    pub log_points: Vec<u64>,
    pub mode: RunMode,
    /// Starting coefficients; the uniform family when `None`.
    pub initial_coeffs: Option<CoeffFamily>,
}

impl RunConfig {
    /// A config with [`default_log_points`] and uniform initial coefficients.
    pub fn new(mode: RunMode, schedule: StepSchedule, num_iterations: u64, seed: u64) -> Self {
        Self {
            schedule,
            num_iterations,
            seed,
            log_points: default_log_points(num_iterations),
            mode,
            initial_coeffs: None,
        }
    }

    pub fn validate(&self, ctx: &OperatorContext) -> Result<()> {
        if self.num_iterations < 1 {
            return Err(Error::Domain("num_iterations must be at least 1".into()));
        }
        if self.log_points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("log points must be strictly increasing".into()));
        }
        if let (Some(&first), Some(&last)) = (self.log_points.first(), self.log_points.last()) {
            if first < 1 || last > self.num_iterations {
                return Err(Error::Domain(format!(
                    "log points must lie in [1, {}]",
                    self.num_iterations
                )));
            }
        }
        if let Some(p) = &self.initial_coeffs {
            if p.num_states() != ctx.num_states() || p.num_atoms() != ctx.grid().num_atoms() {
                return Err(Error::Dimension("initial coefficients do not match the context".into()));
            }
        }
        let m = ctx.num_states();
        match &self.mode {
            RunMode::ExactKm => {}
            RunMode::SkmIid { rho } => {
                if rho.len() != m {
                    return Err(Error::Dimension(format!("rho has {} entries for {m} states", rho.len())));
                }
                self.schedule.check_admissible(Regime::Iid)?;
            }
            RunMode::SkmMarkov { initial_state } | RunMode::AblationG0 { initial_state } => {
                check_state(*initial_state, m)?;
                self.schedule.check_admissible(Regime::Markov)?;
            }
            RunMode::SkmCoupled {
                lambda,
                g0,
                initial_state,
            } => {
                check_state(*initial_state, m)?;
                self.schedule.check_admissible(Regime::Markov)?;
                ProductMetricParam::new(*lambda, ctx.grid())?;
                if !(0.0..=1.0).contains(g0) {
                    return Err(Error::Domain(format!("g0 = {g0} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

fn check_state(s: usize, m: usize) -> Result<()> {
    if s >= m {
        return Err(Error::Dimension(format!("initial state {s} outside 0..{m}")));
    }
    Ok(())
}

/// 60 log-spaced iterations in `[1, n]`, every power of ten up to `n`, and `n`.
pub fn default_log_points(n: u64) -> Vec<u64> {
    if n == 0 {
        return Vec::new();
    }
    let mut pts: Vec<u64> = (0..60)
        .map(|i| {
            let x = (n as f64).powf(i as f64 / 59.0).round() as u64;
            x.clamp(1, n)
        })
        .collect();
    let mut p = 1u64;
    while p <= n {
        pts.push(p);
        p = p.saturating_mul(10);
    }
    pts.push(n);
    pts.sort_unstable();
    pts.dedup();
    pts
}

/// Dispatches on `cfg.mode`.
pub fn run(ctx: &OperatorContext, cfg: &RunConfig) -> Result<IterateTrace> {
    match cfg.mode {
        RunMode::ExactKm => run_exact_km(ctx, cfg),
        RunMode::SkmIid { .. } => run_skm_iid(ctx, cfg),
        RunMode::SkmMarkov { .. } => run_skm_markov(ctx, cfg),
        RunMode::SkmCoupled { .. } => run_skm_coupled(ctx, cfg),
        RunMode::AblationG0 { .. } => run_ablation_g0(ctx, cfg),
    }
}

fn wrong_mode(expected: &str, cfg: &RunConfig) -> Error {
    Error::Domain(format!("expected mode {expected}, got {}", cfg.mode.name()))
}

fn initial(ctx: &OperatorContext, cfg: &RunConfig) -> CoeffFamily {
    cfg.initial_coeffs
        .clone()
        .unwrap_or_else(|| CoeffFamily::uniform(ctx.num_states(), ctx.grid().num_atoms()))
}

/// Deterministic KM iteration on `G`. The `rate_guide` column holds the
/// noiseless envelope `D / sqrt(pi tau_k)`; `residual_h` uses `h_mu`.
pub fn run_exact_km(ctx: &OperatorContext, cfg: &RunConfig) -> Result<IterateTrace> {
    if cfg.mode != RunMode::ExactKm {
        return Err(wrong_mode("exact_km", cfg));
    }
    cfg.validate(ctx)?;
    let mut p = initial(ctx, cfg);
    let mut gp = p.clone();
    let mut tau = TauAccumulator::new();
    let mut rows = Vec::with_capacity(cfg.log_points.len());
    let mut next_log = cfg.log_points.iter().peekable();
    let diameter = ctx.grid().diameter_metric();
    for k in 1..=cfg.num_iterations {
        let alpha = cfg.schedule.step_size(k);
        let tau_k = tau.advance(&cfg.schedule);
        ctx.apply_g_g_into(&p, ctx.gain_ref(), &mut gp);
        for i in 0..p.num_states() {
            p.block_mut(i).relax_toward(gp.block(i).weights(), alpha);
        }
        if next_log.peek() == Some(&&k) {
            next_log.next();
            rows.push(TraceRow {
                k,
                alpha,
                residual_g: ctx.residual_g(&p)?,
                residual_h: ctx.residual_mean_field(&p, ctx.mu())?,
                gain_est: None,
                gain_err: None,
                product_residual: None,
                rate_guide: Some(km_residual_bound(diameter, tau_k)),
            });
        }
    }
    Ok(IterateTrace {
        mode: cfg.mode.name().to_string(),
        seed: cfg.seed,
        rows,
        final_coeffs: p,
        final_gain: None,
    })
}

/// Runs KM with constant relaxation `alpha` until `residual_G <= tol`.
/// Returns the iterate and the number of iterations used.
pub fn km_reference(
    ctx: &OperatorContext,
    start: Option<CoeffFamily>,
    alpha: f64,
    tol: f64,
    cap: u64,
) -> Result<(CoeffFamily, u64)> {
    let mut p = start.unwrap_or_else(|| CoeffFamily::uniform(ctx.num_states(), ctx.grid().num_atoms()));
    let mut gp = p.clone();
    for k in 0..=cap {
        ctx.apply_g_g_into(&p, ctx.gain_ref(), &mut gp);
        if cramer_sup(&p, &gp, ctx.grid())? <= tol {
            return Ok((p, k));
        }
        if k == cap {
            break;
        }
        for i in 0..p.num_states() {
            p.block_mut(i).relax_toward(gp.block(i).weights(), alpha);
        }
    }
    Err(Error::NoConvergence {
        what: "exact KM reference",
        cap: cap as usize,
    })
}

struct StochasticSetup {
    regime: Regime,
    sampling: SamplingMode,
    /// Fixed centring; `None` means the running gain estimate.
    centering: Option<f64>,
    /// State law of the mean-field map logged as `residual_h`.
    rho: Vec<f64>,
    coupled: Option<(ProductMetricParam, f64)>,
}

fn run_stochastic(ctx: &OperatorContext, cfg: &RunConfig, setup: StochasticSetup) -> Result<IterateTrace> {
    cfg.validate(ctx)?;
    let mrp = ctx.mrp();
    let mut sampler = Sampler::new(
        mrp,
        &SamplerConfig {
            mode: setup.sampling,
            seed: cfg.seed,
        },
    )?;
    let guide = RateGuide::for_schedule(&cfg.schedule, setup.regime);
    let mut p = initial(ctx, cfg);
    let mut g = setup.coupled.map_or(0.0, |(_, g0)| g0);
    let mut scratch = Vec::with_capacity(ctx.grid().num_atoms());
    let mut rows = Vec::with_capacity(cfg.log_points.len());
    let mut next_log = cfg.log_points.iter().peekable();
    for k in 1..=cfg.num_iterations {
        let alpha = cfg.schedule.step_size(k);
        let raw = sampler.sample();
        let center = setup.centering.unwrap_or(g);
        ctx.relax_one_sample(&mut p, &raw.center(center), alpha, &mut scratch);
        if setup.coupled.is_some() {
            g += alpha * (raw.reward - g);
            g = g.clamp(0.0, 1.0);
        }
        if next_log.peek() == Some(&&k) {
            next_log.next();
            let target_gain = setup.centering.unwrap_or(g);
            let mut row = TraceRow {
                k,
                alpha,
                residual_g: ctx.residual_g(&p)?,
                residual_h: ctx.residual_mean_field_g(&p, &setup.rho, target_gain)?,
                gain_est: None,
                gain_err: None,
                product_residual: None,
                rate_guide: match guide {
                    Some((rg, a)) => Some(rg.value(a, k)?),
                    None => None,
                },
            };
            if let Some((lambda, _)) = setup.coupled {
                let z = AugmentedState::new(p.clone(), g)?;
                row.gain_est = Some(g);
                row.gain_err = Some(ctx.gain_error(&z));
                row.product_residual = Some(ctx.residual_product(&z, &lambda)?);
            }
            rows.push(row);
        }
    }
    Ok(IterateTrace {
        mode: cfg.mode.name().to_string(),
        seed: cfg.seed,
        rows,
        final_coeffs: p,
        final_gain: setup.coupled.map(|_| g),
    })
}

/// Centred SKM with i.i.d. samples; `residual_h` is against `h_rho`.
pub fn run_skm_iid(ctx: &OperatorContext, cfg: &RunConfig) -> Result<IterateTrace> {
    let RunMode::SkmIid { rho } = &cfg.mode else {
        return Err(wrong_mode("skm_iid", cfg));
    };
    run_stochastic(
        ctx,
        cfg,
        StochasticSetup {
            regime: Regime::Iid,
            sampling: SamplingMode::Iid { state_law: rho.clone() },
            centering: Some(ctx.gain_ref()),
            rho: rho.clone(),
            coupled: None,
        },
    )
}

/// Centred SKM along one trajectory; `residual_h` is against `h_mu`.
pub fn run_skm_markov(ctx: &OperatorContext, cfg: &RunConfig) -> Result<IterateTrace> {
    let RunMode::SkmMarkov { initial_state } = cfg.mode else {
        return Err(wrong_mode("skm_markov", cfg));
    };
    run_stochastic(
        ctx,
        cfg,
        StochasticSetup {
            regime: Regime::Markov,
            sampling: SamplingMode::Markov { initial_state },
            centering: Some(ctx.gain_ref()),
            rho: ctx.mu().to_vec(),
            coupled: None,
        },
    )
}

/// Coupled SKM: coefficients centred by the running estimate `g_k`, which
/// itself averages the observed rewards with the same steps. `residual_h` is
/// against `h_mu^{(g_k)}`.
pub fn run_skm_coupled(ctx: &OperatorContext, cfg: &RunConfig) -> Result<IterateTrace> {
    let RunMode::SkmCoupled {
        lambda,
        g0,
        initial_state,
    } = cfg.mode
    else {
        return Err(wrong_mode("skm_coupled", cfg));
    };
    let lambda = ProductMetricParam::new(lambda, ctx.grid())?;
    run_stochastic(
        ctx,
        cfg,
        StochasticSetup {
            regime: Regime::Markov,
            sampling: SamplingMode::Markov { initial_state },
            centering: None,
            rho: ctx.mu().to_vec(),
            coupled: Some((lambda, g0)),
        },
    )
}

/// Markov SKM centred with `g = 0`. `residual_G` is still against the correctly
/// centred `G`; `residual_h` is against `h_mu^{(0)}`, the map this run targets.
pub fn run_ablation_g0(ctx: &OperatorContext, cfg: &RunConfig) -> Result<IterateTrace> {
    let RunMode::AblationG0 { initial_state } = cfg.mode else {
        return Err(wrong_mode("ablation_g0", cfg));
    };
    run_stochastic(
        ctx,
        cfg,
        StochasticSetup {
            regime: Regime::Markov,
            sampling: SamplingMode::Markov { initial_state },
            centering: Some(0.0),
            rho: ctx.mu().to_vec(),
            coupled: None,
        },
    )
}
