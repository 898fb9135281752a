//! Multi-seed execution and output files.
//!
//! Layout of an output directory:
//!
//! ```text
//! summary.json
//! reference_coeffs.csv              exact-KM reference family
//! <run>/trace_seed_<seed>.csv       one per seed
//! <run>/final_coeffs_seed_<seed>.csv
//! <run>/aggregate.csv               seed mean and standard error per logged k
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use qcat::categorical::write_family_csv;
use qcat::recursions::{km_reference, run, write_trace_csv, IterateTrace, TraceRow};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate, write_aggregate_csv, Stat};
use crate::error::CliError;
use crate::spec::{LoadedSpec, ModeName, PlotSpec, RunSpec, Thresholds};

pub const REFERENCE_FILE: &str = "reference_coeffs.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
/// Relaxation, tolerance and cap of the exact-KM reference run.
pub const REFERENCE_ALPHA: f64 = 0.5;
pub const REFERENCE_TOL: f64 = 1e-10;
pub const REFERENCE_CAP: u64 = 1_000_000;

pub fn trace_file(seed: u64) -> String {
    format!("trace_seed_{seed}.csv")
}

pub fn final_coeffs_file(seed: u64) -> String {
    format!("final_coeffs_seed_{seed}.csv")
}

/// Command-line overrides of spec values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seeds: Option<usize>,
    pub seed_base: Option<u64>,
    pub iters: Option<u64>,
    pub mode: Option<ModeName>,
    pub threads: Option<usize>,
}

/// The run templates after overrides, each with its seed list.
pub fn plan_runs(loaded: &LoadedSpec, ov: &Overrides) -> Result<Vec<(RunSpec, Vec<u64>)>, CliError> {
    let spec = &loaded.spec;
    let mut runs: Vec<RunSpec> = match ov.mode {
        None => spec.runs.clone(),
        Some(ModeName::AblationG0) => {
            let mut keep: Vec<RunSpec> = spec
                .runs
                .iter()
                .filter(|r| matches!(r.mode, ModeName::SkmMarkov | ModeName::AblationG0))
                .cloned()
                .collect();
            if !keep.iter().any(|r| r.mode == ModeName::AblationG0) {
                let template = keep.iter().find(|r| r.mode == ModeName::SkmMarkov).ok_or_else(|| {
                    CliError::Invalid("--mode ablation needs an ablation_g0 or skm_markov run to copy".into())
                })?;
                keep.push(RunSpec {
                    name: "ablation_g0".into(),
                    mode: ModeName::AblationG0,
                    thresholds: Thresholds::default(),
                    ..template.clone()
                });
            }
            keep
        }
        Some(mode) => spec.runs.iter().filter(|r| r.mode == mode).cloned().collect(),
    };
    if runs.is_empty() {
        return Err(CliError::Invalid(match ov.mode {
            Some(m) => format!("spec has no run with mode {}", m.as_str()),
            None => "spec declares no runs".into(),
        }));
    }
    if let Some(n) = ov.iters {
        if n == 0 {
            return Err(CliError::Invalid("--iters must be positive".into()));
        }
        for r in &mut runs {
            r.iterations = n;
            if let Some(pts) = &mut r.log_points {
                pts.retain(|&k| k <= n);
                if pts.last() != Some(&n) {
                    pts.push(n);
                }
            }
        }
    }
    let base = ov.seed_base.unwrap_or(spec.seed_base);
    let mut out = Vec::with_capacity(runs.len());
    for r in runs {
        let n = ov.seeds.or(r.num_seeds).unwrap_or(spec.num_seeds);
        if n == 0 {
            return Err(CliError::Invalid("--seeds must be positive".into()));
        }
        r.run_config(&loaded.ctx, base)
            .map_err(|e| CliError::Invalid(format!("run `{}`: {e}", r.name)))?;
        let seeds = (0..n as u64).map(|s| base + s).collect();
        out.push((r, seeds));
    }
    Ok(out)
}

/// All traces of one run template, in seed order.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub spec: RunSpec,
    pub traces: Vec<IterateTrace>,
    pub seconds: f64,
}

/// Executes every (run, seed) pair, fanning seeds out over a thread pool.
pub fn execute(loaded: &LoadedSpec, plan: &[(RunSpec, Vec<u64>)], threads: Option<usize>) -> Result<Vec<RunResult>, CliError> {
    let jobs: Vec<(usize, u64)> = plan
        .iter()
        .enumerate()
        .flat_map(|(i, (_, seeds))| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let work = || {
        jobs.par_iter()
            .map(|&(i, seed)| {
                let r = &plan[i].0;
                let start = Instant::now();
                let cfg = r.run_config(&loaded.ctx, seed)?;
                let trace = run(&loaded.ctx, &cfg)
                    .map_err(|e| CliError::Invalid(format!("run `{}` seed {seed}: {e}", r.name)))?;
                Ok((i, trace, start.elapsed().as_secs_f64()))
            })
            .collect::<Result<Vec<_>, CliError>>()
    };
    let done = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut results: Vec<RunResult> = plan
        .iter()
        .map(|(r, seeds)| RunResult {
            spec: r.clone(),
            traces: Vec::with_capacity(seeds.len()),
            seconds: 0.0,
        })
        .collect();
    for (i, trace, secs) in done {
        results[i].traces.push(trace);
        results[i].seconds += secs;
    }
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub threshold: f64,
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub mode: String,
    pub iterations: u64,
    pub seeds: Vec<u64>,
    pub final_k: u64,
    pub residual_g: Stat,
    pub residual_h: Stat,
    pub gain_err: Option<Stat>,
    pub product_residual: Option<Stat>,
    pub final_gains: Option<Vec<f64>>,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
    /// Summed single-thread time over seeds.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub name: String,
    pub num_states: usize,
    pub gain: f64,
    pub grid: qcat::categorical::GridConfig,
    pub reference_iterations: u64,
    pub plot: PlotSpec,
    pub runs: Vec<RunSummary>,
    pub pass: bool,
    pub wall_seconds: f64,
}

fn checks(t: &Thresholds, last: &crate::aggregate::AggregateRow) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut push = |name: &str, threshold: Option<f64>, value: Option<f64>, upper: bool| {
        if let Some(threshold) = threshold {
            let value = value.unwrap_or(f64::NAN);
            let pass = if upper { value <= threshold } else { value >= threshold };
            out.push(CheckResult {
                name: name.into(),
                threshold,
                value,
                pass,
            });
        }
    };
    push("max_residual_G", t.max_residual_g, Some(last.residual_g.mean), true);
    push("max_residual_h", t.max_residual_h, Some(last.residual_h.mean), true);
    push("max_gain_err", t.max_gain_error, last.gain_err.map(|s| s.mean), true);
    push("min_residual_G", t.min_residual_g, Some(last.residual_g.mean), false);
    out
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn mkdir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes traces, final coefficients, aggregates, the KM reference and
/// `summary.json`; returns the summary.
pub fn write_outputs(
    loaded: &LoadedSpec,
    results: &[RunResult],
    out_dir: &Path,
    wall_seconds: f64,
) -> Result<SummaryReport, CliError> {
    let ctx = &loaded.ctx;
    mkdir(out_dir)?;
    let (reference, reference_iterations) = km_reference(ctx, None, REFERENCE_ALPHA, REFERENCE_TOL, REFERENCE_CAP)?;
    write_family_csv(create(&out_dir.join(REFERENCE_FILE))?, &reference, ctx.grid())?;

    let mut runs = Vec::with_capacity(results.len());
    for res in results {
        let dir = out_dir.join(&res.spec.name);
        mkdir(&dir)?;
        for t in &res.traces {
            write_trace_csv(create(&dir.join(trace_file(t.seed)))?, &t.rows)?;
            write_family_csv(create(&dir.join(final_coeffs_file(t.seed)))?, &t.final_coeffs, ctx.grid())?;
        }
        let rows: Vec<&[TraceRow]> = res.traces.iter().map(|t| t.rows.as_slice()).collect();
        let agg = aggregate(&rows)?;
        write_aggregate_csv(create(&dir.join(AGGREGATE_FILE))?, &agg)?;
        let last = agg
            .last()
            .ok_or_else(|| CliError::Invalid(format!("run `{}` logged no rows", res.spec.name)))?;
        let checks = checks(&res.spec.thresholds, last);
        let final_gains: Vec<f64> = res.traces.iter().filter_map(|t| t.final_gain).collect();
        runs.push(RunSummary {
            name: res.spec.name.clone(),
            mode: res.spec.mode.as_str().into(),
            iterations: res.spec.iterations,
            seeds: res.traces.iter().map(|t| t.seed).collect(),
            final_k: last.k,
            residual_g: last.residual_g,
            residual_h: last.residual_h,
            gain_err: last.gain_err,
            product_residual: last.product_residual,
            final_gains: (!final_gains.is_empty()).then_some(final_gains),
            pass: checks.iter().all(|c| c.pass),
            checks,
            seconds: res.seconds,
        });
    }
    let report = SummaryReport {
        name: loaded.spec.name.clone(),
        num_states: ctx.num_states(),
        gain: ctx.gain_ref(),
        grid: ctx.grid().config(),
        reference_iterations,
        plot: loaded.spec.plot.clone(),
        pass: runs.iter().all(|r| r.pass),
        runs,
        wall_seconds,
    };
    let mut w = create(&out_dir.join(SUMMARY_FILE))?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    Ok(report)
}

/// Plans, executes and writes one experiment.
pub fn run_experiment(loaded: &LoadedSpec, ov: &Overrides, out_dir: &Path) -> Result<SummaryReport, CliError> {
    let start = Instant::now();
    let plan = plan_runs(loaded, ov)?;
    let results = execute(loaded, &plan, ov.threads)?;
    write_outputs(loaded, &results, out_dir, start.elapsed().as_secs_f64())
}

/// Human-readable summary table.
pub fn render_summary(report: &SummaryReport) -> String {
    let fmt = |s: &Stat| match s.stderr {
        Some(e) => format!("{:.3e} ± {:.1e}", s.mean, e),
        None => format!("{:.3e}", s.mean),
    };
    let mut out = format!(
        "experiment {}: {} states, gain {:.6}, reference after {} KM steps\n",
        report.name, report.num_states, report.gain, report.reference_iterations
    );
    out.push_str(&format!(
        "{:<16} {:>5} {:>9} {:>22} {:>22} {:>22} {:>8}\n",
        "run", "seeds", "k", "residual_G", "residual_h", "gain_err", "cpu_s"
    ));
    for r in &report.runs {
        out.push_str(&format!(
            "{:<16} {:>5} {:>9} {:>22} {:>22} {:>22} {:>8.1}\n",
            r.name,
            r.seeds.len(),
            r.final_k,
            fmt(&r.residual_g),
            fmt(&r.residual_h),
            r.gain_err.as_ref().map(fmt).unwrap_or_else(|| "-".into()),
            r.seconds
        ));
        for c in &r.checks {
            let cmp = if c.name.starts_with("min") { ">=" } else { "<=" };
            out.push_str(&format!(
                "    {} {}: {:.4e} {cmp} {:.4e}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.threshold
            ));
        }
    }
    out.push_str(&format!(
        "{} in {:.1}s wall\n",
        if report.pass { "all checks passed" } else { "some checks FAILED" },
        report.wall_seconds
    ));
    out
}

/// The default output directory when `--out` is absent.
pub fn default_out_dir(loaded: &LoadedSpec) -> PathBuf {
    loaded.spec.output_dir(&loaded.base_dir)
}
