//! Subcommand bodies. Each writes its report to `out` and returns an error
//! carrying the exit code on failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use qcat::categorical::{align_common_shift, equal_up_to_translation, read_family_csv, CoeffFamily, ExactLawFamily, SupportGrid};
use qcat::instances::{random_family, random_law_family};
use qcat::mrp::{MarkovRewardProcess, MrpFile, Violation};
use qcat::operators::{synchronous_backup, SynchronousSample};
use qcat::recursions::{read_trace_csv, TraceRow};
use qcat::schedules::{iid_constants, kappa, markov_constants, Regime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggregate::{aggregate, AggregateRow};
use crate::error::CliError;
use crate::orchestrate::{
    default_out_dir, final_coeffs_file, render_summary, run_experiment, Overrides, SummaryReport, REFERENCE_FILE,
    SUMMARY_FILE,
};
use crate::spec::{LoadedSpec, PlotSpec};
use crate::svg::{law_panels, line_chart, Axes, LawCurve, Series, PALETTE};

/// Upper bound on one emitted figure.
pub const MAX_SVG_BYTES: usize = 2 * 1024 * 1024;

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// A bare MRP file has a top-level `transition` key; anything else is an
/// experiment spec.
fn is_mrp_file(text: &str) -> bool {
    text.parse::<toml::Table>().is_ok_and(|t| t.contains_key("transition"))
}

fn parse_mrp_file(path: &Path, text: &str) -> Result<MarkovRewardProcess, CliError> {
    MrpFile::from_toml(text)
        .and_then(|f| f.to_mrp())
        .map_err(|e| match e {
            qcat::Error::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
            other => CliError::Invalid(format!("{}: {other}", path.display())),
        })
}

fn report_violations(mrp: &MarkovRewardProcess, out: &mut dyn Write) -> Result<(), CliError> {
    let mut blocking = Vec::new();
    for v in mrp.validate() {
        if matches!(v, Violation::Periodic { .. }) {
            writeln!(out, "warning: {v}")?;
        } else {
            blocking.push(v.to_string());
        }
    }
    if blocking.is_empty() {
        Ok(())
    } else {
        Err(CliError::Violations(blocking))
    }
}

/// `qcat validate`: an experiment spec or a bare MRP file.
pub fn cmd_validate(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let text = read(path)?;
    if is_mrp_file(&text) {
        let mrp = parse_mrp_file(path, &text)?;
        report_violations(&mrp, out)?;
        writeln!(out, "ok: MRP with {} states, gain {:.12}", mrp.num_states(), mrp.gain()?)?;
        return Ok(());
    }
    let loaded = LoadedSpec::load(path)?;
    report_violations(loaded.ctx.mrp(), out)?;
    let g = loaded.ctx.grid();
    writeln!(
        out,
        "ok: {}: {} states, {} atoms on [{:.6}, {:.6}], gain {:.12}, {} run(s)",
        loaded.spec.name,
        loaded.ctx.num_states(),
        g.num_atoms(),
        g.theta_min(),
        g.theta_max(),
        loaded.ctx.gain_ref(),
        loaded.spec.runs.len()
    )?;
    Ok(())
}

/// `qcat run`: executes, writes outputs and optionally plots. Fails with
/// exit code 1 when a declared threshold is missed.
pub fn cmd_run(
    spec_path: &Path,
    ov: &Overrides,
    out_dir: Option<&Path>,
    plot: bool,
    out: &mut dyn Write,
) -> Result<SummaryReport, CliError> {
    let loaded = LoadedSpec::load(spec_path)?;
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| default_out_dir(&loaded));
    let report = run_experiment(&loaded, ov, &dir)?;
    write!(out, "{}", render_summary(&report))?;
    writeln!(out, "outputs in {}", dir.display())?;
    if plot {
        for f in cmd_plot(&dir)? {
            writeln!(out, "wrote {}", f.display())?;
        }
    }
    if !report.pass {
        return Err(CliError::Check("declared thresholds missed; see summary".into()));
    }
    Ok(report)
}

fn run_dirs(dir: &Path) -> Result<Vec<(String, Vec<PathBuf>)>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut runs = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if !path.is_dir() {
            continue;
        }
        let mut traces: Vec<(u64, PathBuf)> = fs::read_dir(&path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter_map(|p| {
                let name = p.file_name()?.to_str()?;
                let seed = name.strip_prefix("trace_seed_")?.strip_suffix(".csv")?.parse().ok()?;
                Some((seed, p))
            })
            .collect();
        if traces.is_empty() {
            continue;
        }
        traces.sort();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        runs.push((name, traces.into_iter().map(|t| t.1).collect()));
    }
    runs.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(runs)
}

fn load_traces(files: &[PathBuf]) -> Result<Vec<Vec<TraceRow>>, CliError> {
    files
        .iter()
        .map(|f| {
            let file = fs::File::open(f).map_err(|e| CliError::Io(format!("{}: {e}", f.display())))?;
            read_trace_csv(file).map_err(|e| CliError::Parse(format!("{}: {e}", f.display())))
        })
        .collect()
}

fn band(rows: &[AggregateRow], stat: impl Fn(&AggregateRow) -> Option<crate::aggregate::Stat>) -> Option<Vec<(f64, f64, f64)>> {
    rows.iter()
        .map(|r| {
            let s = stat(r)?;
            let e = s.stderr?;
            Some((r.k as f64, s.mean - e, s.mean + e))
        })
        .collect()
}

fn write_svg(path: &Path, svg: &str) -> Result<(), CliError> {
    if svg.len() > MAX_SVG_BYTES {
        return Err(CliError::Invalid(format!("{} would be {} bytes", path.display(), svg.len())));
    }
    fs::write(path, svg).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn residual_series(rows: &[AggregateRow]) -> Vec<Series> {
    let pts = |f: &dyn Fn(&AggregateRow) -> Option<f64>| -> Vec<(f64, f64)> {
        rows.iter().filter_map(|r| Some((r.k as f64, f(r)?))).collect()
    };
    let mut out = vec![
        Series {
            label: "residual_G".into(),
            color: PALETTE[0].into(),
            points: pts(&|r| Some(r.residual_g.mean)),
            band: band(rows, |r| Some(r.residual_g)),
            dashed: false,
        },
        Series {
            label: "residual_h".into(),
            color: PALETTE[1].into(),
            points: pts(&|r| Some(r.residual_h.mean)),
            band: band(rows, |r| Some(r.residual_h)),
            dashed: false,
        },
    ];
    if rows.iter().any(|r| r.gain_err.is_some()) {
        out.push(Series {
            label: "gain_err".into(),
            color: PALETTE[2].into(),
            points: pts(&|r| r.gain_err.map(|s| s.mean)),
            band: band(rows, |r| r.gain_err),
            dashed: false,
        });
    }
    // The guide carries no constant; it is scaled to meet residual_h at the middle logged row.
    let anchor = &rows[rows.len() / 2];
    if let Some(g) = anchor.rate_guide.filter(|g| *g > 0.0) {
        let c = anchor.residual_h.mean / g;
        out.push(Series {
            label: format!("rate guide (fit at k={})", anchor.k),
            color: "#555555".into(),
            points: pts(&|r| r.rate_guide.map(|v| c * v)),
            band: None,
            dashed: true,
        });
    }
    out
}

fn law_curve(label: &str, color: &str, p: &CoeffFamily, state: usize, grid: &SupportGrid, shift: f64) -> LawCurve {
    let block = p.block(state);
    LawCurve {
        label: label.into(),
        color: color.into(),
        atoms: grid.atoms().zip(block.weights()).map(|(x, &w)| (x + shift, w)).collect(),
        mean: block.mean(grid, shift),
    }
}

/// `qcat plot`: per-run residual figures, one overlay of every run's
/// `residual_G`, and final-law panels aligned to the exact-KM reference.
pub fn cmd_plot(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let runs = run_dirs(dir)?;
    if runs.is_empty() {
        return Err(CliError::Invalid(format!("no trace_seed_*.csv files under {}", dir.display())));
    }
    let summary = match fs::read_to_string(dir.join(SUMMARY_FILE)) {
        Ok(text) => Some(serde_json::from_str::<SummaryReport>(&text)?),
        Err(_) => None,
    };
    let plot = summary.as_ref().map(|s| s.plot.clone()).unwrap_or_else(PlotSpec::default);
    // Law panels compare the centered stochastic runs with the reference.
    let in_law_panel = |name: &str| {
        let mode = summary.as_ref().and_then(|s| s.runs.iter().find(|r| r.name == name)).map(|r| r.mode.as_str());
        !matches!(mode, Some("exact_km" | "ablation_g0"))
    };
    let axes = |title: String, y: &str| Axes {
        title,
        x_label: "iteration k".into(),
        y_label: y.into(),
        log_x: plot.log_x,
        log_y: plot.log_y,
    };
    let mut written = Vec::new();
    let mut overlay = Vec::new();
    let mut finals: Vec<(String, CoeffFamily)> = Vec::new();
    for (i, (name, files)) in runs.iter().enumerate() {
        let traces = load_traces(files)?;
        let refs: Vec<&[TraceRow]> = traces.iter().map(Vec::as_slice).collect();
        let rows = aggregate(&refs).map_err(|e| CliError::Invalid(format!("run `{name}`: {e}")))?;
        if rows.is_empty() {
            return Err(CliError::Invalid(format!("run `{name}`: trace has no rows")));
        }
        let seeds = files.len();
        let path = dir.join(name).join("residuals.svg");
        write_svg(&path, &line_chart(&axes(format!("{name} ({seeds} seed(s))"), "residual"), &residual_series(&rows)))?;
        written.push(path);
        let main = &residual_series(&rows)[0];
        overlay.push(Series {
            label: name.clone(),
            color: PALETTE[i % PALETTE.len()].into(),
            ..main.clone()
        });
        let first_seed = files[0]
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("trace_seed_")?.strip_suffix(".csv")?.parse::<u64>().ok());
        if let Some(seed) = first_seed.filter(|_| in_law_panel(name)) {
            let f = dir.join(name).join(final_coeffs_file(seed));
            if let Ok(file) = fs::File::open(&f) {
                let (p, _) = read_family_csv(file).map_err(|e| CliError::Parse(format!("{}: {e}", f.display())))?;
                finals.push((name.clone(), p));
            }
        }
    }
    let path = dir.join("residual_G.svg");
    write_svg(&path, &line_chart(&axes("residual_G by run".into(), "residual_G"), &overlay))?;
    written.push(path);

    let ref_path = dir.join(REFERENCE_FILE);
    if let Ok(file) = fs::File::open(&ref_path) {
        let (reference, grid) = read_family_csv(file).map_err(|e| CliError::Parse(format!("{}: {e}", ref_path.display())))?;
        let panels: Vec<(String, Vec<LawCurve>)> = (0..reference.num_states())
            .map(|s| {
                let mut curves = vec![law_curve("exact KM", PALETTE[0], &reference, s, &grid, 0.0)];
                for (i, (name, p)) in finals.iter().enumerate() {
                    if p.num_states() == reference.num_states() && p.num_atoms() == reference.num_atoms() {
                        let c = align_common_shift(&reference, p, &grid);
                        curves.push(law_curve(name, PALETTE[(i + 1) % PALETTE.len()], p, s, &grid, -c));
                    }
                }
                (format!("state {s}"), curves)
            })
            .collect();
        let path = dir.join("laws.svg");
        write_svg(&path, &law_panels("final laws aligned to the exact-KM reference", &panels))?;
        written.push(path);
    }
    Ok(written)
}

/// Reads `p/q`, an integer, or a finite decimal as an exact rational.
pub fn parse_rational(s: &str) -> Result<Ratio<i64>, CliError> {
    let bad = || CliError::Parse(format!("`{s}` is not a fraction or decimal"));
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: i64 = p.trim().parse().map_err(|_| bad())?;
        let q: i64 = q.trim().parse().map_err(|_| bad())?;
        if q == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(p, q));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 15 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let den = 10i64.pow(frac.len() as u32);
    let neg = int.starts_with('-');
    let whole: i64 = if int.is_empty() || int == "-" { 0 } else { int.parse().map_err(|_| bad())? };
    let f: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    let num = whole.checked_mul(den).ok_or_else(bad)?;
    let num = if neg { num - f } else { num + f };
    Ok(Ratio::new(num, den))
}

/// `epsilon_{a1}` as an exact rational.
pub fn epsilon_exact(a1: Ratio<i64>, regime: Regime) -> Ratio<i64> {
    match regime {
        Regime::Iid => (a1 * 3 - 2) / 6,
        Regime::Markov => (a1 * 5 - 4) / 10,
    }
}

/// Grid and state count for the i.i.d. constant stack.
#[derive(Debug, Clone, Copy)]
pub struct ConstantsScope {
    pub grid: SupportGrid,
    pub num_states: usize,
}

/// Prints the constant table for one `a1` and regime.
pub fn print_constants(
    a1_text: &str,
    regime: Regime,
    scope: Option<&ConstantsScope>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let a1 = parse_rational(a1_text)?;
    let a1f = *a1.numer() as f64 / *a1.denom() as f64;
    let eps_f = regime.epsilon(a1f).map_err(|e| CliError::Invalid(e.to_string()))?;
    let eps = epsilon_exact(a1, regime);
    let label = match regime {
        Regime::Iid => "iid",
        Regime::Markov => "markov",
    };
    writeln!(out, "regime = {label}, a1 = {a1}")?;
    writeln!(out, "  epsilon = {eps} = {eps_f:.17}")?;
    writeln!(out, "  kappa   = {:.17}", kappa(eps_f))?;
    match regime {
        Regime::Iid => {
            let scope = scope.ok_or_else(|| {
                CliError::Invalid("iid constants need a grid and state count (--spec or --num-atoms/--theta-min/--theta-max/--states)".into())
            })?;
            let c = iid_constants(a1f, &scope.grid, scope.num_states)?;
            writeln!(
                out,
                "  (m = {}, grid {} atoms on [{}, {}])",
                scope.num_states,
                scope.grid.num_atoms(),
                scope.grid.theta_min(),
                scope.grid.theta_max()
            )?;
            for (name, v) in c.fields().iter().skip(3) {
                writeln!(out, "  {name:<7} = {v:.17e}")?;
            }
        }
        Regime::Markov => {
            let c = markov_constants(a1f)?;
            writeln!(out, "  T       = {:.17e}", c.threshold)?;
            writeln!(out, "  gamma_T = {:.17e}", c.gamma_t)?;
            writeln!(
                out,
                "  C_mk    : not computable here; it depends on the Poisson constant of the sampled chain"
            )?;
        }
    }
    Ok(())
}

/// `qcat constants --spec`: every `[[constants]]` row, with the spec's MRP
/// and grid as scope. Rows after a failure are still printed.
pub fn cmd_constants_spec(spec_path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let loaded = LoadedSpec::load(spec_path)?;
    if loaded.spec.constants.is_empty() {
        return Err(CliError::Parse(format!("{}: no `[[constants]]` rows", spec_path.display())));
    }
    let scope = ConstantsScope {
        grid: *loaded.ctx.grid(),
        num_states: loaded.ctx.num_states(),
    };
    let mut first_err = None;
    for row in &loaded.spec.constants {
        if let Err(e) = print_constants(&row.a1, row.regime, Some(&scope), out) {
            writeln!(out, "a1 = {}: {e}", row.a1)?;
            first_err.get_or_insert(e);
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Loads an MRP and, for experiment specs, the grid.
pub fn load_mrp_and_grid(path: &Path) -> Result<(MarkovRewardProcess, Option<SupportGrid>), CliError> {
    let text = read(path)?;
    if is_mrp_file(&text) {
        return Ok((parse_mrp_file(path, &text)?, None));
    }
    let loaded = LoadedSpec::load(path)?;
    Ok((loaded.ctx.mrp().clone(), Some(*loaded.ctx.grid())))
}

/// Per-state translation `i * 1e-3`: breaks the common-shift identity.
pub const INJECTED_SHIFT: f64 = 1e-3;
pub const SYNC_TOL: f64 = 1e-10;

/// `qcat sync-check`: two centerings of one synchronous backup agree up
/// to the common translation `g - g'`, for every drawn sample.
pub fn cmd_sync_check(
    mrp: &MarkovRewardProcess,
    grid: Option<&SupportGrid>,
    seed: u64,
    samples: usize,
    inject_bug: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = mrp.num_states();
    let mut failures = 0usize;
    for n in 0..samples {
        let eta = match grid {
            Some(grid) => {
                let p = random_family(&mut rng, m, grid.num_atoms());
                ExactLawFamily::from_coeffs(&p, grid, rng.random_range(-1.0..1.0))
            }
            None => random_law_family(&mut rng, m, 4),
        };
        let y = SynchronousSample::draw(mrp, &mut rng);
        let g: f64 = rng.random();
        // The first sample exercises g = g'.
        let g2: f64 = if n == 0 { g } else { rng.random() };
        let a = synchronous_backup(&eta, &y, g, mrp)?;
        let mut b = synchronous_backup(&eta, &y, g2, mrp)?;
        if inject_bug {
            let laws = (0..m).map(|i| b.law(i).translate(INJECTED_SHIFT * i as f64)).collect();
            b = ExactLawFamily::new(laws, 0.0)?;
        }
        let want = g - g2;
        let ok = match equal_up_to_translation(&a, &b, SYNC_TOL) {
            Some(c) => (c - want).abs() <= SYNC_TOL,
            None => false,
        };
        if !ok {
            failures += 1;
            if failures <= 5 {
                writeln!(out, "FAIL sample {n}: g = {g}, g' = {g2}, per-state (S', R) = {:?}", y.per_state)?;
            }
        }
    }
    if failures > 0 {
        return Err(CliError::Check(format!("{failures} of {samples} synchronous samples failed")));
    }
    writeln!(out, "ok: {samples} synchronous samples equal up to the common translation g - g' (tol {SYNC_TOL:e})")?;
    Ok(())
}
