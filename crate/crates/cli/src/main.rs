use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qcat::categorical::SupportGrid;
use qcat::schedules::Regime;
use qcat_cli::commands::{self, ConstantsScope};
use qcat_cli::orchestrate::Overrides;
use qcat_cli::spec::ModeName;
use qcat_cli::CliError;

#[derive(Parser)]
#[command(name = "qcat", version, about = "Centered categorical TD experiments on average-reward MRPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an experiment spec or MRP file.
    Validate {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Run every (run, seed) pair of a spec and write traces and a summary.
    Run(RunArgs),
    /// Render SVG figures from a run output directory.
    Plot {
        /// The run output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the two-phase schedule constants.
    Constants(ConstantsArgs),
    /// Check the common-translation identity of synchronous backups.
    SyncCheck {
        /// Experiment spec or MRP file.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Add a per-state shift to the second backup (negative control).
        #[arg(long)]
        inject_bug: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Output directory; defaults to the spec's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds per stochastic run; overrides `num_seeds`.
    #[arg(long)]
    seeds: Option<usize>,
    /// Seed of the first replicate; seed `s` uses `seed_base + s`.
    #[arg(long)]
    seed_base: Option<u64>,
    /// Iterations per run; overrides every run's `iterations`.
    #[arg(long)]
    iters: Option<u64>,
    /// Restrict to one mode; `ablation` also keeps the centered Markov baseline.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ModeName>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Skip SVG rendering.
    #[arg(long)]
    no_plot: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Iid,
    Markov,
}

#[derive(Args)]
struct ConstantsArgs {
    /// Spec with `[[constants]]` rows; replaces the flags below.
    #[arg(long, conflicts_with_all = ["a1", "regime"])]
    spec: Option<PathBuf>,
    /// Phase-one exponent as a fraction or decimal, e.g. `3/4`.
    #[arg(long, required_unless_present = "spec")]
    a1: Option<String>,
    #[arg(long, value_enum, required_unless_present = "spec")]
    regime: Option<RegimeArg>,
    #[arg(long, allow_negative_numbers = true)]
    theta_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    theta_max: Option<f64>,
    #[arg(long)]
    num_atoms: Option<usize>,
    #[arg(long)]
    states: Option<usize>,
}

fn parse_mode(s: &str) -> Result<ModeName, String> {
    ModeName::parse(s).ok_or_else(|| {
        format!("unknown mode `{s}`; expected exact_km, skm_iid, skm_markov, skm_coupled or ablation")
    })
}

fn constants(args: ConstantsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(spec) = &args.spec {
        return commands::cmd_constants_spec(spec, out);
    }
    let regime = match args.regime.expect("required by clap") {
        RegimeArg::Iid => Regime::Iid,
        RegimeArg::Markov => Regime::Markov,
    };
    let scope = match (args.theta_min, args.theta_max, args.num_atoms, args.states) {
        (Some(lo), Some(hi), Some(d), Some(m)) => Some(ConstantsScope {
            grid: SupportGrid::from_range(lo, hi, d)?,
            num_states: m,
        }),
        (None, None, None, None) => None,
        _ => {
            return Err(CliError::Parse(
                "give all of --theta-min, --theta-max, --num-atoms and --states, or none".into(),
            ))
        }
    };
    commands::print_constants(args.a1.as_deref().expect("required by clap"), regime, scope.as_ref(), out)
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { spec } => commands::cmd_validate(&spec, out),
        Command::Run(a) => {
            let ov = Overrides {
                seeds: a.seeds,
                seed_base: a.seed_base,
                iters: a.iters,
                mode: a.mode,
                threads: a.threads,
            };
            commands::cmd_run(&a.spec, &ov, a.out.as_deref(), !a.no_plot, out).map(|_| ())
        }
        Command::Plot { out: dir } => {
            for f in commands::cmd_plot(&dir)? {
                writeln!(out, "wrote {}", f.display())?;
            }
            Ok(())
        }
        Command::Constants(a) => constants(a, out),
        Command::SyncCheck {
            spec,
            seed,
            samples,
            inject_bug,
        } => {
            let (mrp, grid) = commands::load_mrp_and_grid(&spec)?;
            commands::cmd_sync_check(&mrp, grid.as_ref(), seed, samples, inject_bug, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match dispatch(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
