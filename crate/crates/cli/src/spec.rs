//! Experiment spec files.
//!
//! ```toml
//! name = "five_state"
//! num_seeds = 20
//! output_dir = "out/five_state"
//!
//! [mrp]
//! path = "mrp/five_state.toml"   # relative to this file; or inline MRP keys
//!
//! [grid]
//! bias_margin = 0.25             # or theta_min / theta_max
//! num_atoms = 51
//!
//! [[runs]]
//! name = "exact_km"
//! mode = "exact_km"
//! iterations = 100000
//! schedule = { kind = "constant", alpha = 0.5 }
//! ```

use std::path::{Path, PathBuf};

use qcat::categorical::{GridConfig, SupportGrid};
use qcat::mrp::{MarkovRewardProcess, MrpFile};
use qcat::operators::OperatorContext;
use qcat::recursions::{default_log_points, RunConfig, RunMode};
use qcat::schedules::{Regime, ScheduleKind, StepSchedule};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    ExactKm,
    SkmIid,
    SkmMarkov,
    SkmCoupled,
    #[serde(alias = "ablation")]
    AblationG0,
}

impl ModeName {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact_km" | "km" => Some(Self::ExactKm),
            "skm_iid" | "iid" => Some(Self::SkmIid),
            "skm_markov" | "markov" => Some(Self::SkmMarkov),
            "skm_coupled" | "coupled" => Some(Self::SkmCoupled),
            "ablation_g0" | "ablation" => Some(Self::AblationG0),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ExactKm => "exact_km",
            Self::SkmIid => "skm_iid",
            Self::SkmMarkov => "skm_markov",
            Self::SkmCoupled => "skm_coupled",
            Self::AblationG0 => "ablation_g0",
        }
    }

    pub fn is_stochastic(self) -> bool {
        self != Self::ExactKm
    }
}

/// Either `path = "..."` or the MRP keys inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MrpSource {
    Path { path: PathBuf },
    Inline(MrpFile),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub theta_min: Option<f64>,
    pub theta_max: Option<f64>,
    pub num_atoms: Option<usize>,
    /// Bracket the scalar bias range, widened by this fraction of its spread on each side.
    pub bias_margin: Option<f64>,
}

impl GridSpec {
    pub fn resolve(&self, mrp: &MarkovRewardProcess) -> Result<SupportGrid, CliError> {
        let num_atoms = self
            .num_atoms
            .ok_or_else(|| CliError::Parse("grid: missing key `num_atoms`".into()))?;
        match (self.theta_min, self.theta_max, self.bias_margin) {
            (Some(lo), Some(hi), None) => Ok(SupportGrid::from_config(&GridConfig {
                theta_min: lo,
                theta_max: hi,
                num_atoms,
            })?),
            (None, None, Some(margin)) => {
                let bias = mrp.solve_poisson()?.bias;
                Ok(SupportGrid::bracketing(&bias, margin, num_atoms)?)
            }
            (Some(_), None, None) => Err(CliError::Parse("grid: missing key `theta_max`".into())),
            (None, Some(_), None) => Err(CliError::Parse("grid: missing key `theta_min`".into())),
            (None, None, None) => Err(CliError::Parse(
                "grid: missing key `theta_min` (or `bias_margin`)".into(),
            )),
            _ => Err(CliError::Parse(
                "grid: give either `theta_min`/`theta_max` or `bias_margin`, not both".into(),
            )),
        }
    }
}

/// Pass/fail thresholds on the seed-mean of the final logged row.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub max_residual_g: Option<f64>,
    pub max_residual_h: Option<f64>,
    pub max_gain_error: Option<f64>,
    pub min_residual_g: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub name: String,
    pub mode: ModeName,
    pub iterations: u64,
    pub schedule: ScheduleKind,
    /// Two-phase switch point replacing the computed threshold.
    pub threshold: Option<f64>,
    /// i.i.d. state law; uniform when absent.
    pub rho: Option<Vec<f64>>,
    #[serde(default)]
    pub initial_state: usize,
    /// Product-metric weight; `stride^{-1/2}` when absent.
    pub lambda: Option<f64>,
    /// Initial gain estimate for coupled runs.
    pub g0: Option<f64>,
    pub log_points: Option<Vec<u64>>,
    /// Overrides the spec-level seed count.
    pub num_seeds: Option<usize>,
    #[serde(default)]
    pub thresholds: Thresholds,
}

pub const DEFAULT_G0: f64 = 0.5;

impl RunSpec {
    pub fn schedule(&self) -> Result<StepSchedule, CliError> {
        Ok(match self.threshold {
            Some(t) => StepSchedule::with_threshold(self.schedule, t)?,
            None => StepSchedule::new(self.schedule)?,
        })
    }

    pub fn run_mode(&self, ctx: &OperatorContext) -> RunMode {
        let m = ctx.num_states();
        match self.mode {
            ModeName::ExactKm => RunMode::ExactKm,
            ModeName::SkmIid => RunMode::SkmIid {
                rho: self.rho.clone().unwrap_or_else(|| vec![1.0 / m as f64; m]),
            },
            ModeName::SkmMarkov => RunMode::SkmMarkov {
                initial_state: self.initial_state,
            },
            ModeName::SkmCoupled => RunMode::SkmCoupled {
                lambda: self.lambda.unwrap_or_else(|| ctx.grid().shift_lipschitz()),
                g0: self.g0.unwrap_or(DEFAULT_G0),
                initial_state: self.initial_state,
            },
            ModeName::AblationG0 => RunMode::AblationG0 {
                initial_state: self.initial_state,
            },
        }
    }

    /// Library config for one seed.
    pub fn run_config(&self, ctx: &OperatorContext, seed: u64) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::new(self.run_mode(ctx), self.schedule()?, self.iterations, seed);
        if let Some(pts) = &self.log_points {
            cfg.log_points = pts.clone();
        } else {
            cfg.log_points = default_log_points(self.iterations);
        }
        cfg.validate(ctx)?;
        Ok(cfg)
    }

    pub fn regime(&self) -> Option<Regime> {
        match self.mode {
            ModeName::ExactKm => None,
            ModeName::SkmIid => Some(Regime::Iid),
            _ => Some(Regime::Markov),
        }
    }
}

/// One row tabulated by `qcat constants --spec`; `a1` is a fraction or
/// decimal string so that `epsilon` can be printed exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsEntry {
    pub a1: String,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotSpec {
    #[serde(default = "yes")]
    pub log_x: bool,
    #[serde(default = "yes")]
    pub log_y: bool,
}

fn yes() -> bool {
    true
}

impl Default for PlotSpec {
    fn default() -> Self {
        Self {
            log_x: true,
            log_y: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub mrp: MrpSource,
    pub grid: GridSpec,
    #[serde(default)]
    pub runs: Vec<RunSpec>,
    #[serde(default = "default_num_seeds")]
    pub num_seeds: usize,
    #[serde(default)]
    pub seed_base: u64,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub plot: PlotSpec,
    #[serde(default)]
    pub constants: Vec<ConstantsEntry>,
}

fn default_num_seeds() -> usize {
    20
}

/// A parsed spec with its MRP, grid and operator context resolved.
#[derive(Debug, Clone)]
pub struct LoadedSpec {
    pub spec: ExperimentSpec,
    /// Directory relative paths in the spec resolve against.
    pub base_dir: PathBuf,
    pub ctx: OperatorContext,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    /// Parses the file and loads a referenced MRP file; does not validate.
    pub fn load_mrp(&self, base_dir: &Path) -> Result<MarkovRewardProcess, CliError> {
        match &self.mrp {
            MrpSource::Inline(f) => Ok(f.to_mrp()?),
            MrpSource::Path { path } => {
                let full = base_dir.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| CliError::Io(format!("{}: {e}", full.display())))?;
                MrpFile::from_toml(&text)
                    .and_then(|f| f.to_mrp())
                    .map_err(|e| CliError::Parse(format!("{}: {e}", full.display())))
            }
        }
    }

    /// Structural checks that need no MRP: unique run names, positive counts.
    pub fn check_structure(&self) -> Result<(), CliError> {
        let mut names = std::collections::BTreeSet::new();
        for r in &self.runs {
            let safe = !r.name.is_empty()
                && r.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !safe {
                return Err(CliError::Invalid(format!(
                    "run name `{}` must be nonempty ASCII letters, digits, `_` or `-`",
                    r.name
                )));
            }
            if !names.insert(r.name.as_str()) {
                return Err(CliError::Invalid(format!("duplicate run name `{}`", r.name)));
            }
            if r.iterations == 0 {
                return Err(CliError::Invalid(format!("run `{}`: iterations must be positive", r.name)));
            }
            if r.num_seeds == Some(0) {
                return Err(CliError::Invalid(format!("run `{}`: num_seeds must be positive", r.name)));
            }
        }
        if self.num_seeds == 0 {
            return Err(CliError::Invalid("num_seeds must be positive".into()));
        }
        Ok(())
    }

    pub fn output_dir(&self, base_dir: &Path) -> PathBuf {
        match &self.output_dir {
            Some(p) => base_dir.join(p),
            None => base_dir.join("out").join(&self.name),
        }
    }
}

impl LoadedSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let spec = ExperimentSpec::from_toml(&text).map_err(|e| match e {
            CliError::Parse(msg) => CliError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_spec(spec, base_dir)
    }

    /// Resolves the MRP and grid and validates every run template.
    pub fn from_spec(spec: ExperimentSpec, base_dir: PathBuf) -> Result<Self, CliError> {
        spec.check_structure()?;
        let mrp = spec.load_mrp(&base_dir)?;
        let violations = mrp.validate();
        let blocking: Vec<String> = violations
            .iter()
            .filter(|v| !matches!(v, qcat::mrp::Violation::Periodic { .. }))
            .map(ToString::to_string)
            .collect();
        if !blocking.is_empty() {
            return Err(CliError::Violations(blocking));
        }
        let grid = spec.grid.resolve(&mrp)?;
        let ctx = OperatorContext::new(mrp, grid)?;
        for r in &spec.runs {
            r.run_config(&ctx, spec.seed_base)
                .map_err(|e| CliError::Invalid(format!("run `{}`: {e}", r.name)))?;
        }
        Ok(Self { spec, base_dir, ctx })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
name = "tiny"
num_seeds = 2

[mrp]
num_states = 2
transition = [[0.5, 0.5], [0.5, 0.5]]
rewards = [
  { from = 0, to = 0, atoms = [{ value = 0.0, prob = 1.0 }] },
  { from = 0, to = 1, atoms = [{ value = 1.0, prob = 1.0 }] },
  { from = 1, to = 0, atoms = [{ value = 0.5, prob = 1.0 }] },
  { from = 1, to = 1, atoms = [{ value = 0.5, prob = 1.0 }] },
]

[grid]
theta_min = -1.0
theta_max = 1.0
num_atoms = 11

[[runs]]
name = "iid"
mode = "skm_iid"
iterations = 100
schedule = { kind = "polynomial", a = 0.75 }
"#;

    #[test]
    fn inline_spec_loads() {
        let spec = ExperimentSpec::from_toml(SPEC).unwrap();
        let loaded = LoadedSpec::from_spec(spec, PathBuf::from(".")).unwrap();
        assert_eq!(loaded.ctx.num_states(), 2);
        let cfg = loaded.spec.runs[0].run_config(&loaded.ctx, 7).unwrap();
        assert_eq!(cfg.mode, RunMode::SkmIid { rho: vec![0.5, 0.5] });
    }

    #[test]
    fn missing_grid_key_is_named() {
        let text = SPEC.replace("theta_max = 1.0\n", "");
        let spec = ExperimentSpec::from_toml(&text).unwrap();
        let err = LoadedSpec::from_spec(spec, PathBuf::from(".")).unwrap_err().to_string();
        assert!(err.contains("theta_max"), "{err}");
        let text = SPEC.replace("num_atoms = 11\n", "");
        let spec = ExperimentSpec::from_toml(&text).unwrap();
        let err = LoadedSpec::from_spec(spec, PathBuf::from(".")).unwrap_err().to_string();
        assert!(err.contains("num_atoms"), "{err}");
    }

    #[test]
    fn bad_row_is_named() {
        let text = SPEC.replace("[[0.5, 0.5], [0.5, 0.5]]", "[[0.5, 0.6], [0.5, 0.5]]");
        let spec = ExperimentSpec::from_toml(&text).unwrap();
        let err = LoadedSpec::from_spec(spec, PathBuf::from(".")).unwrap_err().to_string();
        assert!(err.contains("row 0"), "{err}");
    }

    #[test]
    fn duplicate_run_names_rejected() {
        let dup = format!(
            "{SPEC}\n[[runs]]\nname = \"iid\"\nmode = \"skm_iid\"\niterations = 5\nschedule = {{ kind = \"polynomial\", a = 0.75 }}\n"
        );
        let spec = ExperimentSpec::from_toml(&dup).unwrap();
        assert!(LoadedSpec::from_spec(spec, PathBuf::from(".")).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = SPEC.replace("num_seeds = 2", "num_seeds = 2\ncolour = \"red\"");
        assert!(ExperimentSpec::from_toml(&text).is_err());
    }
}
