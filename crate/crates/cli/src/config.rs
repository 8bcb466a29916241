//! JSON run configuration: schema, defaults and validation.
//!
//! Every section is optional and every key has a default, so `{}` is a valid
//! file. Unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shocklab_core::certifier::{self, random_pairs};
use shocklab_core::functionals::DECAY_MIN_SPAN;
use shocklab_core::poincare;
use shocklab_core::profile::{DEFAULT_DELTA_TAIL, DEFAULT_TABLE_SIZE, MIN_TABLE_SIZE};
use shocklab_core::solver::DEFAULT_CFL;
use shocklab_core::{Grid, Perturbation, ShockParams, SolverConfig, Stabilizer};

/// Documented defaults, shown by `--help`.
pub const DEFAULTS_HELP: &str = "\
Configuration defaults (JSON file given with --config; every key optional, unknown keys rejected):
  mode                         the subcommand name (must match it when given)
  params                       {p: 3, u_minus: 2, u_plus: 1}
  grid                         {L: 100, dx: 0.05}            domain [-L, L]
  solver                       {cfl_safety: 0.4, t_end: 200, output_every: 1,
                                stabilizer: \"hybrid\", well_balanced: true}
  perturbation                 {kind: \"gaussian\", amplitude: 0.1, center: 0, width: 5}
                               kinds: gaussian, bump, custom-table {xi: [..], values: [..]}
  x0                           0
  profile                      {table_size: 4096, delta_tail: 0.001}   delta_tail relative to u_minus - u_plus
  certifier                    {p_list: [2, 2.5, 3, 3.5, 4], N: 100000, seed: 1, count: 20, upper: 10,
                                allow_outside_hypotheses: false}
                               give either `pairs: [[u_minus, u_plus], ..]` or `seed` + `count`
  poincare                     {count: 1000, seed: 42, points: 65537}
  convergence                  {L: 30, dx: [0.1, 0.05, 0.025], stabilizer: \"hybrid\"}
  output                       {directory: \"out\", formats: [\"csv\", \"json\"]}

--seed overrides certifier.seed and poincare.seed; --out overrides output.directory.
SHOCKLAB_THREADS caps the worker threads used by certifier sweeps and Poincare batteries.

Exit codes: 0 ok, 1 configuration error, 2 numerical failure,
            3 certification or monitor failure.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Profile,
    Certify,
    Simulate,
    Decay,
    Poincare,
    Convergence,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Profile => "profile",
            Mode::Certify => "certify",
            Mode::Simulate => "simulate",
            Mode::Decay => "decay",
            Mode::Poincare => "poincare",
            Mode::Convergence => "convergence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub p: f64,
    pub u_minus: f64,
    pub u_plus: f64,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self {
            p: 3.0,
            u_minus: 2.0,
            u_plus: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    #[serde(rename = "L")]
    pub half_length: f64,
    pub dx: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            half_length: 100.0,
            dx: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub cfl_safety: f64,
    pub t_end: f64,
    pub output_every: f64,
    pub stabilizer: Stabilizer,
    pub well_balanced: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            cfl_safety: DEFAULT_CFL,
            t_end: 200.0,
            output_every: 1.0,
            stabilizer: Stabilizer::Hybrid,
            well_balanced: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSection {
    pub table_size: usize,
    pub delta_tail: f64,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            table_size: DEFAULT_TABLE_SIZE,
            delta_tail: DEFAULT_DELTA_TAIL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifierSection {
    pub p_list: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<(f64, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    pub upper: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub allow_outside_hypotheses: bool,
}

impl Default for CertifierSection {
    fn default() -> Self {
        Self {
            p_list: vec![2.0, 2.5, 3.0, 3.5, 4.0],
            pairs: None,
            seed: None,
            count: None,
            upper: 10.0,
            n: certifier::DEFAULT_N,
            allow_outside_hypotheses: false,
        }
    }
}

pub const DEFAULT_CERTIFIER_SEED: u64 = 1;
pub const DEFAULT_CERTIFIER_COUNT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoincareSection {
    pub count: usize,
    pub seed: u64,
    pub points: usize,
}

impl Default for PoincareSection {
    fn default() -> Self {
        Self {
            count: 1000,
            seed: 42,
            points: poincare::DEFAULT_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    #[serde(rename = "L")]
    pub half_length: f64,
    pub dx: Vec<f64>,
    pub stabilizer: Stabilizer,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            half_length: 30.0,
            dx: vec![0.1, 0.05, 0.025],
            stabilizer: Stabilizer::Hybrid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Not echoed in reports, so identical scenarios written to different
    /// places produce identical bytes.
    #[serde(skip_serializing)]
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl OutputSection {
    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub params: ParamsSection,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub perturbation: Perturbation,
    pub x0: f64,
    pub profile: ProfileSection,
    pub certifier: CertifierSection,
    pub poincare: PoincareSection,
    pub convergence: ConvergenceSection,
    pub output: OutputSection,
}

/// Field-level configuration problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| {
            // serde_json reports unknown keys and type errors with a position;
            // the message already names the offending field.
            ConfigError::new("", format!("invalid configuration: {e}"))
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Reads the file (or starts from the defaults), applies the overrides,
    /// checks the mode and validates everything the mode uses.
    pub fn load(path: Option<&Path>, mode: Mode, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => Self::from_path(p)?,
            None => Self::default(),
        };
        match config.mode {
            Some(m) if m != mode => {
                return Err(ConfigError::new(
                    "mode",
                    format!("file is for `{}` but the `{}` subcommand was run", m.name(), mode.name()),
                ))
            }
            _ => config.mode = Some(mode),
        }
        if let Some(out) = &overrides.out {
            config.output.directory = out.clone();
        }
        if let Some(seed) = overrides.seed {
            config.poincare.seed = seed;
            if config.certifier.pairs.is_none() {
                config.certifier.seed = Some(seed);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn mode(&self) -> Mode {
        self.mode.unwrap_or(Mode::Simulate)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.output.formats.is_empty() {
            return Err(ConfigError::new("output.formats", "at least one of csv, json is required"));
        }
        match self.mode() {
            Mode::Profile => {
                self.shock_params()?;
                self.profile_options()?;
            }
            Mode::Certify => {
                self.certifier_pairs()?;
            }
            Mode::Simulate | Mode::Decay => {
                self.shock_params()?;
                self.profile_options()?;
                self.solver_config()?;
                if self.mode() == Mode::Decay && !(self.solver.t_end >= DECAY_MIN_SPAN) {
                    return Err(ConfigError::new(
                        "solver.t_end",
                        format!("decay mode needs t_end >= {DECAY_MIN_SPAN}"),
                    ));
                }
            }
            Mode::Poincare => {
                let p = &self.poincare;
                if p.count == 0 {
                    return Err(ConfigError::new("poincare.count", "must be at least 1"));
                }
                if p.points < poincare::MIN_POINTS {
                    return Err(ConfigError::new(
                        "poincare.points",
                        format!("must be at least {}", poincare::MIN_POINTS),
                    ));
                }
            }
            Mode::Convergence => {
                self.shock_params()?;
                self.profile_options()?;
                let c = &self.convergence;
                if c.dx.len() < 2 {
                    return Err(ConfigError::new("convergence.dx", "need at least two spacings"));
                }
                if c.dx.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                    return Err(ConfigError::new("convergence.dx", "spacings must be positive"));
                }
                Grid::new(c.half_length, 3).map_err(|e| ConfigError::new("convergence.L", e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn shock_params(&self) -> Result<ShockParams, ConfigError> {
        let p = &self.params;
        ShockParams::new(p.p, p.u_minus, p.u_plus).map_err(|e| ConfigError::new("params", e.to_string()))
    }

    /// `(table_size, absolute tail distance)`.
    pub fn profile_options(&self) -> Result<(usize, f64), ConfigError> {
        let pr = &self.profile;
        if pr.table_size < MIN_TABLE_SIZE {
            return Err(ConfigError::new(
                "profile.table_size",
                format!("must be at least {MIN_TABLE_SIZE}"),
            ));
        }
        if !(pr.delta_tail > 0.0 && pr.delta_tail < 0.5) {
            return Err(ConfigError::new("profile.delta_tail", "must lie in (0, 0.5)"));
        }
        let width = self.params.u_minus - self.params.u_plus;
        Ok((pr.table_size, pr.delta_tail * width))
    }

    pub fn solver_config(&self) -> Result<SolverConfig, ConfigError> {
        let grid = Grid::with_spacing(self.grid.half_length, self.grid.dx)
            .map_err(|e| ConfigError::new("grid", e.to_string()))?;
        let s = &self.solver;
        let mut config = SolverConfig::new(grid, s.t_end);
        config.cfl_safety = s.cfl_safety;
        config.output_every = s.output_every;
        config.stabilizer = s.stabilizer;
        config.well_balanced = s.well_balanced;
        config.x0 = self.x0;
        config.perturbation = self.perturbation.clone();
        config
            .validate()
            .map_err(|e| ConfigError::new("solver", e.to_string()))?;
        Ok(config)
    }

    /// The `(u_minus, u_plus)` pairs of a certifier sweep, checked against
    /// the exponent list.
    pub fn certifier_pairs(&self) -> Result<Vec<(f64, f64)>, ConfigError> {
        let c = &self.certifier;
        if c.p_list.is_empty() {
            return Err(ConfigError::new("certifier.p_list", "must not be empty"));
        }
        if c.n < certifier::MIN_N {
            return Err(ConfigError::new(
                "certifier.N",
                format!("must be at least {}", certifier::MIN_N),
            ));
        }
        let pairs = match (&c.pairs, c.seed, c.count) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(ConfigError::new(
                    "certifier",
                    "give either `pairs` or `seed` + `count`, not both",
                ))
            }
            (Some(pairs), None, None) => pairs.clone(),
            (None, seed, count) => {
                if !(c.upper.is_finite() && c.upper > 0.0) {
                    return Err(ConfigError::new("certifier.upper", "must be positive"));
                }
                let count = count.unwrap_or(DEFAULT_CERTIFIER_COUNT);
                if count == 0 {
                    return Err(ConfigError::new("certifier.count", "must be at least 1"));
                }
                random_pairs(seed.unwrap_or(DEFAULT_CERTIFIER_SEED), count, c.upper)
            }
        };
        if pairs.is_empty() {
            return Err(ConfigError::new("certifier.pairs", "must not be empty"));
        }
        for &p in &c.p_list {
            for &(um, up) in &pairs {
                let checked = if c.allow_outside_hypotheses {
                    ShockParams::exploratory(p, um, up)
                } else {
                    ShockParams::new(p, um, up)
                };
                checked.map_err(|e| ConfigError::new("certifier", e.to_string()))?;
            }
        }
        Ok(pairs)
    }
}
