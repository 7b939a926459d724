//! Job configuration: JSON checked against the shipped schema, then decoded
//! with unknown keys rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use filament_lab::backlund::Seed;
use filament_lab::frames::{Topology, P3};
use filament_lab::hierarchy::{Boundary, Grid};
use filament_lab::Flavor;
use serde::Deserialize;

use crate::error::CliError;

pub const JOB_CONFIG_SCHEMA: &str = include_str!("../schemas/job-config.schema.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Soliton,
    Evolve,
    Hasimoto,
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Sequential,
    Permutability,
}

impl Route {
    pub fn name(self) -> &'static str {
        match self {
            Route::Sequential => "sequential",
            Route::Permutability => "permutability",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Backward,
    RoundTrip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    Flatness,
    Conservation,
    Permutability,
    Reality,
    ArcLength,
    Holonomy,
}

impl SuiteName {
    pub const ALL: [SuiteName; 6] =
        [SuiteName::Flatness, SuiteName::Conservation, SuiteName::Permutability, SuiteName::Reality, SuiteName::ArcLength, SuiteName::Holonomy];

    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned())).ok()
    }

    pub fn name(self) -> &'static str {
        match self {
            SuiteName::Flatness => "flatness",
            SuiteName::Conservation => "conservation",
            SuiteName::Permutability => "permutability",
            SuiteName::Reality => "reality",
            SuiteName::ArcLength => "arc-length",
            SuiteName::Holonomy => "holonomy",
        }
    }
}

/// Deliberate defects used to check that the suites can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Flip the sign of the numerator in the permuted Riccati formula.
    PermutabilitySign,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub l: f64,
    pub x0: Option<f64>,
    #[serde(default)]
    pub boundary: BoundaryConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryConfig {
    #[default]
    Open,
    Periodic,
}

impl GridConfig {
    pub fn grid(&self) -> Result<Grid, CliError> {
        let x0 = self.x0.unwrap_or(-0.5 * self.l);
        match self.boundary {
            BoundaryConfig::Open => Grid::open(self.n, self.l, x0),
            BoundaryConfig::Periodic => Grid::periodic(self.n, self.l, x0),
        }
        .map_err(|e| CliError::Schema(format!("grid: {e}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Final time.
    pub t: f64,
    pub dt: Option<f64>,
    pub save_every: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FlowConfig {
    Vfe,
    Airy {
        #[serde(default)]
        normalized: bool,
    },
    Curve { j: usize },
    Potential { j: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyConfig {
    #[default]
    Open,
    Closed,
    Quasiperiodic { shift: P3 },
}

impl TopologyConfig {
    pub fn topology(self) -> Topology {
        match self {
            TopologyConfig::Open => Topology::Open,
            TopologyConfig::Closed => Topology::Closed,
            TopologyConfig::Quasiperiodic { shift } => Topology::Quasiperiodic { shift },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub curve: Option<PathBuf>,
    pub potential: Option<PathBuf>,
    /// Trajectory index written by `evolve` or `soliton`.
    pub trajectory: Option<PathBuf>,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Basepoint {
    /// `γ(x₀)` of the reconstructed curve.
    pub position: Option<P3>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub obj: bool,
    #[serde(default)]
    pub frame: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub command: Option<CommandName>,
    pub flavor: Option<Flavor>,
    pub grid: Option<GridConfig>,
    pub time: Option<TimeConfig>,
    #[serde(default)]
    pub seeds: Vec<Seed>,
    pub route: Option<Route>,
    pub flow: Option<FlowConfig>,
    #[serde(default)]
    pub input: InputConfig,
    pub direction: Option<Direction>,
    #[serde(default)]
    pub basepoint: Basepoint,
    #[serde(default)]
    pub output: OutputConfig,
    /// Gate overrides keyed by gate name.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub suites: Option<Vec<SuiteName>>,
    pub inject: Option<Fault>,
}

impl JobConfig {
    pub fn flavor(&self) -> Flavor {
        self.flavor.unwrap_or(Flavor::Su2)
    }

    pub fn tolerance(&self, gate: &str, default: f64) -> f64 {
        self.tolerances.get(gate).copied().unwrap_or(default)
    }

    pub fn boundary(&self) -> Boundary {
        match self.input.boundary {
            BoundaryConfig::Open => Boundary::Open,
            BoundaryConfig::Periodic => Boundary::Periodic,
        }
    }

    /// Resolve relative input paths against `base`.
    fn rebase(&mut self, base: &Path) {
        for p in [&mut self.input.curve, &mut self.input.potential, &mut self.input.trajectory].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Check `text` against the schema and decode it.
pub fn parse_config(text: &str) -> Result<JobConfig, CliError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Schema(format!("config is not JSON: {e}")))?;
    let schema: serde_json::Value = serde_json::from_str(JOB_CONFIG_SCHEMA).expect("shipped schema is JSON");
    let validator = jsonschema::validator_for(&schema).expect("shipped schema compiles");
    let errors: Vec<String> = validator.iter_errors(&value).map(|e| format!("{} at '{}'", e, e.instance_path())).collect();
    if !errors.is_empty() {
        return Err(CliError::Schema(errors.join("; ")));
    }
    serde_json::from_value(value).map_err(|e| CliError::Schema(e.to_string()))
}

/// Read and validate a config file; relative paths inside it are taken
/// relative to the file.
pub fn load_config(path: &Path) -> Result<JobConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    cfg.rebase(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}
