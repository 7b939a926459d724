//! Command implementations behind the `filament-lab` binary.
//!
//! Each command reads a [`JobConfig`], writes its data files into the output
//! directory together with a `report.json`, and returns the [`Report`].
//! Errors carry the process exit code (see [`CliError::exit_code`]).

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub mod config;
pub mod error;
mod evolve;
mod hasimoto;
mod soliton;
mod verify;

pub use config::{load_config, parse_config, CommandName, JobConfig, SuiteName};
pub use error::CliError;

/// Flags shared by every command.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub strict: bool,
    pub suites: Vec<SuiteName>,
}

/// One named threshold check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

/// Machine-readable outcome of a command.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub pass: bool,
    pub gates: Vec<Gate>,
    pub details: BTreeMap<String, serde_json::Value>,
    pub files: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report { command: command.into(), pass: true, ..Default::default() }
    }

    /// Record `value <= limit`; NaN fails.
    pub fn check(&mut self, name: &str, value: f64, limit: f64) -> bool {
        let pass = value <= limit;
        self.pass &= pass;
        self.gates.push(Gate { name: name.into(), value, limit, pass });
        pass
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details.insert(key.into(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    pub fn first_failure(&self) -> Option<&Gate> {
        self.gates.iter().find(|g| !g.pass)
    }

    /// The gate failure as an error, if any.
    pub fn gate_error(&self) -> Option<CliError> {
        self.first_failure()
            .map(|g| CliError::gate(&g.name, format!("{:e} exceeds {:e}", g.value, g.limit)))
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("report.json");
        filament_lab::io::write_json(&path, self).map_err(CliError::output)
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(format!("{}: {e}", dir.display())))
}

fn create_file(path: &Path) -> Result<fs::File, CliError> {
    fs::File::create(path).map_err(|e| CliError::output(format!("{}: {e}", path.display())))
}

fn open_input(path: &Path) -> Result<fs::File, CliError> {
    fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Run `command`. The report is written to `opts.out/report.json` even when
/// a gate fails; the failure is returned afterwards.
pub fn run(command: CommandName, cfg: &JobConfig, opts: &RunOptions) -> Result<Report, CliError> {
    let (report, result) = run_with_report(command, cfg, opts);
    result.map(|()| report.expect("successful runs produce a report"))
}

/// Like [`run`], but also hands back the report of a run that failed a gate.
pub fn run_with_report(command: CommandName, cfg: &JobConfig, opts: &RunOptions) -> (Option<Report>, Result<(), CliError>) {
    if let Some(c) = cfg.command {
        if c != command {
            return (None, Err(CliError::Schema(format!("config is for '{c:?}', command line asks for '{command:?}'"))));
        }
    }
    let produced = prepare_out(&opts.out).and_then(|()| match command {
        CommandName::Soliton => soliton::run(cfg, opts),
        CommandName::Evolve => evolve::run(cfg, opts),
        CommandName::Hasimoto => hasimoto::run(cfg, opts),
        CommandName::Verify => verify::run(cfg, opts),
    });
    let (report, fatal) = match produced {
        Ok(p) => p,
        Err(e) => return (None, Err(e)),
    };
    if let Err(e) = report.write(&opts.out) {
        return (Some(report), Err(e));
    }
    let result = if !report.pass && fatal {
        Err(match command {
            CommandName::Verify => {
                let failed: Vec<&str> = report.gates.iter().filter(|g| !g.pass).map(|g| g.name.as_str()).collect();
                CliError::Verify(failed.join(", "))
            }
            _ => report.gate_error().expect("failed report has a failed gate"),
        })
    } else {
        Ok(())
    };
    (Some(report), result)
}
