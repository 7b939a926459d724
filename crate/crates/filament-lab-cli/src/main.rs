use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use filament_lab_cli::{load_config, run_with_report, CliError, CommandName, JobConfig, RunOptions, SuiteName};

/// Integrable filament flows, solitons and the Hasimoto map.
#[derive(Parser)]
#[command(name = "filament-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a multi-soliton potential, its frame and curve by dressing.
    Soliton(Common),
    /// Integrate a curve or potential flow and record monitors.
    Evolve(Common),
    /// Map a curve to its potential, a potential to a curve, or both ways.
    Hasimoto(Common),
    /// Run the self-check suites.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Job configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Fail with exit code 3 when a monitored gate is exceeded.
    #[arg(long)]
    strict: bool,
    /// Restrict `verify` to these suites (repeatable).
    #[arg(long = "suite", value_parser = parse_suite)]
    suites: Vec<SuiteName>,
}

fn parse_suite(s: &str) -> Result<SuiteName, String> {
    SuiteName::parse(s).ok_or_else(|| {
        let names: Vec<&str> = SuiteName::ALL.iter().map(|s| s.name()).collect();
        format!("unknown suite '{s}' (expected one of {})", names.join(", "))
    })
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("FILAMENT_LAB_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Schema(format!("FILAMENT_LAB_THREADS='{v}' is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Schema(e.to_string()))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let (name, common) = match cli.command {
        Command::Soliton(c) => (CommandName::Soliton, c),
        Command::Evolve(c) => (CommandName::Evolve, c),
        Command::Hasimoto(c) => (CommandName::Hasimoto, c),
        Command::Verify(c) => (CommandName::Verify, c),
    };
    let cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => JobConfig::default(),
    };
    let opts = RunOptions { out: common.out, strict: common.strict, suites: common.suites };
    let (report, result) = run_with_report(name, &cfg, &opts);
    for g in report.iter().flat_map(|r| &r.gates) {
        println!("{} {} {:.3e} <= {:.3e}", if g.pass { "PASS" } else { "FAIL" }, g.name, g.value, g.limit);
    }
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("filament-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
