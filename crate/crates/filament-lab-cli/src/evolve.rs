use std::io::BufWriter;

use filament_lab::flows::{
    self, curve_monitors, default_dt, potential_monitors, CurveTrajectory, EvolveOptions, FlowKind, Monitor, PotentialTrajectory,
};
use filament_lab::frames::{DiscreteCurve, Topology};
use filament_lab::hierarchy::PotentialField;
use filament_lab::io::{self, SliceKind};

use crate::config::{FlowConfig, JobConfig};
use crate::{create_file, open_input, CliError, Report, RunOptions};

const HAMILTONIAN_DRIFT: f64 = 1e-5;
const SPEED: f64 = 1e-6;
const LENGTH_DRIFT: f64 = 1e-5;
const HOLONOMY_DRIFT: f64 = 1e-3;
const TORSION: f64 = 1e-6;
const FLATNESS: f64 = 1e-6;
const DRIFT_FLOOR: f64 = 1e-8;
const MAX_SAVED: usize = 200;

pub(crate) enum Initial {
    Curve(DiscreteCurve),
    Potential(PotentialField),
}

/// Initial data named by `input`: a curve or potential table, or the last
/// slice of a trajectory index.
pub(crate) fn load_initial(cfg: &JobConfig) -> Result<Initial, CliError> {
    let input = &cfg.input;
    if let Some(path) = &input.trajectory {
        let index: io::TrajectoryIndex = io::read_json(path)?;
        return Ok(match index.kind {
            SliceKind::Curve => Initial::Curve(io::read_curve_trajectory(path)?.0.last().clone()),
            SliceKind::Potential => Initial::Potential(io::read_potential_trajectory(path)?.0.last().clone()),
        });
    }
    if let Some(path) = &input.curve {
        let metric = cfg.flavor().metric();
        let (curve, _) = io::read_curve_csv(open_input(path)?, metric, input.topology.topology(), None)?;
        return Ok(Initial::Curve(curve));
    }
    if let Some(path) = &input.potential {
        let grid = cfg.grid.map(|g| g.grid()).transpose()?;
        let (u, _) = io::read_potential_csv(open_input(path)?, cfg.flavor(), cfg.boundary(), grid)?;
        return Ok(Initial::Potential(u));
    }
    Err(CliError::Schema("input needs one of 'curve', 'potential' or 'trajectory'".into()))
}

fn step_and_stride(cfg: &JobConfig, h: f64, flow: FlowConfig) -> Result<(f64, f64, usize), CliError> {
    let tc = cfg.time.ok_or_else(|| CliError::Schema("evolve needs 'time'".into()))?;
    let dt = match (tc.dt, flow) {
        (Some(dt), _) => dt,
        (None, FlowConfig::Airy { .. }) => 1e-3f64.min(0.1 * h * h),
        (None, FlowConfig::Vfe) => default_dt(h, 2),
        (None, FlowConfig::Curve { j } | FlowConfig::Potential { j }) => default_dt(h, j).min(if j >= 4 { 0.5 * h.powi(4) } else { 1.0 }),
    };
    if !(dt > 0.0 && dt.is_finite()) || !(tc.t >= 0.0 && tc.t.is_finite()) {
        return Err(CliError::Schema("time.t must be non-negative and time.dt positive".into()));
    }
    let steps = (tc.t / dt).ceil().max(1.0) as usize;
    let every = tc.save_every.unwrap_or_else(|| steps.div_ceil(MAX_SAVED)).max(1);
    Ok((tc.t, dt, every))
}

fn wrapped_drift(m: &Monitor) -> f64 {
    let Some(&v0) = m.values.first() else { return 0.0 };
    let tau = std::f64::consts::TAU;
    m.values.iter().fold(0.0f64, |a, v| a.max(((v - v0 + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI).abs()))
}

fn find<'a>(monitors: &'a [Monitor], name: &str) -> Option<&'a Monitor> {
    monitors.iter().find(|m| m.name == name)
}

fn curve_gates(report: &mut Report, cfg: &JobConfig, traj: &CurveTrajectory, monitors: &[Monitor]) {
    let first = &traj.slices[0];
    let closed = first.topology != Topology::Open;
    if closed {
        for name in ["H1", "H2", "H3"] {
            if let Some(m) = find(monitors, name) {
                report.check(&format!("{name}_drift"), m.drift(DRIFT_FLOOR), cfg.tolerance("hamiltonian", HAMILTONIAN_DRIFT));
            }
        }
    }
    if traj.flow != (FlowKind::Airy { normalized: false }) {
        if let Some(m) = find(monitors, "speed_deviation") {
            report.check("speed", m.max(), cfg.tolerance("speed", SPEED));
        }
    }
    if first.topology == Topology::Closed {
        if let Some(m) = find(monitors, "length") {
            report.check("length_drift", m.drift(DRIFT_FLOOR), cfg.tolerance("length", LENGTH_DRIFT));
        }
        if let Some(m) = find(monitors, "holonomy") {
            report.check("holonomy_drift", wrapped_drift(m), cfg.tolerance("holonomy", HOLONOMY_DRIFT));
        }
    }
    if matches!(traj.flow, FlowKind::Airy { .. }) && flows::max_torsion(first) < TORSION {
        if let Some(m) = find(monitors, "torsion") {
            report.check("torsion", m.max(), cfg.tolerance("torsion", TORSION));
        }
    }
}

fn potential_gates(report: &mut Report, cfg: &JobConfig, traj: &PotentialTrajectory, monitors: &[Monitor]) {
    for name in ["H1", "H2", "H3"] {
        if let Some(m) = find(monitors, name) {
            report.check(&format!("{name}_drift"), m.drift(DRIFT_FLOOR), cfg.tolerance("hamiltonian", HAMILTONIAN_DRIFT));
        }
    }
    if let Some(m) = find(monitors, "flatness") {
        report.check("flatness", m.max(), cfg.tolerance("flatness", FLATNESS));
    }
    report.detail("max_abs_q", traj.last().max_abs());
}

fn write_monitors(opts: &RunOptions, t0: f64, dt: f64, monitors: &[Monitor], files: &mut Vec<String>) -> Result<(), CliError> {
    let f = create_file(&opts.out.join("monitors.csv"))?;
    io::write_monitors_csv(BufWriter::new(f), t0, dt, monitors).map_err(CliError::output)?;
    files.push("monitors.csv".into());
    Ok(())
}

pub(crate) fn run(cfg: &JobConfig, opts: &RunOptions) -> Result<(Report, bool), CliError> {
    let initial = load_initial(cfg)?;
    let mut report = Report::new("evolve");
    let mut files = Vec::new();
    match initial {
        Initial::Curve(curve) => {
            let flow = cfg.flow.unwrap_or(FlowConfig::Vfe);
            let (t, dt, save_every) = step_and_stride(cfg, curve.h, flow)?;
            let eo = EvolveOptions { save_every, redistribute: true };
            let traj = match flow {
                FlowConfig::Vfe => flows::evolve_vfe_with(&curve, t, dt, &eo)?,
                FlowConfig::Airy { normalized } => flows::evolve_airy_with(&curve, t, dt, normalized, &eo)?,
                FlowConfig::Curve { j } => flows::evolve_curve_flow_j_with(&curve, j, t, dt, &eo)?,
                FlowConfig::Potential { .. } => return Err(CliError::Schema("a potential flow needs a potential input".into())),
            };
            let monitors = curve_monitors(&traj)?;
            curve_gates(&mut report, cfg, &traj, &monitors);
            io::write_curve_trajectory(&opts.out, "trajectory", &traj, &monitors).map_err(CliError::output)?;
            files.extend((0..traj.len()).map(|k| format!("trajectory_{k:05}.csv")));
            files.push("trajectory.json".into());
            write_monitors(opts, traj.t0, traj.dt, &monitors, &mut files)?;
            if cfg.output.obj {
                let refs: Vec<&DiscreteCurve> = traj.slices.iter().collect();
                let f = create_file(&opts.out.join("curves.obj"))?;
                io::write_obj(BufWriter::new(f), &refs).map_err(CliError::output)?;
                files.push("curves.obj".into());
            }
            report.detail("slices", traj.len());
            report.detail("dt", traj.dt);
            report.detail("redistribution", traj.redistribution.iter().copied().fold(0.0, f64::max));
        }
        Initial::Potential(u) => {
            let j = match cfg.flow {
                Some(FlowConfig::Potential { j }) => j,
                None => filament_lab::backlund::default_flow(u.flavor),
                Some(_) => return Err(CliError::Schema("a potential input needs a potential flow".into())),
            };
            let (t, dt, save_every) = step_and_stride(cfg, u.grid.h(), FlowConfig::Potential { j })?;
            let traj = flows::evolve_potential_with(&u, j, t, dt, &EvolveOptions { save_every, redistribute: false })?;
            let monitors = potential_monitors(&traj)?;
            potential_gates(&mut report, cfg, &traj, &monitors);
            io::write_potential_trajectory(&opts.out, "trajectory", &traj, &monitors).map_err(CliError::output)?;
            files.extend((0..traj.len()).map(|k| format!("trajectory_{k:05}.csv")));
            files.push("trajectory.json".into());
            write_monitors(opts, traj.t0, traj.dt, &monitors, &mut files)?;
            report.detail("slices", traj.len());
            report.detail("dt", traj.dt);
        }
    }
    report.files = files;
    Ok((report, opts.strict))
}
