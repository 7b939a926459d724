use std::io::BufWriter;

use filament_lab::flows::{FlowKind, PotentialTrajectory};
use filament_lab::frames::{self, DiscreteCurve, FrameField, Topology, P3};
use filament_lab::hierarchy::PotentialField;
use filament_lab::io::{self, SliceKind};
use filament_lab::{Flavor, Mat2C, C64};

use crate::config::{Direction, JobConfig};
use crate::evolve::{load_initial, Initial};
use crate::{create_file, CliError, Report, RunOptions};

const ROUND_TRIP: f64 = 1e-4;

/// Spectral parameter at which the h-frame potential of a closed curve with
/// rotation rate `c0` reproduces the curve.
pub(crate) fn hframe_lambda(c0: f64) -> f64 {
    0.5 * c0
}

struct Forward {
    potential: PotentialField,
    frame: FrameField,
    lambda: f64,
}

fn forward(curve: &DiscreteCurve, report: &mut Report) -> Result<Forward, CliError> {
    if curve.metric != filament_lab::Metric::Euclidean {
        return Err(CliError::Schema("the Hasimoto map needs a Euclidean curve".into()));
    }
    if curve.topology == Topology::Closed {
        let hol = frames::holonomy(curve)?;
        report.detail("holonomy", hol.angle);
        report.detail("c0", hol.c0);
        if let Ok(a) = hol.frenet_angle {
            report.detail("frenet_holonomy", a);
        }
        let (frame, gap) = frames::build_periodic_hframe(curve)?;
        report.detail("hframe_gap", gap);
        let (potential, c0) = frames::hasimoto_periodic(curve)?;
        Ok(Forward { potential, frame, lambda: hframe_lambda(c0) })
    } else {
        let frame = frames::build_pframe(curve, None)?;
        Ok(Forward { potential: frames::hasimoto(curve)?, frame, lambda: 0.0 })
    }
}

/// Sym reconstruction of each slice at `lambda`, shifted so that the first
/// slice starts at `base`.
fn backward(slices: &[PotentialField], t0: f64, dt: f64, lambda: f64, base: Option<P3>) -> Result<Vec<DiscreteCurve>, CliError> {
    if slices[0].flavor != Flavor::Su2 {
        return Err(CliError::Schema("the inverse Hasimoto map needs an SU2 potential".into()));
    }
    let frame = frames::integrate_lax_frame(slices, t0, dt, 2, &[C64::new(lambda, 0.0)], Mat2C::identity())?;
    let mut curves = frames::sym_curve(&frame, lambda)?.curves;
    if let Some(p) = base {
        let o = curves[0].points[0];
        let shift = [p[0] - o[0], p[1] - o[1], p[2] - o[2]];
        for c in &mut curves {
            c.points.iter_mut().for_each(|q| (0..3).for_each(|k| q[k] += shift[k]));
        }
    }
    Ok(curves)
}

fn potential_input(cfg: &JobConfig) -> Result<PotentialTrajectory, CliError> {
    if let Some(path) = &cfg.input.trajectory {
        let index: io::TrajectoryIndex = io::read_json(path)?;
        if index.kind == SliceKind::Potential {
            return Ok(io::read_potential_trajectory(path)?.0);
        }
    }
    match load_initial(cfg)? {
        Initial::Potential(u) => Ok(PotentialTrajectory::from_slices(vec![u], 0.0, 0.0, 2)?),
        Initial::Curve(_) => Err(CliError::Schema("backward direction needs a potential input".into())),
    }
}

fn curve_input(cfg: &JobConfig) -> Result<DiscreteCurve, CliError> {
    match load_initial(cfg)? {
        Initial::Curve(c) => Ok(c),
        Initial::Potential(_) => Err(CliError::Schema("this direction needs a curve input".into())),
    }
}

fn write_potential(opts: &RunOptions, u: &PotentialField, files: &mut Vec<String>) -> Result<(), CliError> {
    let f = create_file(&opts.out.join("potential.csv"))?;
    io::write_potential_csv(BufWriter::new(f), u, None).map_err(CliError::output)?;
    files.push("potential.csv".into());
    Ok(())
}

fn write_frame(opts: &RunOptions, curve: &DiscreteCurve, frame: &FrameField, files: &mut Vec<String>) -> Result<(), CliError> {
    let f = create_file(&opts.out.join("frame.csv"))?;
    io::write_frame_csv(BufWriter::new(f), curve, frame).map_err(CliError::output)?;
    files.push("frame.csv".into());
    Ok(())
}

fn write_curves(opts: &RunOptions, curves: &[DiscreteCurve], t0: f64, dt: f64, obj: bool, files: &mut Vec<String>) -> Result<(), CliError> {
    for (k, c) in curves.iter().enumerate() {
        let name = if curves.len() == 1 { "curve.csv".to_owned() } else { format!("curve_{k:05}.csv") };
        let f = create_file(&opts.out.join(&name))?;
        io::write_curve_csv(BufWriter::new(f), c, Some(t0 + k as f64 * dt)).map_err(CliError::output)?;
        files.push(name);
    }
    if obj {
        let refs: Vec<&DiscreteCurve> = curves.iter().collect();
        let f = create_file(&opts.out.join("curves.obj"))?;
        io::write_obj(BufWriter::new(f), &refs).map_err(CliError::output)?;
        files.push("curves.obj".into());
    }
    Ok(())
}

/// Phase of `Σ q̄₁ q₂`.
fn relative_phase(a: &PotentialField, b: &PotentialField) -> f64 {
    a.q.iter().zip(&b.q).map(|(x, y)| x.conj() * y).sum::<C64>().arg()
}

pub(crate) fn run(cfg: &JobConfig, opts: &RunOptions) -> Result<(Report, bool), CliError> {
    let direction = cfg.direction.unwrap_or(Direction::Forward);
    let mut report = Report::new("hasimoto");
    let mut files = Vec::new();
    match direction {
        Direction::Forward => {
            let curve = curve_input(cfg)?;
            let fw = forward(&curve, &mut report)?;
            report.detail("max_abs_q", fw.potential.max_abs());
            write_potential(opts, &fw.potential, &mut files)?;
            write_frame(opts, &curve, &fw.frame, &mut files)?;
        }
        Direction::Backward => {
            let traj = potential_input(cfg)?;
            if !matches!(traj.flow, FlowKind::Potential { j: 2 }) && traj.len() > 1 {
                return Err(CliError::Schema("backward reconstruction of a trajectory needs flow 2".into()));
            }
            let curves = backward(&traj.slices, traj.t0, traj.dt, 0.0, cfg.basepoint.position)?;
            report.detail("slices", curves.len());
            report.detail("topology", curves[0].topology);
            report.detail("speed_deviation", curves.iter().map(|c| c.speed_deviation()).fold(0.0, f64::max));
            write_curves(opts, &curves, traj.t0, traj.dt, cfg.output.obj, &mut files)?;
        }
        Direction::RoundTrip => {
            let curve = curve_input(cfg)?;
            let fw = forward(&curve, &mut report)?;
            let rebuilt = backward(std::slice::from_ref(&fw.potential), 0.0, 0.0, fw.lambda, cfg.basepoint.position)?.remove(0);
            let n = curve.n();
            let rms = if rebuilt.n() >= n { frames::aligned_rms(&curve.points, &rebuilt.points[..n]) } else { f64::INFINITY };
            report.check("round_trip", rms, cfg.tolerance("round_trip", ROUND_TRIP));
            let again = DiscreteCurve::new(rebuilt.points[..n.min(rebuilt.n())].to_vec(), curve.metric, curve.topology, curve.h, curve.x0)
                .ok()
                .and_then(|c| forward(&c, &mut Report::new("hasimoto")).ok());
            if let Some(f) = again {
                report.detail("phase", relative_phase(&fw.potential, &f.potential));
            }
            write_potential(opts, &fw.potential, &mut files)?;
            write_curves(opts, std::slice::from_ref(&rebuilt), 0.0, 0.0, cfg.output.obj, &mut files)?;
        }
    }
    report.files = files;
    Ok((report, opts.strict))
}
