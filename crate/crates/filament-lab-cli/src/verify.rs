use std::f64::consts::PI;

use filament_lab::backlund::{carry_seeds, default_flow, soliton_factory, Sampling, Seed};
use filament_lab::flows::{self, curve_monitors, potential_monitors, EvolveOptions, Monitor};
use filament_lab::frames::{self, DiscreteCurve, FrameModel, VacuumFrame};
use filament_lab::hierarchy::{lax_flatness, Grid};
use filament_lab::io::{self, SliceKind};
use filament_lab::{Flavor, C64};

use crate::config::{Fault, JobConfig, SuiteName};
use crate::{CliError, Report, RunOptions};

const FLATNESS: f64 = 1e-6;
const DRIFT: f64 = 1e-5;
const PERMUTABILITY: f64 = 1e-8;
const REALITY: f64 = 1e-8;
const SPEED: f64 = 1e-6;
const HOLONOMY: f64 = 1e-3;
const DT: f64 = 1e-3;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn five(grid: Grid, lambdas: Vec<C64>) -> Sampling {
    Sampling::uniform(grid, -2.0 * DT, DT, 5, lambdas)
}

fn periodic(n: usize, l: f64) -> Grid {
    Grid::periodic(n, l, -0.5 * l).expect("suite grid")
}

fn nls_seed() -> Seed {
    Seed::Su2 { alpha: c(0.0, 1.0), v: [c(1.0, 0.0), c(1.0, 0.0)] }
}

/// Seed and grid of a one-soliton per flavor.
fn one_soliton(flavor: Flavor) -> (Seed, Grid) {
    match flavor {
        Flavor::Su2 => (nls_seed(), periodic(512, 24.0)),
        Flavor::Su11 => (Seed::Su11 { alpha: c(0.3, 1.0), v: [c(2.0, 0.0), c(1.0, 0.0)] }, Grid::open(300, 4.0, 0.5).expect("suite grid")),
        Flavor::Sl2r => (Seed::Sl2r { alpha1: 1.0, alpha2: -1.0, v1: [1.0, 1.0], v2: [1.0, -1.0] }, periodic(512, 24.0)),
        Flavor::Kdv => (Seed::Kdv { c: 1.0, xi: 0.0 }, periodic(512, 32.0)),
    }
}

fn flatness(cfg: &JobConfig, report: &mut Report) -> Result<(), CliError> {
    for flavor in [Flavor::Su2, Flavor::Kdv] {
        let (seed, grid) = one_soliton(flavor);
        let family = soliton_factory(flavor, &[seed], &five(grid, vec![]))?;
        let mut worst: f64 = 0.0;
        for l in [c(0.0, 0.0), c(0.5, 0.0), c(0.0, 0.5)] {
            worst = worst.max(lax_flatness(&family.potentials, DT, default_flow(flavor), l)?);
        }
        report.check(&format!("flatness:{}", flavor_name(flavor)), worst, cfg.tolerance("flatness", FLATNESS));
    }
    Ok(())
}

fn flavor_name(f: Flavor) -> &'static str {
    match f {
        Flavor::Su2 => "su2",
        Flavor::Su11 => "su11",
        Flavor::Sl2r => "sl2r",
        Flavor::Kdv => "kdv",
    }
}

fn drift_checks(report: &mut Report, cfg: &JobConfig, label: &str, monitors: &[Monitor]) {
    for m in monitors.iter().filter(|m| m.name.starts_with('H')) {
        report.check(&format!("conservation:{label}:{}", m.name), m.drift(1e-8), cfg.tolerance("conservation", DRIFT));
    }
}

fn conservation(cfg: &JobConfig, report: &mut Report) -> Result<(), CliError> {
    if let Some(path) = &cfg.input.trajectory {
        let index: io::TrajectoryIndex = io::read_json(path)?;
        let monitors = match index.kind {
            SliceKind::Potential => potential_monitors(&io::read_potential_trajectory(path)?.0)?,
            SliceKind::Curve => curve_monitors(&io::read_curve_trajectory(path)?.0)?,
        };
        drift_checks(report, cfg, "input", &monitors);
        return Ok(());
    }
    let quiet = EvolveOptions { save_every: 50, redistribute: false };
    for flavor in [Flavor::Su2, Flavor::Kdv] {
        let (seed, grid) = one_soliton(flavor);
        let family = soliton_factory(flavor, &[seed], &Sampling::new(grid, vec![0.0], vec![]))?;
        let j = default_flow(flavor);
        let dt = flows::default_dt(grid.h(), j);
        let traj = flows::evolve_potential_with(&family.potentials[0], j, 0.2, dt, &quiet)?;
        drift_checks(report, cfg, flavor_name(flavor), &potential_monitors(&traj)?);
    }
    Ok(())
}

/// `p̃₁` of the second Bäcklund step, with the numerator sign flipped under
/// the injected fault.
fn permuted(a1: C64, p1: C64, a2: C64, p2: C64, fault: bool) -> C64 {
    let a2b = a2.conj();
    let sign = if fault { -1.0 } else { 1.0 };
    let num = ((a1 - a2b) * p1 + (a1 - a2) * p1 * p2.norm_sqr() - (a2 - a2b) * p2) * sign;
    let den = (a1 - a2) + (a1 - a2b) * p2.norm_sqr() - (a2 - a2b) * p1 * p2.conj();
    num / den
}

/// Two-soliton potential from the closed form against sequential dressing.
fn permutability(cfg: &JobConfig, report: &mut Report) -> Result<(), CliError> {
    let fault = cfg.inject == Some(Fault::PermutabilitySign);
    let grid = periodic(512, 24.0);
    let times = [0.0, 0.05];
    let (a1, v1) = (c(0.0, 1.0), [c(1.0, 0.0), c(1.0, 0.0)]);
    let (a2, v2) = (c(0.3, 0.6), [c(1.0, 0.0), c(-1.0, 0.5)]);
    let seeds = [Seed::Su2 { alpha: a1, v: v1 }, Seed::Su2 { alpha: a2, v: v2 }];
    let family = soliton_factory(Flavor::Su2, &carry_seeds(&seeds)?, &Sampling::new(grid, times.to_vec(), vec![]))?;
    let vacuum = VacuumFrame::new(Flavor::Su2, 2);
    let k2i = |a: C64| (a - a.conj()) * c(0.0, 2.0);
    let mut gap: f64 = 0.0;
    for (u, &t) in family.potentials.iter().zip(&times) {
        for i in 0..grid.n {
            let x = grid.x(i);
            let y1 = vacuum.eval(x, t, a1)?.0.inv().mul_vec(v1);
            let y2 = vacuum.eval(x, t, a2)?.0.inv().mul_vec(v2);
            let (p1, p2) = (y1[0] / y1[1], y2[0] / y2[1]);
            let pt = permuted(a1, p1, a2, p2, fault);
            let q = k2i(a2) * p2 / (1.0 + p2.norm_sqr()) + k2i(a1) * pt / (1.0 + pt.norm_sqr());
            gap = gap.max((q - u.q[i]).norm());
        }
    }
    report.check("permutability:potential", gap, cfg.tolerance("permutability", PERMUTABILITY));
    Ok(())
}

fn reality(cfg: &JobConfig, report: &mut Report) -> Result<(), CliError> {
    for flavor in [Flavor::Su2, Flavor::Su11, Flavor::Sl2r, Flavor::Kdv] {
        let (seed, grid) = one_soliton(flavor);
        let lambdas = vec![c(0.5, 0.0), c(-0.5, 0.0), c(0.3, 0.7), c(0.3, -0.7)];
        let family = soliton_factory(flavor, &[seed], &Sampling::new(grid, vec![0.0, 0.1], lambdas))?;
        report.check(&format!("reality:{}", flavor_name(flavor)), family.frame.reality, cfg.tolerance("reality", REALITY));
    }
    Ok(())
}

fn trefoil(n: usize) -> Result<DiscreteCurve, CliError> {
    Ok(DiscreteCurve::closed_from_parametric(|t| [t.sin() + 2.0 * (2.0 * t).sin(), t.cos() - 2.0 * (2.0 * t).cos(), -(3.0 * t).sin()], n)?)
}

fn knot_run() -> Result<(DiscreteCurve, Vec<Monitor>), CliError> {
    let knot = trefoil(128)?;
    let traj = flows::evolve_vfe_with(&knot, 0.05, DT, &EvolveOptions { save_every: 10, redistribute: true })?;
    Ok((knot, curve_monitors(&traj)?))
}

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

fn arc_length(cfg: &JobConfig, report: &mut Report, run: &(DiscreteCurve, Vec<Monitor>)) {
    let speed = run.1.iter().find(|m| m.name == "speed_deviation").map_or(f64::NAN, Monitor::max);
    report.check("arc-length:speed", speed, cfg.tolerance("speed", SPEED));
}

fn holonomy(cfg: &JobConfig, report: &mut Report, run: &(DiscreteCurve, Vec<Monitor>)) -> Result<(), CliError> {
    let tol = cfg.tolerance("holonomy", HOLONOMY);
    let values = run.1.iter().find(|m| m.name == "holonomy").map(|m| m.values.clone()).unwrap_or_default();
    let drift = values.iter().fold(0.0f64, |a, v| a.max(wrap(v - values[0]).abs()));
    report.check("holonomy:drift", if values.is_empty() { f64::NAN } else { drift }, tol);
    let hol = frames::holonomy(&run.0)?;
    let frenet = hol.frenet_angle.map_or(f64::NAN, |f| wrap(f - hol.angle).abs());
    report.check("holonomy:frenet", frenet, tol);
    Ok(())
}

pub(crate) fn run(cfg: &JobConfig, opts: &RunOptions) -> Result<(Report, bool), CliError> {
    let suites: Vec<SuiteName> = if !opts.suites.is_empty() {
        opts.suites.clone()
    } else {
        cfg.suites.clone().unwrap_or_else(|| SuiteName::ALL.to_vec())
    };
    let mut report = Report::new("verify");
    report.detail("suites", suites.iter().map(|s| s.name()).collect::<Vec<_>>());
    let mut knot: Option<(DiscreteCurve, Vec<Monitor>)> = None;
    for suite in &suites {
        match suite {
            SuiteName::Flatness => flatness(cfg, &mut report)?,
            SuiteName::Conservation => conservation(cfg, &mut report)?,
            SuiteName::Permutability => permutability(cfg, &mut report)?,
            SuiteName::Reality => reality(cfg, &mut report)?,
            SuiteName::ArcLength | SuiteName::Holonomy => {
                if knot.is_none() {
                    knot = Some(knot_run()?);
                }
                let run = knot.as_ref().expect("knot run");
                if *suite == SuiteName::ArcLength {
                    arc_length(cfg, &mut report, run);
                } else {
                    holonomy(cfg, &mut report, run)?;
                }
            }
        }
    }
    Ok((report, true))
}
