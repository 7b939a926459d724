use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use filament_lab::backlund::{self, carry_seeds, soliton_factory, vfe_permutability, Family, Sampling, Seed};
use filament_lab::frames::{DiscreteCurve, FrameModel, VacuumFrame};
use filament_lab::hierarchy::{lax_flatness, Grid, PotentialField};
use filament_lab::io::{self, ManifestFiles, SolitonManifest, MANIFEST_FORMAT};
use filament_lab::{Flavor, C64};

use crate::config::{JobConfig, Route};
use crate::{create_file, CliError, Report, RunOptions};

const REALITY: f64 = 1e-8;
const FLATNESS: f64 = 1e-6;
const PERMUTABILITY: f64 = 1e-8;
const AUX_DT: f64 = 1e-3;

pub(crate) fn default_grid() -> Grid {
    Grid::periodic(512, 24.0, -12.0).expect("default grid is valid")
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn stored_lambdas(seeds: &[Seed]) -> Vec<C64> {
    let poles: Vec<C64> = seeds.iter().flat_map(|s| s.poles()).collect();
    [c(0.0, 0.0), c(0.5, 0.0), c(0.2, 0.25), c(0.2, -0.25), c(-0.3, 0.35), c(-0.3, -0.35)]
        .into_iter()
        .filter(|l| poles.iter().all(|p| (p - l).norm() > 1e-9))
        .take(4)
        .collect()
}

fn sample_times(cfg: &JobConfig) -> Result<Vec<f64>, CliError> {
    let Some(tc) = cfg.time else { return Ok(vec![0.0]) };
    if !tc.t.is_finite() {
        return Err(CliError::Schema("time.t must be finite".into()));
    }
    let dt = tc.dt.unwrap_or(0.01);
    if !(dt > 0.0) {
        return Err(CliError::Schema("time.dt must be positive".into()));
    }
    let steps = (tc.t.abs() / dt).round() as usize;
    let every = tc.save_every.unwrap_or(1).max(1);
    let sign = tc.t.signum();
    let mut times: Vec<f64> = (0..=steps).step_by(every).map(|k| sign * k as f64 * dt).collect();
    if !steps.is_multiple_of(every) {
        times.push(sign * steps as f64 * dt);
    }
    Ok(times)
}

fn su2_pair(seeds: &[Seed]) -> Result<[(C64, [C64; 2]); 2], CliError> {
    match seeds {
        [Seed::Su2 { alpha: a1, v: v1 }, Seed::Su2 { alpha: a2, v: v2 }] => Ok([(*a1, *v1), (*a2, *v2)]),
        _ => Err(CliError::Schema("the permutability route needs exactly two SU2 seeds".into())),
    }
}

fn permuted_potentials(seeds: &[Seed], sampling: &Sampling) -> Result<(Vec<PotentialField>, Vec<Vec<[f64; 3]>>, f64), CliError> {
    let [s1, s2] = su2_pair(seeds)?;
    let vacuum: Arc<dyn FrameModel> = Arc::new(VacuumFrame::new(Flavor::Su2, 2));
    let perm = vfe_permutability(vacuum, sampling, s1, s2)?;
    let n = sampling.grid.n;
    let pots = perm.q12[0]
        .iter()
        .map(|q| PotentialField::from_q(Flavor::Su2, sampling.grid, q[..n].to_vec()))
        .collect::<Result<Vec<_>, _>>()?;
    let curves = perm.gamma12[0].iter().map(|g| g[..n].to_vec()).collect();
    Ok((pots, curves, perm.q_gap))
}

fn flatness(family: &Family, seeds: &[Seed], route: Route, pots: &[PotentialField], times: &[f64], grid: Grid) -> Result<f64, CliError> {
    let j = backlund::default_flow(family.flavor);
    let (slices, dt) = if pots.len() >= 5 && is_uniform(times) {
        (pots.to_vec(), times[1] - times[0])
    } else {
        let t0 = times[0];
        let aux = Sampling::uniform(grid, t0 - 2.0 * AUX_DT, AUX_DT, 5, vec![]);
        let slices = match route {
            Route::Permutability => permuted_potentials(seeds, &aux)?.0,
            Route::Sequential => filament_lab::frames::sample_potentials(family.model.as_ref(), grid, &aux.times)?,
        };
        (slices, AUX_DT)
    };
    let mut worst: f64 = 0.0;
    for l in [c(0.0, 0.0), c(0.5, 0.0), c(0.0, 1.0)] {
        worst = worst.max(lax_flatness(&slices, dt, j, l)?);
    }
    Ok(worst)
}

fn write_with<F>(dir: &Path, name: &str, files: &mut Vec<String>, f: F) -> Result<(), CliError>
where
    F: FnOnce(std::io::BufWriter<std::fs::File>) -> Result<(), io::IoError>,
{
    let file = create_file(&dir.join(name))?;
    f(std::io::BufWriter::new(file)).map_err(CliError::output)?;
    files.push(name.to_owned());
    Ok(())
}

fn is_uniform(times: &[f64]) -> bool {
    times.len() < 3 || times.windows(2).all(|w| ((w[1] - w[0]) - (times[1] - times[0])).abs() < 1e-12)
}

pub(crate) fn run(cfg: &JobConfig, opts: &RunOptions) -> Result<(Report, bool), CliError> {
    let flavor = cfg.flavor();
    let route = cfg.route.unwrap_or(Route::Sequential);
    let grid = match cfg.grid {
        Some(g) => g.grid()?,
        None => default_grid(),
    };
    let times = sample_times(cfg)?;
    let seeds = cfg.seeds.clone();
    if let Some(s) = seeds.iter().find(|s| s.flavor() != flavor) {
        return Err(CliError::Schema(format!("seed of flavor {:?} in a {:?} job", s.flavor(), flavor)));
    }
    let lambdas = stored_lambdas(&seeds);
    let sampling = Sampling::new(grid, times.clone(), lambdas);
    let family = soliton_factory(flavor, &carry_seeds(&seeds)?, &sampling)?;

    let mut report = Report::new("soliton");
    report.detail("route", route.name());
    report.detail("solitons", seeds.len());

    let pair = flavor == Flavor::Su2 && seeds.len() == 2;
    if route == Route::Permutability && !pair {
        return Err(CliError::Schema("the permutability route needs exactly two SU2 seeds".into()));
    }
    let mut pots = family.potentials.clone();
    let mut curves = family.curves.curves.clone();
    if pair {
        let (perm, pts, order_gap) = permuted_potentials(&seeds, &sampling)?;
        let gap = perm.iter().zip(&family.potentials).map(|(a, b)| a.distance(b)).fold(0.0, f64::max);
        report.detail("order_gap", order_gap);
        report.check("permutability", gap, cfg.tolerance("permutability", PERMUTABILITY));
        if route == Route::Permutability {
            curves = pts
                .into_iter()
                .zip(&family.curves.curves)
                .map(|(p, base)| DiscreteCurve::new(p, base.metric, base.topology, base.h, base.x0))
                .collect::<Result<Vec<_>, _>>()?;
            pots = perm;
        }
    }

    report.check("reality", family.frame.reality, cfg.tolerance("reality", REALITY));
    report.check("flatness", flatness(&family, &seeds, route, &pots, &times, grid)?, cfg.tolerance("flatness", FLATNESS));
    report.check("nonsingular", family.singular_locus.len() as f64, 0.0);
    report.detail("max_abs_q", pots.iter().map(|u| u.max_abs()).fold(0.0, f64::max));

    let out = &opts.out;
    let mut files = ManifestFiles { potential: vec![], curves: vec![], frame: None };
    let mut written = Vec::new();
    for (k, (u, t)) in pots.iter().zip(&times).enumerate() {
        let name = format!("potential_{k:05}.csv");
        write_with(out, &name, &mut written, |w| io::write_potential_csv(w, u, Some(*t)))?;
        files.potential.push(name);
    }
    for (k, (g, t)) in curves.iter().zip(&times).enumerate() {
        let name = format!("curve_{k:05}.csv");
        write_with(out, &name, &mut written, |w| io::write_curve_csv(w, g, Some(*t)))?;
        files.curves.push(name);
    }
    if cfg.output.frame {
        let name = "frame.csv".to_owned();
        write_with(out, &name, &mut written, |w| io::write_lax_frame_csv(w, &family.frame))?;
        files.frame = Some(name);
    }
    if cfg.output.obj {
        let refs: Vec<&DiscreteCurve> = curves.iter().collect();
        write_with(out, "curves.obj", &mut written, |w| io::write_obj(w, &refs))?;
    }

    let mut gates = std::collections::BTreeMap::new();
    for g in &report.gates {
        gates.insert(g.name.clone(), g.limit);
    }
    let manifest = SolitonManifest {
        format: MANIFEST_FORMAT.into(),
        flavor,
        grid,
        times,
        seeds: seeds.clone(),
        poles: seeds.iter().flat_map(|s| s.poles()).collect(),
        route: pair.then(|| route.name().to_owned()),
        files,
        gates,
    };
    let text = io::to_json_string(&manifest).map_err(CliError::output)?;
    let mut f = create_file(&out.join("manifest.json"))?;
    f.write_all(text.as_bytes()).map_err(CliError::output)?;
    written.push("manifest.json".into());
    report.files = written;
    Ok((report, true))
}
