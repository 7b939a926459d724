//! Plain-text interchange: CSV tables with a fixed header and 17 significant
//! digits, JSON manifests and trajectory indices, and OBJ polylines.
//!
//! Every float is written with `{:.16e}`, which round-trips `f64` exactly, so
//! export followed by import reproduces the samples bit for bit.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backlund::Seed;
use crate::flows::{CurveTrajectory, FlowKind, Monitor, PotentialTrajectory, Scheme, Trajectory};
use crate::frames::{DiscreteCurve, FrameField, FramesError, LaxFrame, Topology, P3};
use crate::hierarchy::{Boundary, Grid, HierarchyError, PotentialField};
use crate::{Flavor, Metric, C64};

/// JSON schema of [`SolitonManifest`].
pub const SOLITON_MANIFEST_SCHEMA: &str = include_str!("../schemas/soliton-manifest.schema.json");
/// JSON schema of [`TrajectoryIndex`].
pub const TRAJECTORY_INDEX_SCHEMA: &str = include_str!("../schemas/trajectory-index.schema.json");

pub const MANIFEST_FORMAT: &str = "filament-lab/soliton-manifest/1";
pub const TRAJECTORY_FORMAT: &str = "filament-lab/trajectory/1";

pub const CURVE_HEADER: [&str; 4] = ["x", "g1", "g2", "g3"];
pub const POTENTIAL_HEADER: [&str; 5] = ["x", "q_re", "q_im", "r_re", "r_im"];
pub const FRAME_HEADER: [&str; 12] = ["x", "e0_1", "e0_2", "e0_3", "e1_1", "e1_2", "e1_3", "e2_1", "e2_2", "e2_3", "k1", "k2"];
pub const LAX_FRAME_HEADER: [&str; 12] =
    ["x", "t", "lambda_re", "lambda_im", "e11_re", "e11_im", "e12_re", "e12_im", "e21_re", "e21_im", "e22_re", "e22_im"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed table: {0}")]
    Format(String),
    #[error(transparent)]
    Frames(#[from] FramesError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

pub type Result<T> = std::result::Result<T, IoError>;

/// Scientific notation with 17 significant digits; parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| IoError::Format(format!("line {line}: '{s}' is not a number")))
}

fn write_table<W: Write>(w: W, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    out.flush()?;
    Ok(())
}

/// Rows of a numeric table whose header must begin with `expected`; returns
/// the extra header names and the rows.
fn read_table<R: Read>(r: R, expected: &[&str]) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header.len() < expected.len() || header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(IoError::Format(format!("header {header:?} does not start with {expected:?}")));
    }
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(IoError::Format(format!("line {}: {} fields, expected {}", k + 2, rec.len(), header.len())));
        }
        rows.push(rec.iter().map(|s| parse_f64(s, k + 2)).collect::<Result<Vec<_>>>()?);
    }
    Ok((header[expected.len()..].to_vec(), rows))
}

fn time_column(extra: &[String], rows: &[Vec<f64>], col: usize) -> Result<Option<f64>> {
    match extra {
        [] => Ok(None),
        [t] if t == "t" => {
            let t0 = rows.first().map(|r| r[col]);
            if rows.iter().any(|r| Some(r[col]) != t0) {
                return Err(IoError::Format("the t column must be constant within one slice".into()));
            }
            Ok(t0)
        }
        _ => Err(IoError::Format(format!("unexpected columns {extra:?}"))),
    }
}

/// Spacing implied by an `x` column.
fn spacing(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(IoError::Format("need at least two samples".into()));
    }
    Ok((xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64)
}

// ---------------------------------------------------------------------------
// Curves and potentials

/// `x, g1, g2, g3[, t]` with `x = x₀ + i h`.
pub fn write_curve_csv<W: Write>(w: W, curve: &DiscreteCurve, t: Option<f64>) -> Result<()> {
    let mut header = CURVE_HEADER.to_vec();
    if t.is_some() {
        header.push("t");
    }
    let rows = curve.points.iter().enumerate().map(|(i, p)| {
        let mut row = vec![curve.param(i), p[0], p[1], p[2]];
        row.extend(t);
        row
    });
    write_table(w, &header, rows)
}

/// Parse a curve table. The spacing is taken from `h` when given (as stored
/// in a trajectory index) and from the `x` column otherwise.
pub fn read_curve_csv<R: Read>(r: R, metric: Metric, topology: Topology, h: Option<f64>) -> Result<(DiscreteCurve, Option<f64>)> {
    let (extra, rows) = read_table(r, &CURVE_HEADER)?;
    let t = time_column(&extra, &rows, 4)?;
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let h = match h {
        Some(h) => h,
        None => spacing(&xs)?,
    };
    let points = rows.iter().map(|r| [r[1], r[2], r[3]]).collect();
    Ok((DiscreteCurve::new(points, metric, topology, h, xs[0])?, t))
}

/// `x, q_re, q_im, r_re, r_im[, t]`.
pub fn write_potential_csv<W: Write>(w: W, u: &PotentialField, t: Option<f64>) -> Result<()> {
    let mut header = POTENTIAL_HEADER.to_vec();
    if t.is_some() {
        header.push("t");
    }
    let rows = (0..u.grid.n).map(|i| {
        let mut row = vec![u.grid.x(i), u.q[i].re, u.q[i].im, u.r[i].re, u.r[i].im];
        row.extend(t);
        row
    });
    write_table(w, &header, rows)
}

/// Parse a potential table. Without an explicit `grid` the grid is inferred
/// from the `x` column.
pub fn read_potential_csv<R: Read>(r: R, flavor: Flavor, boundary: Boundary, grid: Option<Grid>) -> Result<(PotentialField, Option<f64>)> {
    let (extra, rows) = read_table(r, &POTENTIAL_HEADER)?;
    let t = time_column(&extra, &rows, 5)?;
    let grid = match grid {
        Some(g) if g.n == rows.len() => g,
        Some(g) => return Err(IoError::Format(format!("table has {} rows, grid has {}", rows.len(), g.n))),
        None => {
            let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let l = spacing(&xs)? * xs.len() as f64;
            match boundary {
                Boundary::Periodic => Grid::periodic(xs.len(), l, xs[0])?,
                Boundary::Open => Grid::open(xs.len(), l, xs[0])?,
            }
        }
    };
    let q = rows.iter().map(|r| C64::new(r[1], r[2])).collect();
    let rr = rows.iter().map(|r| C64::new(r[3], r[4])).collect();
    Ok((PotentialField::new(flavor, grid, q, rr)?, t))
}

/// Frame field of a curve: `x`, the nine frame components and `k₁, k₂`.
pub fn write_frame_csv<W: Write>(w: W, curve: &DiscreteCurve, frame: &FrameField) -> Result<()> {
    let rows = frame.frames.iter().enumerate().map(|(i, f)| {
        let mut row = vec![curve.param(i)];
        f.iter().for_each(|e| row.extend_from_slice(e));
        row.push(frame.k1[i]);
        row.push(frame.k2[i]);
        row
    });
    write_table(w, &FRAME_HEADER, rows)
}

/// Frame rows `(x, [e₀, e₁, e₂], k₁, k₂)` of a table written by [`write_frame_csv`].
pub fn read_frame_csv<R: Read>(r: R) -> Result<Vec<(f64, [P3; 3], f64, f64)>> {
    let (extra, rows) = read_table(r, &FRAME_HEADER)?;
    if !extra.is_empty() {
        return Err(IoError::Format(format!("unexpected columns {extra:?}")));
    }
    Ok(rows
        .iter()
        .map(|r| (r[0], [[r[1], r[2], r[3]], [r[4], r[5], r[6]], [r[7], r[8], r[9]]], r[10], r[11]))
        .collect())
}

/// Extended frame samples, one row per `(λ, t, x)`, `λ` slowest.
pub fn write_lax_frame_csv<W: Write>(w: W, frame: &LaxFrame) -> Result<()> {
    let h = frame.grid.h();
    let rows = frame.lambdas.iter().enumerate().flat_map(move |(l, lam)| {
        (0..frame.nt()).flat_map(move |k| {
            (0..frame.nx()).map(move |i| {
                let m = &frame.e[l][k][i].m;
                vec![
                    frame.grid.x0 + i as f64 * h,
                    frame.t(k),
                    lam.re,
                    lam.im,
                    m[0].re,
                    m[0].im,
                    m[1].re,
                    m[1].im,
                    m[2].re,
                    m[2].im,
                    m[3].re,
                    m[3].im,
                ]
            })
        })
    });
    write_table(w, &LAX_FRAME_HEADER, rows)
}

/// Vertices of each curve followed by one polyline per curve; closed curves
/// repeat their first vertex.
pub fn write_obj<W: Write>(mut w: W, curves: &[&DiscreteCurve]) -> Result<()> {
    writeln!(w, "# filament-lab polylines")?;
    let mut base = 1usize;
    let mut lines = Vec::with_capacity(curves.len());
    for c in curves {
        for p in &c.points {
            writeln!(w, "v {} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]))?;
        }
        let mut idx: Vec<usize> = (base..base + c.n()).collect();
        if c.topology == Topology::Closed {
            idx.push(base);
        }
        lines.push(idx);
        base += c.n();
    }
    for idx in lines {
        let s: Vec<String> = idx.iter().map(usize::to_string).collect();
        writeln!(w, "l {}", s.join(" "))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Manifests

/// Files written for one soliton family, relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFiles {
    pub potential: Vec<String>,
    pub curves: Vec<String>,
    pub frame: Option<String>,
}

/// Metadata of a multi-soliton family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonManifest {
    pub format: String,
    pub flavor: Flavor,
    pub grid: Grid,
    pub times: Vec<f64>,
    pub seeds: Vec<Seed>,
    pub poles: Vec<C64>,
    /// How a two-soliton potential was assembled (`sequential` or `permutability`).
    pub route: Option<String>,
    pub files: ManifestFiles,
    /// Measured residuals keyed by gate name.
    pub gates: std::collections::BTreeMap<String, f64>,
}

/// Pretty, deterministic JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?).map_err(|source| IoError::File { path: path.into(), source })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| IoError::File { path: path.into(), source })?;
    Ok(serde_json::from_str(&text)?)
}

// ---------------------------------------------------------------------------
// Trajectories

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SliceKind {
    Curve,
    Potential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceEntry {
    pub file: String,
    pub t: f64,
    /// Sample spacing of a curve slice (redistribution may change it).
    pub h: Option<f64>,
}

/// JSON index of a trajectory directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryIndex {
    pub format: String,
    pub kind: SliceKind,
    pub flow: FlowKind,
    pub scheme: Scheme,
    pub t0: f64,
    pub dt: f64,
    pub flavor: Option<Flavor>,
    pub metric: Metric,
    pub topology: Option<Topology>,
    pub grid: Option<Grid>,
    pub slices: Vec<SliceEntry>,
    pub redistribution: Vec<f64>,
    pub monitors: Vec<Monitor>,
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|source| IoError::File { path: path.into(), source })
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|source| IoError::File { path: path.into(), source })
}

fn slice_name(stem: &str, k: usize) -> String {
    format!("{stem}_{k:05}.csv")
}

fn index_of<S>(traj: &Trajectory<S>, kind: SliceKind, monitors: &[Monitor]) -> TrajectoryIndex {
    TrajectoryIndex {
        format: TRAJECTORY_FORMAT.into(),
        kind,
        flow: traj.flow,
        scheme: traj.scheme,
        t0: traj.t0,
        dt: traj.dt,
        flavor: None,
        metric: Metric::Euclidean,
        topology: None,
        grid: None,
        slices: Vec::new(),
        redistribution: traj.redistribution.clone(),
        monitors: monitors.to_vec(),
    }
}

/// Write `stem_00000.csv, …` and `stem.json` into `dir`; returns the index path.
pub fn write_curve_trajectory(dir: &Path, stem: &str, traj: &CurveTrajectory, monitors: &[Monitor]) -> Result<PathBuf> {
    let mut index = index_of(traj, SliceKind::Curve, monitors);
    let first = &traj.slices[0];
    index.metric = first.metric;
    index.topology = Some(first.topology);
    for (k, c) in traj.slices.iter().enumerate() {
        let file = slice_name(stem, k);
        write_curve_csv(create(&dir.join(&file))?, c, Some(traj.t(k)))?;
        index.slices.push(SliceEntry { file, t: traj.t(k), h: Some(c.h) });
    }
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, &index)?;
    Ok(path)
}

pub fn write_potential_trajectory(dir: &Path, stem: &str, traj: &PotentialTrajectory, monitors: &[Monitor]) -> Result<PathBuf> {
    let mut index = index_of(traj, SliceKind::Potential, monitors);
    let first = &traj.slices[0];
    index.flavor = Some(first.flavor);
    index.metric = first.flavor.metric();
    index.grid = Some(first.grid);
    for (k, u) in traj.slices.iter().enumerate() {
        let file = slice_name(stem, k);
        write_potential_csv(create(&dir.join(&file))?, u, Some(traj.t(k)))?;
        index.slices.push(SliceEntry { file, t: traj.t(k), h: None });
    }
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, &index)?;
    Ok(path)
}

fn base_dir(index_path: &Path) -> PathBuf {
    index_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn read_curve_trajectory(index_path: &Path) -> Result<(CurveTrajectory, TrajectoryIndex)> {
    let index: TrajectoryIndex = read_json(index_path)?;
    let topology = match (index.kind, index.topology) {
        (SliceKind::Curve, Some(t)) => t,
        _ => return Err(IoError::Format("index does not describe a curve trajectory".into())),
    };
    let dir = base_dir(index_path);
    let slices = index
        .slices
        .iter()
        .map(|s| Ok(read_curve_csv(open(&dir.join(&s.file))?, index.metric, topology, s.h)?.0))
        .collect::<Result<Vec<_>>>()?;
    let traj = Trajectory { slices, t0: index.t0, dt: index.dt, scheme: index.scheme, flow: index.flow, redistribution: index.redistribution.clone() };
    Ok((traj, index))
}

pub fn read_potential_trajectory(index_path: &Path) -> Result<(PotentialTrajectory, TrajectoryIndex)> {
    let index: TrajectoryIndex = read_json(index_path)?;
    let (flavor, grid) = match (index.kind, index.flavor, index.grid) {
        (SliceKind::Potential, Some(f), Some(g)) => (f, g),
        _ => return Err(IoError::Format("index does not describe a potential trajectory".into())),
    };
    let dir = base_dir(index_path);
    let slices = index
        .slices
        .iter()
        .map(|s| Ok(read_potential_csv(open(&dir.join(&s.file))?, flavor, grid.boundary, Some(grid))?.0))
        .collect::<Result<Vec<_>>>()?;
    let traj = Trajectory { slices, t0: index.t0, dt: index.dt, scheme: index.scheme, flow: index.flow, redistribution: index.redistribution.clone() };
    Ok((traj, index))
}

/// `t` followed by one column per monitor.
pub fn write_monitors_csv<W: Write>(w: W, t0: f64, dt: f64, monitors: &[Monitor]) -> Result<()> {
    let mut header = vec!["t"];
    header.extend(monitors.iter().map(|m| m.name.as_str()));
    let n = monitors.iter().map(|m| m.values.len()).max().unwrap_or(0);
    let rows = (0..n).map(|k| {
        let mut row = vec![t0 + k as f64 * dt];
        row.extend(monitors.iter().map(|m| m.values.get(k).copied().unwrap_or(f64::NAN)));
        row
    });
    write_table(w, &header, rows)
}
