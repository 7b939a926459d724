//! Discrete curves, parallel frames, curvatures and normal holonomy.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::FramesError;
use crate::hierarchy::{Grid, PotentialField};
use crate::liealg::Metric;
use crate::spectral;
use crate::{Flavor, C64};

pub type P3 = [f64; 3];

pub(crate) fn add(a: &P3, b: &P3) -> P3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub(a: &P3, b: &P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn scale(a: &P3, s: f64) -> P3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn cross(a: &P3, b: &P3) -> P3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn edot(a: &P3, b: &P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn det3(a: &P3, b: &P3, c: &P3) -> f64 {
    edot(a, &cross(b, c))
}

/// Reflection through the hyperplane `⟨v, ·⟩ = 0` of the given metric.
fn reflect(metric: Metric, v: &P3, w: &P3) -> P3 {
    let vv = metric.dot(v, v);
    sub(w, &scale(v, 2.0 * metric.dot(v, w) / vv))
}

/// How the samples continue past the last one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Topology {
    Open,
    /// `γ(x + L) = γ(x)`.
    Closed,
    /// `γ(x + L) = γ(x) + shift` (for example a soliton sitting on a line).
    Quasiperiodic { shift: P3 },
}

/// Uniformly sampled curve `γ(x₀ + i h)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCurve {
    pub points: Vec<P3>,
    pub metric: Metric,
    pub topology: Topology,
    pub h: f64,
    pub x0: f64,
}

impl DiscreteCurve {
    pub fn new(points: Vec<P3>, metric: Metric, topology: Topology, h: f64, x0: f64) -> Result<Self, FramesError> {
        let n = points.len();
        if !(h > 0.0 && h.is_finite()) {
            return Err(FramesError::InvalidCurve(format!("spacing {h} must be positive")));
        }
        match topology {
            Topology::Open if n < spectral::FD_STENCIL => {
                return Err(FramesError::InvalidCurve(format!("open curve needs at least {} samples", spectral::FD_STENCIL)))
            }
            Topology::Closed | Topology::Quasiperiodic { .. } if !spectral::valid_grid_size(n) => {
                return Err(FramesError::InvalidCurve(format!("periodic curve needs a power-of-two sample count >= 8, got {n}")))
            }
            _ => {}
        }
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(FramesError::InvalidCurve("non-finite sample".into()));
        }
        Ok(DiscreteCurve { points, metric, topology, h, x0 })
    }

    /// Sample `f` at `x₀ + i h`, `i < n`.
    pub fn from_fn<F: Fn(f64) -> P3>(f: F, n: usize, h: f64, x0: f64, metric: Metric, topology: Topology) -> Result<Self, FramesError> {
        let pts = (0..n).map(|i| f(x0 + i as f64 * h)).collect();
        Self::new(pts, metric, topology, h, x0)
    }

    /// Closed curve `f: [0, 2π) → ℝ³` (any regular parametrization),
    /// resampled at `n` points uniform in Euclidean arc length.
    pub fn closed_from_parametric<F: Fn(f64) -> P3>(f: F, n: usize) -> Result<Self, FramesError> {
        if !spectral::valid_grid_size(n) {
            return Err(FramesError::InvalidCurve(format!("sample count {n} must be a power of two >= 8")));
        }
        let m = 16 * n;
        let two_pi = 2.0 * std::f64::consts::PI;
        let ts: Vec<f64> = (0..m).map(|i| two_pi * i as f64 / m as f64).collect();
        let pts: Vec<P3> = ts.iter().map(|&t| f(t)).collect();
        let mut speed = vec![C64::new(0.0, 0.0); m];
        for k in 0..3 {
            let comp: Vec<f64> = pts.iter().map(|p| p[k]).collect();
            let d = spectral::derivative_real(&comp, two_pi, 1);
            speed.iter_mut().zip(d).for_each(|(s, v)| s.re += v * v);
        }
        speed.iter_mut().for_each(|s| s.re = s.re.sqrt());
        let (anti, mean) = spectral::antiderivative(&speed, two_pi);
        let total = mean.re * two_pi;
        let eval = |t: f64| -> (f64, f64) {
            let v = spectral::evaluate_at(&anti, 0.0, two_pi, &[t])[0].re;
            let sp = spectral::evaluate_at(&speed, 0.0, two_pi, &[t])[0].re;
            (v + mean.re * t - anti[0].re, sp)
        };
        let h = total / n as f64;
        let mut out = Vec::with_capacity(n);
        let mut t = 0.0;
        for i in 0..n {
            let target = i as f64 * h;
            for _ in 0..50 {
                let (s, sp) = eval(t);
                let step = (s - target) / sp;
                t -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            out.push(f(t));
            t += h / eval(t).1;
        }
        Self::new(out, Metric::Euclidean, Topology::Closed, h, 0.0)
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    /// Parameter length: `N h` when periodic, `(N - 1) h` when open.
    pub fn length(&self) -> f64 {
        match self.topology {
            Topology::Open => (self.n() - 1) as f64 * self.h,
            _ => self.n() as f64 * self.h,
        }
    }

    pub fn param(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.h
    }

    /// Derivative of the samples of a vector field along the curve. Periodic
    /// fields on closed or quasiperiodic curves use spectral calculus.
    pub fn field_derivative(&self, f: &[P3], order: u32) -> Vec<P3> {
        let n = f.len();
        let mut out = vec![[0.0; 3]; n];
        for k in 0..3 {
            let comp: Vec<f64> = f.iter().map(|p| p[k]).collect();
            let d = match self.topology {
                Topology::Open => spectral::fd_derivative_real(&comp, self.h, order as usize),
                _ => spectral::derivative_real(&comp, self.length(), order),
            };
            out.iter_mut().zip(d).for_each(|(o, v)| o[k] = v);
        }
        out
    }

    /// `dᵒγ/dxᵒ` at every sample.
    pub fn derivative(&self, order: u32) -> Vec<P3> {
        match self.topology {
            Topology::Quasiperiodic { shift } => {
                let l = self.length();
                let periodic: Vec<P3> = (0..self.n()).map(|i| sub(&self.points[i], &scale(&shift, i as f64 * self.h / l))).collect();
                let mut d = self.field_derivative(&periodic, order);
                if order == 1 {
                    d.iter_mut().for_each(|v| *v = add(v, &scale(&shift, 1.0 / l)));
                }
                d
            }
            _ => self.field_derivative(&self.points, order),
        }
    }

    /// Unit tangents `γₓ / |⟨γₓ, γₓ⟩|^{1/2}`.
    pub fn tangents(&self) -> Vec<P3> {
        self.derivative(1).iter().map(|t| scale(t, 1.0 / self.metric.dot(t, t).abs().sqrt())).collect()
    }

    /// `max |⟨γₓ, γₓ⟩ - σ|` with `σ = ±1` the causal sign at the first sample.
    pub fn speed_deviation(&self) -> f64 {
        let d = self.derivative(1);
        let sigma = self.metric.dot(&d[0], &d[0]).signum();
        d.iter().fold(0.0, |a, t| nan_max(a, (self.metric.dot(t, t) - sigma).abs()))
    }

    /// Point following the last sample (`γ(x₀ + N h)`), when defined.
    pub fn wrap_point(&self) -> Option<P3> {
        match self.topology {
            Topology::Open => None,
            Topology::Closed => Some(self.points[0]),
            Topology::Quasiperiodic { shift } => Some(add(&self.points[0], &shift)),
        }
    }

    pub fn transformed(&self, rot: &Matrix3<f64>, shift: &P3) -> Self {
        let map = |p: &P3| {
            let v = rot * Vector3::from(*p);
            [v[0] + shift[0], v[1] + shift[1], v[2] + shift[2]]
        };
        let topology = match self.topology {
            Topology::Quasiperiodic { shift: s } => {
                let v = rot * Vector3::from(s);
                Topology::Quasiperiodic { shift: [v[0], v[1], v[2]] }
            }
            t => t,
        };
        DiscreteCurve { points: self.points.iter().map(map).collect(), topology, ..self.clone() }
    }

    /// Total Euclidean chord length (closing chord included when periodic).
    pub fn polygon_length(&self) -> f64 {
        let mut total: f64 = self.points.windows(2).map(|w| edot(&sub(&w[1], &w[0]), &sub(&w[1], &w[0])).sqrt()).sum();
        if let Some(w) = self.wrap_point() {
            let d = sub(&w, &self.points[self.n() - 1]);
            total += edot(&d, &d).sqrt();
        }
        total
    }
}

/// Kind of frame stored in a [`FrameField`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameKind {
    Parallel,
    Frenet,
    PeriodicH,
    NullParallel,
    /// `Ad(φ)[δ]` of a Lax frame.
    Adjoint,
}

/// Samples of `(e₀, e₁, e₂)` with the curvatures along `e₁, e₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameField {
    pub kind: FrameKind,
    pub metric: Metric,
    /// `frames[i] = [e₀, e₁, e₂]` at sample `i`.
    pub frames: Vec<[P3; 3]>,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    /// Rotation rate of a periodic h-frame.
    pub c0: Option<f64>,
    /// Frenet torsion.
    pub tau: Option<Vec<f64>>,
}

impl FrameField {
    /// `q = ½(k₁ + i k₂)` at every sample.
    pub fn hasimoto_q(&self) -> Vec<C64> {
        self.k1.iter().zip(&self.k2).map(|(a, b)| C64::new(0.5 * a, 0.5 * b)).collect()
    }

    /// Max deviation of the Gram matrix of each frame from the metric's
    /// reference Gram (identity for Euclidean, `D₃` for null frames).
    pub fn orthogonality_residual(&self) -> f64 {
        let target = match self.kind {
            FrameKind::NullParallel => [[1.0, 0.0, 0.0], [0.0, 0.0, 0.5], [0.0, 0.5, 0.0]],
            _ => {
                let mut g = [[0.0; 3]; 3];
                let f = &self.frames[0];
                for (i, row) in g.iter_mut().enumerate() {
                    row[i] = self.metric.dot(&f[i], &f[i]).signum();
                }
                g
            }
        };
        let mut worst: f64 = 0.0;
        for f in &self.frames {
            for i in 0..3 {
                for j in 0..3 {
                    worst = worst.max((self.metric.dot(&f[i], &f[j]) - target[i][j]).abs());
                }
            }
        }
        worst
    }

    /// Connection coefficients `⟨(e_i)ₓ, e_j⟩` rows, computed by differentiating
    /// the sampled frame (`conn[s][i][j]`).
    pub fn connection(&self, curve: &DiscreteCurve) -> Vec<[[f64; 3]; 3]> {
        let n = self.frames.len();
        let derivs: Vec<Vec<P3>> = (0..3).map(|k| curve.field_derivative(&self.frames.iter().map(|f| f[k]).collect::<Vec<_>>(), 1)).collect();
        (0..n)
            .map(|s| {
                let mut c = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        c[i][j] = self.metric.dot(&derivs[i][s], &self.frames[s][j]);
                    }
                }
                c
            })
            .collect()
    }
}

fn default_normal(t0: &P3, metric: Metric) -> P3 {
    let project = |axis: P3| {
        let tt = metric.dot(t0, t0);
        sub(&axis, &scale(t0, metric.dot(&axis, t0) / tt))
    };
    let z = project([0.0, 0.0, 1.0]);
    let zn = edot(&z, &z).sqrt();
    if zn > 1e-6 {
        z
    } else {
        project([0.0, 1.0, 0.0])
    }
}

fn check_spacing(curve: &DiscreteCurve) -> Result<(), FramesError> {
    let mut chords: Vec<P3> = curve.points.windows(2).map(|w| sub(&w[1], &w[0])).collect();
    if let Some(w) = curve.wrap_point() {
        chords.push(sub(&w, &curve.points[curve.n() - 1]));
    }
    for (i, c) in chords.iter().enumerate() {
        if curve.metric.dot(c, c).abs().sqrt() < 0.5 * curve.h {
            return Err(FramesError::DegenerateTangent { index: i });
        }
    }
    Ok(())
}

/// Transport of the normal vectors `vs` from sample `i` to the next point
/// (`tangent_next` at `next`) by double reflection.
fn transport_step(metric: Metric, p: &P3, next: &P3, t: &P3, t_next: &P3, vs: &[P3]) -> Vec<P3> {
    let v1 = sub(next, p);
    let t_l = reflect(metric, &v1, t);
    let v2 = sub(t_next, &t_l);
    let v2n = metric.dot(&v2, &v2);
    vs.iter()
        .map(|v| {
            let r = reflect(metric, &v1, v);
            if v2n.abs() < 1e-300 {
                r
            } else {
                reflect(metric, &v2, &r)
            }
        })
        .collect()
}

struct Transport {
    tangents: Vec<P3>,
    normals: Vec<[P3; 2]>,
    /// Normals transported once more across the closing chord.
    wrapped: Option<[P3; 2]>,
}

fn transport(curve: &DiscreteCurve, first: [P3; 2]) -> Transport {
    let metric = curve.metric;
    let tangents = curve.tangents();
    let n = curve.n();
    let mut normals = Vec::with_capacity(n);
    normals.push(first);
    let euclid = metric == Metric::Euclidean;
    let fix = |t: &P3, v: [P3; 2]| -> [P3; 2] {
        if euclid {
            let e1 = sub(&v[0], &scale(t, edot(&v[0], t)));
            let e1 = scale(&e1, 1.0 / edot(&e1, &e1).sqrt());
            [e1, cross(t, &e1)]
        } else {
            v
        }
    };
    for i in 0..n - 1 {
        let cur = normals[i];
        let out = transport_step(metric, &curve.points[i], &curve.points[i + 1], &tangents[i], &tangents[i + 1], &cur);
        normals.push(fix(&tangents[i + 1], [out[0], out[1]]));
    }
    let wrapped = curve.wrap_point().map(|w| {
        let cur = normals[n - 1];
        let out = transport_step(metric, &curve.points[n - 1], &w, &tangents[n - 1], &tangents[0], &cur);
        fix(&tangents[0], [out[0], out[1]])
    });
    Transport { tangents, normals, wrapped }
}

/// `max` that propagates NaN from either side.
pub fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Parallel (rotation-minimizing) frame along a Euclidean curve.
///
/// `initial_normal` is projected onto the normal plane at the first sample;
/// by default the `z`-axis is used (the `y`-axis when `z` is nearly tangent).
pub fn build_pframe(curve: &DiscreteCurve, initial_normal: Option<P3>) -> Result<FrameField, FramesError> {
    if curve.metric != Metric::Euclidean {
        return Err(FramesError::WrongMetric);
    }
    check_spacing(curve)?;
    let t0 = curve.tangents()[0];
    let base = match initial_normal {
        Some(v) => {
            let p = sub(&v, &scale(&t0, edot(&v, &t0)));
            if edot(&p, &p).sqrt() < 1e-12 {
                return Err(FramesError::DegenerateNormal);
            }
            p
        }
        None => default_normal(&t0, Metric::Euclidean),
    };
    let e1 = scale(&base, 1.0 / edot(&base, &base).sqrt());
    let tr = transport(curve, [e1, cross(&t0, &e1)]);
    Ok(frame_with_curvatures(curve, tr.tangents, tr.normals, FrameKind::Parallel))
}

fn frame_with_curvatures(curve: &DiscreteCurve, tangents: Vec<P3>, normals: Vec<[P3; 2]>, kind: FrameKind) -> FrameField {
    let dt = curve.field_derivative(&tangents, 1);
    let m = curve.metric;
    let frames: Vec<[P3; 3]> = tangents.iter().zip(&normals).map(|(t, nv)| [*t, nv[0], nv[1]]).collect();
    let (k1, k2) = frames.iter().zip(&dt).map(|(f, d)| (m.dot(d, &f[1]), m.dot(d, &f[2]))).unzip();
    FrameField { kind, metric: m, frames, k1, k2, c0: None, tau: None }
}

/// Frenet frame with curvature and torsion; fails where `|γₓₓ| < 1e-8`.
pub fn build_frenet(curve: &DiscreteCurve) -> Result<FrameField, FramesError> {
    if curve.metric != Metric::Euclidean {
        return Err(FramesError::WrongMetric);
    }
    let d1 = curve.derivative(1);
    let d2 = curve.derivative(2);
    let d3 = curve.derivative(3);
    let mut frames = Vec::with_capacity(curve.n());
    let mut k = Vec::with_capacity(curve.n());
    let mut tau = Vec::with_capacity(curve.n());
    for i in 0..curve.n() {
        let c = cross(&d1[i], &d2[i]);
        let cn = edot(&c, &c);
        if cn.sqrt() < 1e-8 {
            return Err(FramesError::FrenetUndefined { index: i });
        }
        let sp = edot(&d1[i], &d1[i]).sqrt();
        let t = scale(&d1[i], 1.0 / sp);
        let b = scale(&c, 1.0 / cn.sqrt());
        frames.push([t, cross(&b, &t), b]);
        k.push(cn.sqrt() / sp.powi(3));
        tau.push(edot(&c, &d3[i]) / cn);
    }
    let n = curve.n();
    Ok(FrameField { kind: FrameKind::Frenet, metric: Metric::Euclidean, frames, k1: k, k2: vec![0.0; n], c0: None, tau: Some(tau) })
}

/// Potential `q = ½(k₁ + i k₂)` of the parallel frame, defined up to a unit
/// constant phase (the choice of initial normal).
///
/// The grid is periodic for closed curves with trivial holonomy and for
/// quasiperiodic curves, and open otherwise.
pub fn hasimoto(curve: &DiscreteCurve) -> Result<PotentialField, FramesError> {
    hasimoto_with_normal(curve, None)
}

pub fn hasimoto_with_normal(curve: &DiscreteCurve, initial_normal: Option<P3>) -> Result<PotentialField, FramesError> {
    let frame = build_pframe(curve, initial_normal)?;
    let periodic = match curve.topology {
        Topology::Open => false,
        Topology::Quasiperiodic { .. } => true,
        Topology::Closed => holonomy(curve)?.angle.abs() < 1e-8,
    };
    let grid = if periodic { Grid::periodic(curve.n(), curve.length(), curve.x0) } else { Grid::open(curve.n(), curve.n() as f64 * curve.h, curve.x0) }
        .map_err(|e| FramesError::InvalidCurve(e.to_string()))?;
    PotentialField::from_q(Flavor::Su2, grid, frame.hasimoto_q()).map_err(|e| FramesError::InvalidCurve(e.to_string()))
}

/// Normal holonomy of a closed curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Holonomy {
    /// `θ` with `(e₁, e₂)(L) = (e₁, e₂)(0) R(θ)`, in `(-π, π]`.
    pub angle: f64,
    /// Rotation rate making the frame periodic: `c₀ = -θ / L`.
    pub c0: f64,
    /// `-∮τ dx` reduced to `(-π, π]`, when the Frenet frame exists.
    pub frenet_angle: Result<f64, FramesError>,
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

pub fn holonomy(curve: &DiscreteCurve) -> Result<Holonomy, FramesError> {
    if curve.topology != Topology::Closed {
        return Err(FramesError::NotClosed);
    }
    if curve.metric != Metric::Euclidean {
        return Err(FramesError::WrongMetric);
    }
    check_spacing(curve)?;
    let t0 = curve.tangents()[0];
    let e1 = default_normal(&t0, Metric::Euclidean);
    let e1 = scale(&e1, 1.0 / edot(&e1, &e1).sqrt());
    let tr = transport(curve, [e1, cross(&t0, &e1)]);
    let w = tr.wrapped.expect("closed curve wraps");
    let angle = edot(&w[0], &tr.normals[0][1]).atan2(edot(&w[0], &tr.normals[0][0]));
    let frenet_angle = build_frenet(curve).map(|f| {
        let total: f64 = f.tau.as_ref().expect("frenet torsion").iter().sum::<f64>() * curve.h;
        wrap_angle(-total)
    });
    Ok(Holonomy { angle, c0: -angle / curve.length(), frenet_angle })
}

/// Periodic h-frame `(e₀, v₁, v₂) = (e₀, e₁, e₂) diag(1, R(c₀x))` of a closed
/// curve, with curvatures `k̃₁ + i k̃₂ = e^{-i c₀ x}(k₁ + i k₂)` and the
/// closing gap of the frame.
pub fn build_periodic_hframe(curve: &DiscreteCurve) -> Result<(FrameField, f64), FramesError> {
    let hol = holonomy(curve)?;
    let base = build_pframe(curve, None)?;
    let c0 = hol.c0;
    let rotate = |e: &[P3; 3], x: f64| -> [P3; 3] {
        let (s, c) = (c0 * x).sin_cos();
        [e[0], add(&scale(&e[1], c), &scale(&e[2], s)), add(&scale(&e[1], -s), &scale(&e[2], c))]
    };
    let mut frames = Vec::with_capacity(curve.n());
    let mut k1 = Vec::with_capacity(curve.n());
    let mut k2 = Vec::with_capacity(curve.n());
    for i in 0..curve.n() {
        let x = i as f64 * curve.h;
        frames.push(rotate(&base.frames[i], x));
        let k = C64::new(base.k1[i], base.k2[i]) * C64::new(0.0, -c0 * x).exp();
        k1.push(k.re);
        k2.push(k.im);
    }
    let t0 = base.frames[0][0];
    let tr = transport(curve, [base.frames[0][1], base.frames[0][2]]);
    let w = tr.wrapped.expect("closed curve wraps");
    let end = rotate(&[t0, w[0], w[1]], curve.length());
    let mut gap: f64 = 0.0;
    for k in 0..3 {
        let d = sub(&end[k], &frames[0][k]);
        gap = gap.max(edot(&d, &d).sqrt());
    }
    Ok((FrameField { kind: FrameKind::PeriodicH, metric: Metric::Euclidean, frames, k1, k2, c0: Some(c0), tau: None }, gap))
}

/// Periodic potential of a closed curve from its h-frame, with `c₀`.
pub fn hasimoto_periodic(curve: &DiscreteCurve) -> Result<(PotentialField, f64), FramesError> {
    let (frame, _) = build_periodic_hframe(curve)?;
    let grid = Grid::periodic(curve.n(), curve.length(), curve.x0).map_err(|e| FramesError::InvalidCurve(e.to_string()))?;
    let q = PotentialField::from_q(Flavor::Su2, grid, frame.hasimoto_q()).map_err(|e| FramesError::InvalidCurve(e.to_string()))?;
    Ok((q, frame.c0.expect("h-frame rate")))
}

/// Gauge normalization of a null parallel frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NullGauge {
    /// Rescale `(e₁, e₂) ↦ (e₁/c, c e₂)` so that `k₂` at the first sample has this value.
    K2AtStart(f64),
    /// Keep the transported normalization.
    Raw,
}

/// Null parallel frame `g = (e₀, e₁, e₂) ∈ O(3, D₃)` of a space-like curve
/// in the `x² + yz` metric: `(e₀)ₓ = k₁e₁ + k₂e₂`, `(e₁)ₓ = -½k₂e₀`,
/// `(e₂)ₓ = -½k₁e₀`, so `k₁ = 2⟨H, e₂⟩` and `k₂ = 2⟨H, e₁⟩`.
///
/// The null directions are ordered so that `det(e₀, e₁, e₂) > 0`.
pub fn build_null_pframe(curve: &DiscreteCurve, gauge: NullGauge) -> Result<FrameField, FramesError> {
    if curve.metric != Metric::Null {
        return Err(FramesError::WrongMetric);
    }
    let d1 = curve.derivative(1);
    for (i, t) in d1.iter().enumerate() {
        if curve.metric.dot(t, t) <= 0.0 {
            return Err(FramesError::NotSpacelike { index: i });
        }
    }
    check_spacing(curve)?;
    let m = curve.metric;
    let t0 = scale(&d1[0], 1.0 / m.dot(&d1[0], &d1[0]).sqrt());
    // Orthonormal basis (n₊, n₋) of the normal plane, ⟨n₊,n₊⟩ = 1, ⟨n₋,n₋⟩ = -1.
    let mut basis: Vec<P3> = Vec::new();
    for axis in [[1.0, 0.0, 0.0], [0.0, 1.0, 1.0], [0.0, 1.0, -1.0], [0.0, 1.0, 0.0]] {
        let mut v = sub(&axis, &scale(&t0, m.dot(&axis, &t0)));
        for b in &basis {
            v = sub(&v, &scale(b, m.dot(&v, b) / m.dot(b, b)));
        }
        let vv = m.dot(&v, &v);
        if vv.abs() > 1e-3 {
            basis.push(scale(&v, 1.0 / vv.abs().sqrt()));
        }
        if basis.len() == 2 {
            break;
        }
    }
    if basis.len() < 2 {
        return Err(FramesError::DegenerateNormal);
    }
    let (np, nm) = if m.dot(&basis[0], &basis[0]) > 0.0 { (basis[0], basis[1]) } else { (basis[1], basis[0]) };
    // ⟨e₁, e₂⟩ = ½ with e₁ = (n₊ + n₋)/2, e₂ = (n₊ - n₋)/2.
    let mut e1 = scale(&add(&np, &nm), 0.5);
    let mut e2 = scale(&sub(&np, &nm), 0.5);
    if det3(&t0, &e1, &e2) < 0.0 {
        std::mem::swap(&mut e1, &mut e2);
    }
    let tr = transport(curve, [e1, e2]);
    let mut frame = frame_with_curvatures(curve, tr.tangents, tr.normals, FrameKind::NullParallel);
    // frame_with_curvatures stores ⟨H, e₁⟩, ⟨H, e₂⟩; convert to null curvatures.
    let (h1, h2) = (frame.k1.clone(), frame.k2.clone());
    frame.k1 = h2.iter().map(|v| 2.0 * v).collect();
    frame.k2 = h1.iter().map(|v| 2.0 * v).collect();
    if let NullGauge::K2AtStart(target) = gauge {
        let k20 = frame.k2[0];
        if k20.abs() > 1e-12 && target != 0.0 {
            let c = target / k20;
            apply_null_gauge(&mut frame, c);
        }
    }
    Ok(frame)
}

/// `g ↦ g diag(1, c, 1/c)`: `k₁ ↦ k₁/c`, `k₂ ↦ c k₂`.
pub fn apply_null_gauge(frame: &mut FrameField, c: f64) {
    for f in frame.frames.iter_mut() {
        f[1] = scale(&f[1], c);
        f[2] = scale(&f[2], 1.0 / c);
    }
    frame.k1.iter_mut().for_each(|k| *k /= c);
    frame.k2.iter_mut().for_each(|k| *k *= c);
}

/// Best proper rigid motion `p ↦ R p + t` taking `a` onto `b` (Kabsch).
#[derive(Clone, Debug)]
pub struct Alignment {
    pub rotation: Matrix3<f64>,
    pub translation: P3,
    pub rms: f64,
}

pub fn rigid_align(a: &[P3], b: &[P3]) -> Alignment {
    let n = a.len().min(b.len()) as f64;
    let centroid = |p: &[P3]| p.iter().fold([0.0; 3], |acc, v| add(&acc, v)).map(|v| v / n);
    let ca = centroid(a);
    let cb = centroid(b);
    let mut h = Matrix3::zeros();
    for (p, q) in a.iter().zip(b) {
        let pa = Vector3::from(sub(p, &ca));
        let qb = Vector3::from(sub(q, &cb));
        h += pa * qb.transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v");
    let d = (vt.transpose() * u.transpose()).determinant().signum();
    let corr = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = vt.transpose() * corr * u.transpose();
    let rc = rotation * Vector3::from(ca);
    let translation = [cb[0] - rc[0], cb[1] - rc[1], cb[2] - rc[2]];
    let mut sq = 0.0;
    for (p, q) in a.iter().zip(b) {
        let v = rotation * Vector3::from(*p);
        let d = [v[0] + translation[0] - q[0], v[1] + translation[1] - q[1], v[2] + translation[2] - q[2]];
        sq += edot(&d, &d);
    }
    Alignment { rotation, translation, rms: (sq / n).sqrt() }
}

/// RMS distance between two point sets after optimal rigid alignment.
pub fn aligned_rms(a: &[P3], b: &[P3]) -> f64 {
    rigid_align(a, b).rms
}

/// `½ γₓ × γₓₓ`, the vortex filament velocity.
pub fn vfe_rhs(curve: &DiscreteCurve) -> Vec<P3> {
    let d1 = curve.derivative(1);
    let d2 = curve.derivative(2);
    d1.iter().zip(&d2).map(|(a, b)| scale(&cross(a, b), 0.5)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle(n: usize, r: f64) -> DiscreteCurve {
        let l = 2.0 * PI * r;
        DiscreteCurve::from_fn(|s| [r * (s / r).cos(), r * (s / r).sin(), 0.0], n, l / n as f64, 0.0, Metric::Euclidean, Topology::Closed).unwrap()
    }

    /// Unit-speed helix with curvature `k` and (standard) torsion `tau`.
    pub(crate) fn helix(k: f64, tau: f64, n: usize, h: f64) -> DiscreteCurve {
        let w2 = k * k + tau * tau;
        let (r, p) = (k / w2, tau / w2);
        let w = w2.sqrt();
        let x0 = -0.5 * (n - 1) as f64 * h;
        DiscreteCurve::from_fn(|s| [r * (w * s).cos(), r * (w * s).sin(), p * w * s], n, h, x0, Metric::Euclidean, Topology::Open).unwrap()
    }

    #[test]
    fn line_and_circle() {
        let line = DiscreteCurve::from_fn(|s| [s, 0.0, 0.0], 64, 0.1, 0.0, Metric::Euclidean, Topology::Open).unwrap();
        let f = build_pframe(&line, None).unwrap();
        assert!(f.k1.iter().chain(&f.k2).all(|k| k.abs() < 1e-12));
        assert!(hasimoto(&line).unwrap().max_abs() < 1e-12);

        let c = circle(512, 1.0);
        let f = build_pframe(&c, None).unwrap();
        for (a, b) in f.k1.iter().zip(&f.k2) {
            assert!((a * a + b * b - 1.0).abs() < 1e-4);
        }
        let q = hasimoto(&c).unwrap();
        assert!(q.q.iter().all(|v| (v.norm() - 0.5).abs() < 1e-4));
        assert!(f.orthogonality_residual() < 1e-12);
        assert!(holonomy(&c).unwrap().angle.abs() < 1e-10);
    }

    #[test]
    fn initial_normal_rotates_q() {
        let hx = helix(1.0, 0.5, 400, 0.02);
        let a = build_pframe(&hx, None).unwrap();
        let b = build_pframe(&hx, Some([0.3, -1.0, 0.2])).unwrap();
        let ratios: Vec<C64> = a.hasimoto_q().iter().zip(b.hasimoto_q()).map(|(x, y)| y / x).collect();
        for r in &ratios {
            assert!((r.norm() - 1.0).abs() < 1e-8);
            assert!((r - ratios[0]).norm() < 1e-6);
        }
    }

    #[test]
    fn helix_phase_follows_standard_torsion() {
        let hx = helix(1.0, 0.5, 512, 0.02);
        let q = hasimoto(&hx).unwrap();
        let mid = 256;
        let slope = (q.q[mid + 1] / q.q[mid - 1]).arg() / (2.0 * hx.h);
        assert!((slope - 0.5).abs() < 1e-6, "{slope}");
        assert!(q.q.iter().all(|v| (v.norm() - 0.5).abs() < 1e-6));
    }

    #[test]
    fn reconstruct_from_tangent() {
        let hx = helix(0.8, 0.3, 300, 0.02);
        let f = build_pframe(&hx, None).unwrap();
        let mut p = hx.points[0];
        let mut rec = vec![p];
        for i in 0..hx.n() - 1 {
            // trapezoid on e₀ with a third-derivative correction
            let mid = scale(&add(&f.frames[i][0], &f.frames[i + 1][0]), 0.5 * hx.h);
            p = add(&p, &mid);
            rec.push(p);
        }
        let rms = (rec.iter().zip(&hx.points).map(|(a, b)| edot(&sub(a, b), &sub(a, b))).sum::<f64>() / hx.n() as f64).sqrt();
        assert!(rms < 1e-5 * hx.length(), "{rms}");
    }

    fn trefoil(t: f64) -> P3 {
        [t.sin() + 2.0 * (2.0 * t).sin(), t.cos() - 2.0 * (2.0 * t).cos(), -(3.0 * t).sin()]
    }

    #[test]
    fn holonomy_matches_total_torsion() {
        let c = DiscreteCurve::closed_from_parametric(trefoil, 512).unwrap();
        assert!(c.speed_deviation() < 1e-8, "{}", c.speed_deviation());
        let hol = holonomy(&c).unwrap();
        // ∮τ ds computed on the original parametrization.
        let m = 20000;
        let mut total = 0.0;
        for i in 0..m {
            let t = 2.0 * PI * i as f64 / m as f64;
            let d1 = [t.cos() + 4.0 * (2.0 * t).cos(), -t.sin() + 4.0 * (2.0 * t).sin(), -3.0 * (3.0 * t).cos()];
            let d2 = [-t.sin() - 8.0 * (2.0 * t).sin(), -t.cos() + 8.0 * (2.0 * t).cos(), 9.0 * (3.0 * t).sin()];
            let d3 = [-t.cos() - 16.0 * (2.0 * t).cos(), t.sin() - 16.0 * (2.0 * t).sin(), 27.0 * (3.0 * t).cos()];
            let c12 = cross(&d1, &d2);
            total += edot(&c12, &d3) / edot(&c12, &c12) * edot(&d1, &d1).sqrt() * 2.0 * PI / m as f64;
        }
        assert!((wrap_angle(hol.angle + total)).abs() < 1e-3, "{} vs {}", hol.angle, -total);
        assert!((wrap_angle(hol.angle - hol.frenet_angle.clone().unwrap())).abs() < 1e-3);
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0).into_inner();
        let moved = c.transformed(&rot, &[1.0, 2.0, -3.0]);
        assert!((holonomy(&moved).unwrap().angle - hol.angle).abs() < 1e-10);

        let (hf, gap) = build_periodic_hframe(&c).unwrap();
        assert!(gap < 1e-6, "{gap}");
        let conn = hf.connection(&c);
        for cm in &conn {
            assert!((cm[1][2] - hf.c0.unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn null_frame_gauge_and_orthogonality() {
        // Space-like curve γ(s) = (sinh-free) in x² + yz: x = s·(0.6), y,z chosen so ⟨γ',γ'⟩ = 1.
        let n = 400;
        let h = 0.01;
        let c = DiscreteCurve::from_fn(
            |s| {
                let x = 0.5 * s.sin();
                let xp = 0.5 * s.cos();
                // y' z' = 1 - x'², take y' = e^{s/3}, z' = (1 - x'²) e^{-s/3}
                let _ = xp;
                [x, 3.0 * (s / 3.0).exp(), integral_z(s)]
            },
            n,
            h,
            -2.0,
            Metric::Null,
            Topology::Open,
        )
        .unwrap();
        assert!(c.speed_deviation() < 1e-8, "{}", c.speed_deviation());
        let f = build_null_pframe(&c, NullGauge::Raw).unwrap();
        assert!(f.orthogonality_residual() < 1e-8);
        let mut g = f.clone();
        apply_null_gauge(&mut g, 2.5);
        for i in 0..n {
            assert!((f.k1[i] * f.k2[i] - g.k1[i] * g.k2[i]).abs() < 1e-10);
        }
        let conn = f.connection(&c);
        for (i, cm) in conn.iter().enumerate().skip(10).take(n - 20) {
            assert!((cm[0][1] - 0.5 * f.k2[i]).abs() < 1e-6 && (cm[0][2] - 0.5 * f.k1[i]).abs() < 1e-6);
            assert!(cm[1][2].abs() < 1e-6 && cm[2][1].abs() < 1e-6);
        }
        let pinned = build_null_pframe(&c, NullGauge::K2AtStart(2.0)).unwrap();
        assert!((pinned.k2[0] - 2.0).abs() < 1e-12);

        let line = DiscreteCurve::from_fn(|s| [s, 0.0, 0.0], 32, 0.1, 0.0, Metric::Null, Topology::Open).unwrap();
        let f = build_null_pframe(&line, NullGauge::Raw).unwrap();
        assert!(f.k1.iter().chain(&f.k2).all(|k| k.abs() < 1e-12));
    }

    // z(s) with z' = (1 - x'²) e^{-s/3}, x' = ½cos s, integrated in closed form.
    fn integral_z(s: f64) -> f64 {
        // (1 - ¼cos²s) e^{-s/3} = (7/8 - ⅛cos 2s) e^{-s/3}
        let e = (-s / 3.0).exp();
        let a = -1.0 / 3.0;
        let part1 = 7.0 / 8.0 * e / a;
        // ∫ e^{as} cos 2s = e^{as}(a cos 2s + 2 sin 2s)/(a² + 4)
        let part2 = -1.0 / 8.0 * e * (a * (2.0 * s).cos() + 2.0 * (2.0 * s).sin()) / (a * a + 4.0);
        part1 + part2
    }

    #[test]
    fn kabsch_recovers_motion() {
        let c = helix(1.0, 0.4, 100, 0.05);
        let rot = nalgebra::Rotation3::from_euler_angles(0.7, 0.2, -0.4).into_inner();
        let moved = c.transformed(&rot, &[0.5, -1.0, 2.0]);
        assert!(aligned_rms(&c.points, &moved.points) < 1e-12);
    }
}
