//! AKNS generating series, flows, Lax pairs, Hamiltonians and the two
//! Poisson operators of the `SU(2)`, `SU(1,1)`, `SL(2,R)` and KdV
//! hierarchies on uniform grids.
//!
//! With `a = diag(s, -s)` and `u = q e12 + r e21`, the coefficients of
//! `Q(u, λ) = aλ + u + Q₋₁λ⁻¹ + …` obey
//!
//! ```text
//! (Q₋ⱼ)ₓ + [u, Q₋ⱼ] = [Q₋₍ⱼ₊₁₎, a],        Q(u, λ)² = s²λ² I.
//! ```
//!
//! The off-diagonal part of `Q₋₍ⱼ₊₁₎` comes from inverting `ad(a)` in the
//! recursion; the diagonal part comes algebraically from the quadratic
//! constraint, so no integration constants appear.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::liealg::{inner, Flavor};
use crate::spectral;
use crate::{Mat2C, C64};

/// Highest order of the generating series.
pub const JMAX: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HierarchyError {
    #[error("order {0} exceeds the supported truncation {JMAX}")]
    TruncationExceeded(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("flow order must be at least 1")]
    ZeroOrder,
    #[error("the KdV reduction only carries odd flows, got {0}")]
    EvenKdvFlow(usize),
    #[error("source of the P_u integration has nonzero mean {mean:e}")]
    NonPeriodicSource { mean: f64 },
}

/// Boundary behaviour of a uniform grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Samples of one period; spectral calculus.
    Periodic,
    /// Samples of an interval; one-sided finite differences at the ends.
    Open,
}

/// Uniform grid `x_j = x0 + j h`, `h = L / N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub l: f64,
    pub x0: f64,
    pub boundary: Boundary,
}

impl Grid {
    pub fn periodic(n: usize, l: f64, x0: f64) -> Result<Self, HierarchyError> {
        if !spectral::valid_grid_size(n) {
            return Err(HierarchyError::InvalidGrid(format!("N = {n} must be a power of two >= 8")));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(HierarchyError::InvalidGrid(format!("period {l} must be positive")));
        }
        Ok(Grid { n, l, x0, boundary: Boundary::Periodic })
    }

    pub fn open(n: usize, l: f64, x0: f64) -> Result<Self, HierarchyError> {
        if n < spectral::FD_STENCIL {
            return Err(HierarchyError::InvalidGrid(format!("N = {n} is below the stencil width")));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(HierarchyError::InvalidGrid(format!("length {l} must be positive")));
        }
        Ok(Grid { n, l, x0, boundary: Boundary::Open })
    }

    pub fn h(&self) -> f64 {
        self.l / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.h()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// `(∂ + κ)^order f` on this grid.
    pub fn deriv_twisted(&self, f: &[C64], order: u32, kappa: C64) -> Vec<C64> {
        match self.boundary {
            Boundary::Periodic => spectral::derivative_twisted(f, self.l, order, kappa),
            Boundary::Open => {
                if kappa == C64::new(0.0, 0.0) {
                    return if order == 0 { f.to_vec() } else { spectral::fd_derivative(f, self.h(), order as usize) };
                }
                let mut out = f.iter().map(|v| v * kappa.powu(order)).collect::<Vec<_>>();
                let mut binom = 1.0;
                for k in 1..=order {
                    binom = binom * (order - k + 1) as f64 / k as f64;
                    let d = spectral::fd_derivative(f, self.h(), k as usize);
                    let w = kappa.powu(order - k) * binom;
                    out.iter_mut().zip(d).for_each(|(o, dv)| *o += dv * w);
                }
                out
            }
        }
    }

    pub fn deriv(&self, f: &[C64], order: u32) -> Vec<C64> {
        self.deriv_twisted(f, order, C64::new(0.0, 0.0))
    }

    /// `∫ f dx` by the trapezoid rule (periodic) or composite trapezoid (open).
    pub fn integrate(&self, f: &[C64]) -> C64 {
        match self.boundary {
            Boundary::Periodic => spectral::integrate(f, self.h()),
            Boundary::Open => {
                let n = f.len();
                let inner: C64 = f[1..n - 1].iter().sum();
                (inner + (f[0] + f[n - 1]) * 0.5) * self.h()
            }
        }
    }
}

/// Sampled potential `u = q e12 + r e21` of one flavor.
///
/// `r` is stored explicitly; the constructors enforce `r = -q̄` (SU2),
/// `r = q̄` (SU11), real `q, r` (SL2R) and `r ≡ 1` (KdV).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    pub flavor: Flavor,
    pub grid: Grid,
    pub q: Vec<C64>,
    pub r: Vec<C64>,
}

impl PotentialField {
    pub fn new(flavor: Flavor, grid: Grid, q: Vec<C64>, r: Vec<C64>) -> Result<Self, HierarchyError> {
        for v in [&q, &r] {
            if v.len() != grid.n {
                return Err(HierarchyError::LengthMismatch { expected: grid.n, got: v.len() });
            }
        }
        let mut u = PotentialField { flavor, grid, q, r };
        u.enforce_reality();
        Ok(u)
    }

    /// Build from `q` alone; `r` follows from the flavor (SL2R takes `r = q`).
    pub fn from_q(flavor: Flavor, grid: Grid, q: Vec<C64>) -> Result<Self, HierarchyError> {
        let r = q.clone();
        Self::new(flavor, grid, q, r)
    }

    pub fn from_fn<F: Fn(f64) -> (C64, C64)>(flavor: Flavor, grid: Grid, f: F) -> Result<Self, HierarchyError> {
        let (q, r) = grid.points().into_iter().map(f).unzip();
        Self::new(flavor, grid, q, r)
    }

    pub fn zero(flavor: Flavor, grid: Grid) -> Self {
        let z = vec![C64::new(0.0, 0.0); grid.n];
        Self::new(flavor, grid, z.clone(), z).expect("consistent lengths")
    }

    /// Re-impose the flavor's reality constraint on `r` (and on `q`).
    pub fn enforce_reality(&mut self) {
        match self.flavor {
            Flavor::Su2 => self.r = self.q.iter().map(|v| -v.conj()).collect(),
            Flavor::Su11 => self.r = self.q.iter().map(|v| v.conj()).collect(),
            Flavor::Sl2r => {
                self.q.iter_mut().for_each(|v| v.im = 0.0);
                self.r.iter_mut().for_each(|v| v.im = 0.0);
            }
            Flavor::Kdv => {
                self.q.iter_mut().for_each(|v| v.im = 0.0);
                self.r = vec![C64::new(1.0, 0.0); self.q.len()];
            }
        }
    }

    pub fn u(&self, j: usize) -> Mat2C {
        Mat2C::offdiag(self.q[j], self.r[j])
    }

    pub fn u_field(&self) -> Vec<Mat2C> {
        (0..self.grid.n).map(|j| self.u(j)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.q.iter().chain(self.r.iter()).fold(0.0, |a, v| a.max(v.norm()))
    }

    /// Max-norm distance between the `q` (and `r`) samples.
    pub fn distance(&self, other: &Self) -> f64 {
        self.q
            .iter()
            .zip(&other.q)
            .chain(self.r.iter().zip(&other.r))
            .fold(0.0, |a, (x, y)| a.max((x - y).norm()))
    }
}

/// Coefficients `Q₁ = a, Q₀ = u, Q₋₁, …, Q₋ⱼmax` on the grid, stored as
/// `Q₋ⱼ = [[A_j, B_j], [C_j, -A_j]]`.
#[derive(Clone, Debug)]
pub struct QSeries {
    pub flavor: Flavor,
    pub grid: Grid,
    /// Phase twist: derivatives act as `∂ ± sκ` on the `(1,2)`/`(2,1)` entries.
    pub twist: f64,
    pub diag: Vec<Vec<C64>>,
    pub upper: Vec<Vec<C64>>,
    pub lower: Vec<Vec<C64>>,
}

impl QSeries {
    pub fn jmax(&self) -> usize {
        self.diag.len() - 1
    }

    /// `Q₋ⱼ` at every sample (`j = 0` gives `u`).
    pub fn q_minus(&self, j: usize) -> Vec<Mat2C> {
        (0..self.grid.n).map(|x| self.q_minus_at(j, x)).collect()
    }

    pub fn q_minus_at(&self, j: usize, x: usize) -> Mat2C {
        Mat2C::new(self.diag[j][x], self.upper[j][x], self.lower[j][x], -self.diag[j][x])
    }

    /// Max-norm residual of `(Q₋ⱼ)ₓ + [u, Q₋ⱼ] - [Q₋₍ⱼ₊₁₎, a]`.
    pub fn recursion_residual(&self, j: usize) -> f64 {
        let s: C64 = self.flavor.s();
        let kq = s * self.twist;
        let da = self.grid.deriv(&self.diag[j], 1);
        let db = self.grid.deriv_twisted(&self.upper[j], 1, kq);
        let dc = self.grid.deriv_twisted(&self.lower[j], 1, -kq);
        let mut res: f64 = 0.0;
        for x in 0..self.grid.n {
            let dq = Mat2C::new(da[x], db[x], dc[x], -da[x]);
            let u = self.q_minus_at(0, x);
            let qj = self.q_minus_at(j, x);
            let next = self.q_minus_at(j + 1, x);
            let a = self.flavor.a::<f64>();
            let r = dq + u.commutator(&qj) - next.commutator(&a);
            res = res.max(r.max_abs());
        }
        res
    }

    /// Max-norm of the `λ^{-j}` coefficient (`j ≥ -1`) of `Q² - s²λ² I`.
    pub fn constraint_residual(&self, j: usize) -> f64 {
        let s: C64 = self.flavor.s();
        let mut res: f64 = 0.0;
        for x in 0..self.grid.n {
            let mut acc = if j < self.jmax() { s * self.diag[j + 1][x] * 2.0 } else { C64::new(0.0, 0.0) };
            for n in 0..=j {
                acc += self.sym(n, j - n, x) * 0.5;
            }
            res = res.max(acc.norm());
        }
        res
    }

    fn sym(&self, n: usize, m: usize, x: usize) -> C64 {
        self.diag[n][x] * self.diag[m][x] * 2.0 + self.upper[n][x] * self.lower[m][x] + self.lower[n][x] * self.upper[m][x]
    }
}

/// Generating series up to `Q₋ⱼmax`.
pub fn q_series(u: &PotentialField, jmax: usize) -> Result<QSeries, HierarchyError> {
    q_series_twisted(u, jmax, 0.0)
}

/// Series of the potential `e^{sκx} q e12 + e^{-sκx} r e21`, expressed in the
/// untwisted frame: the stored entries are those of `Ad(exp(-κx a/2))Q₋ⱼ`.
pub fn q_series_twisted(u: &PotentialField, jmax: usize, twist: f64) -> Result<QSeries, HierarchyError> {
    if jmax > JMAX {
        return Err(HierarchyError::TruncationExceeded(jmax));
    }
    let n = u.grid.n;
    let s: C64 = u.flavor.s();
    let kq = s * twist;
    let zero = vec![C64::new(0.0, 0.0); n];
    let mut diag = vec![zero.clone()];
    let mut upper = vec![u.q.clone()];
    let mut lower = vec![u.r.clone()];
    let two_s = s * 2.0;
    for j in 0..jmax {
        let db = u.grid.deriv_twisted(&upper[j], 1, kq);
        let dc = u.grid.deriv_twisted(&lower[j], 1, -kq);
        let b: Vec<C64> = (0..n).map(|x| -(db[x] - u.q[x] * diag[j][x] * 2.0) / two_s).collect();
        let c: Vec<C64> = (0..n).map(|x| (dc[x] + u.r[x] * diag[j][x] * 2.0) / two_s).collect();
        upper.push(b);
        lower.push(c);
        let a: Vec<C64> = (0..n)
            .map(|x| {
                let mut acc = C64::new(0.0, 0.0);
                for m in 0..=j {
                    let k = j - m;
                    acc += diag[m][x] * diag[k][x] * 2.0 + upper[m][x] * lower[k][x] + lower[m][x] * upper[k][x];
                }
                -acc / (s * 4.0)
            })
            .collect();
        diag.push(a);
    }
    Ok(QSeries { flavor: u.flavor, grid: u.grid, twist, diag, upper, lower })
}

fn check_order(flavor: Flavor, j: usize) -> Result<(), HierarchyError> {
    if j == 0 {
        return Err(HierarchyError::ZeroOrder);
    }
    if j > JMAX {
        return Err(HierarchyError::TruncationExceeded(j));
    }
    if flavor == Flavor::Kdv && j.is_multiple_of(2) {
        return Err(HierarchyError::EvenKdvFlow(j));
    }
    Ok(())
}

/// Right-hand side `[Q₋ⱼ(u), a]` of the `j`-th flow, projected onto the
/// flavor's potential space.
pub fn flow_rhs(u: &PotentialField, j: usize) -> Result<PotentialField, HierarchyError> {
    check_order(u.flavor, j)?;
    let qs = q_series(u, j)?;
    Ok(flow_rhs_from_series(&qs, u, j))
}

pub(crate) fn flow_rhs_from_series(qs: &QSeries, u: &PotentialField, j: usize) -> PotentialField {
    let s: C64 = u.flavor.s();
    let q: Vec<C64> = qs.upper[j].iter().map(|b| -s * b * 2.0).collect();
    let r: Vec<C64> = qs.lower[j].iter().map(|c| s * c * 2.0).collect();
    let mut out = PotentialField { flavor: u.flavor, grid: u.grid, q, r };
    match u.flavor {
        Flavor::Kdv => {
            out.q.iter_mut().for_each(|v| v.im = 0.0);
            out.r = vec![C64::new(0.0, 0.0); u.grid.n];
        }
        _ => out.enforce_reality(),
    }
    out
}

/// `A(x, λ) = aλ + u(x)` and `B(x, λ) = Σ_{-(j-1) ≤ i ≤ 1} Qᵢ λ^{j-1+i}`
/// together with `∂B/∂λ`.
#[derive(Clone, Debug)]
pub struct LaxPair {
    pub a: Vec<Mat2C>,
    pub b: Vec<Mat2C>,
    pub db: Vec<Mat2C>,
}

pub fn lax_pair(u: &PotentialField, j: usize, lambda: C64) -> Result<LaxPair, HierarchyError> {
    check_order(u.flavor, j)?;
    let qs = q_series(u, j - 1)?;
    Ok(lax_pair_from_series(&qs, j, lambda))
}

pub(crate) fn lax_pair_from_series(qs: &QSeries, j: usize, lambda: C64) -> LaxPair {
    let a_mat = qs.flavor.a::<f64>();
    let n = qs.grid.n;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut db = Vec::with_capacity(n);
    for x in 0..n {
        let u = qs.q_minus_at(0, x);
        a.push(a_mat.scale(lambda) + u);
        // i = 1 term, then Q₋ₘ for m = 0..j-1 with power j-1-m.
        let mut bx = a_mat.scale(lambda.powu(j as u32));
        let mut dbx = a_mat.scale(lambda.powu(j as u32 - 1) * j as f64);
        for m in 0..j {
            let p = (j - 1 - m) as u32;
            let qm = qs.q_minus_at(m, x);
            bx += qm.scale(lambda.powu(p));
            if p > 0 {
                dbx += qm.scale(lambda.powu(p - 1) * p as f64);
            }
        }
        b.push(bx);
        db.push(dbx);
    }
    LaxPair { a, b, db }
}

/// Max-norm of `A_t - B_x - [A, B]` over the interior slices of a sampled
/// trajectory (fourth-order time differences when at least five slices are
/// available). This is the compatibility condition of `E⁻¹E_x = A`,
/// `E⁻¹E_t = B`.
pub fn lax_flatness(slices: &[PotentialField], dt: f64, j: usize, lambda: C64) -> Result<f64, HierarchyError> {
    if slices.len() < 3 {
        return Err(HierarchyError::InvalidGrid("flatness needs at least three time slices".into()));
    }
    let pairs: Vec<LaxPair> = slices.iter().map(|u| lax_pair(u, j, lambda)).collect::<Result<_, _>>()?;
    let grid = slices[0].grid;
    let n = grid.n;
    let fourth = slices.len() >= 5;
    let (lo, hi) = if fourth { (2, slices.len() - 2) } else { (1, slices.len() - 1) };
    let mut worst: f64 = 0.0;
    for k in lo..hi {
        let bx = deriv_matrix_field(&grid, &pairs[k].b);
        for x in 0..n {
            let at = if fourth {
                (pairs[k - 2].a[x] - pairs[k - 1].a[x].scale_re(8.0) + pairs[k + 1].a[x].scale_re(8.0) - pairs[k + 2].a[x])
                    .scale_re(1.0 / (12.0 * dt))
            } else {
                (pairs[k + 1].a[x] - pairs[k - 1].a[x]).scale_re(0.5 / dt)
            };
            let ax = pairs[k].a[x];
            let res = at - bx[x] - ax.commutator(&pairs[k].b[x]);
            worst = worst.max(res.max_abs());
        }
    }
    Ok(worst)
}

pub(crate) fn deriv_matrix_field(grid: &Grid, f: &[Mat2C]) -> Vec<Mat2C> {
    let comps: Vec<Vec<C64>> = (0..4).map(|k| grid.deriv(&f.iter().map(|m| m.m[k]).collect::<Vec<_>>(), 1)).collect();
    (0..f.len()).map(|x| Mat2C { m: [comps[0][x], comps[1][x], comps[2][x], comps[3][x]] }).collect()
}

/// `Hⱼ(u) = -(1/j) ∮ <Q₋ⱼ(u), a> dx`.
pub fn hamiltonian(u: &PotentialField, j: usize) -> Result<f64, HierarchyError> {
    hamiltonian_twisted(u, j, 0.0)
}

pub fn hamiltonian_twisted(u: &PotentialField, j: usize, twist: f64) -> Result<f64, HierarchyError> {
    if j == 0 {
        return Err(HierarchyError::ZeroOrder);
    }
    let qs = q_series_twisted(u, j, twist)?;
    let a = u.flavor.a::<f64>();
    let density: Vec<C64> = (0..u.grid.n).map(|x| C64::new(inner(&qs.q_minus_at(j, x), &a, u.flavor), 0.0)).collect();
    Ok(-u.grid.integrate(&density).re / j as f64)
}

/// Off-diagonal part `Y₋ⱼ` of `Q₋ⱼ`; this is `∇Hⱼ₊₁`.
pub fn gradient(u: &PotentialField, j: usize) -> Result<PotentialField, HierarchyError> {
    let qs = q_series(u, j)?;
    Ok(PotentialField { flavor: u.flavor, grid: u.grid, q: qs.upper[j].clone(), r: qs.lower[j].clone() })
}

/// Integration constant of the `a`-coefficient in `P_u(v) = v + A a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PuConstant {
    /// `A` has zero mean over the period.
    ZeroMean,
    /// `A` has the given mean.
    Mean(C64),
}

/// `(J₁ v, J₂ v)` with `J₁v = [v, a]` and `J₂v = [∂ₓ + u, P_u(v)]`, using
/// the zero-mean normalization of `P_u`.
pub fn poisson_ops(u: &PotentialField, v: &PotentialField) -> Result<(PotentialField, PotentialField), HierarchyError> {
    let j1 = poisson_j1(u, v);
    let j2 = poisson_j2(u, v, PuConstant::ZeroMean)?;
    Ok((j1, j2))
}

pub fn poisson_j1(u: &PotentialField, v: &PotentialField) -> PotentialField {
    let s: C64 = u.flavor.s();
    PotentialField {
        flavor: u.flavor,
        grid: u.grid,
        q: v.q.iter().map(|xi| -s * xi * 2.0).collect(),
        r: v.r.iter().map(|eta| s * eta * 2.0).collect(),
    }
}

/// `J₂ v` for `v = ξ e12 + η e21`; `A` solves `s Aₓ = rξ - qη`.
pub fn poisson_j2(u: &PotentialField, v: &PotentialField, constant: PuConstant) -> Result<PotentialField, HierarchyError> {
    let s: C64 = u.flavor.s();
    let grid = u.grid;
    let n = grid.n;
    let source: Vec<C64> = (0..n).map(|x| (u.r[x] * v.q[x] - u.q[x] * v.r[x]) / s).collect();
    let scale = 1.0 + source.iter().fold(0.0f64, |a, v| a.max(v.norm()));
    let (mut a, mean) = spectral::antiderivative(&source, grid.l);
    if mean.norm() > 1e-8 * scale {
        return Err(HierarchyError::NonPeriodicSource { mean: mean.norm() });
    }
    if let PuConstant::Mean(c) = constant {
        a.iter_mut().for_each(|v| *v += c);
    }
    let dxi = grid.deriv(&v.q, 1);
    let deta = grid.deriv(&v.r, 1);
    let q: Vec<C64> = (0..n).map(|x| dxi[x] - s * u.q[x] * a[x] * 2.0).collect();
    let r: Vec<C64> = (0..n).map(|x| deta[x] + s * u.r[x] * a[x] * 2.0).collect();
    Ok(PotentialField { flavor: u.flavor, grid, q, r })
}

/// The ℝ-action `c * u = e^{ca} u e^{-ca}`: `q ↦ e^{2sc}q`, `r ↦ e^{-2sc}r`.
/// The KdV constraint `r = 1` is not preserved, so a KdV input is returned
/// tagged as `SL2R`.
pub fn scaling_action(u: &PotentialField, c: f64) -> PotentialField {
    let s: C64 = u.flavor.s();
    let f = (s * 2.0 * c).exp();
    let flavor = if u.flavor == Flavor::Kdv { Flavor::Sl2r } else { u.flavor };
    PotentialField { flavor, grid: u.grid, q: u.q.iter().map(|v| v * f).collect(), r: u.r.iter().map(|v| v / f).collect() }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn modes() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5), 5)
    }

    fn field(flavor: Flavor, m: &[(f64, f64)]) -> PotentialField {
        let grid = Grid::periodic(32, 2.0 * PI, 0.0).unwrap();
        let q = |x: f64| {
            m.iter().enumerate().fold(C64::new(0.0, 0.0), |acc, (k, &(a, b))| acc + C64::new(a, b) * C64::new(0.0, (k as f64 - 2.0) * x).exp())
        };
        match flavor {
            Flavor::Sl2r => PotentialField::from_fn(flavor, grid, |x| (C64::new(q(x).re, 0.0), C64::new(q(x).im, 0.0))).unwrap(),
            Flavor::Kdv => PotentialField::from_fn(flavor, grid, |x| (C64::new(q(x).re, 0.0), C64::new(1.0, 0.0))).unwrap(),
            _ => PotentialField::from_q(flavor, grid, (0..32).map(|i| q(grid.x(i))).collect()).unwrap(),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn series_satisfies_recursion_and_constraint(m in modes(), f in 0usize..4) {
            let flavor = [Flavor::Su2, Flavor::Su11, Flavor::Sl2r, Flavor::Kdv][f];
            let qs = q_series(&field(flavor, &m), 4).unwrap();
            for j in 0..4 {
                prop_assert!(qs.constraint_residual(j) < 1e-10);
            }
            for j in 0..4 {
                prop_assert!(qs.recursion_residual(j) < 1e-8);
            }
        }

        #[test]
        fn flows_preserve_reality(m in modes(), j in 1usize..5) {
            let u = field(Flavor::Su2, &m);
            let v = flow_rhs(&u, j).unwrap();
            let drift = v.q.iter().zip(&v.r).fold(0.0f64, |a, (q, r)| a.max((r + q.conj()).norm()));
            prop_assert!(drift < 1e-9 * (1.0 + v.max_abs()));
        }

        #[test]
        fn hamiltonians_are_phase_invariant(m in modes(), j in 1usize..5, theta in 0.0f64..std::f64::consts::TAU) {
            let u = field(Flavor::Su2, &m);
            let rot = PotentialField::from_q(Flavor::Su2, u.grid, u.q.iter().map(|q| q * C64::from_polar(1.0, theta)).collect()).unwrap();
            let (a, b) = (hamiltonian(&u, j).unwrap(), hamiltonian(&rot, j).unwrap());
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
        }

        #[test]
        fn flows_commute_with_scaling(m in modes(), j in 1usize..4, c in -0.4f64..0.4) {
            let u = field(Flavor::Sl2r, &m);
            let lhs = flow_rhs(&scaling_action(&u, c), j).unwrap();
            let rhs = scaling_action(&flow_rhs(&u, j).unwrap(), c);
            prop_assert!(lhs.distance(&rhs) < 1e-9 * (1.0 + rhs.max_abs()));
        }
    }
}
