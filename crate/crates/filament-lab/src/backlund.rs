//! Dressing by simple rational elements: Bäcklund transformations of the
//! four hierarchies, permutability, curve-level transformations and an
//! explicit multi-soliton factory built on the vacuum.
//!
//! A dressed frame is `Ẽ = L(λ) E R(x, t, λ)` with a constant left factor
//! and a pointwise right factor determined by `E` at the poles, so that
//! `Ẽ(0, 0) = I` whenever `E(0, 0) = I`. The curve closed forms use the
//! one-sided frame `E R`, whose Sym curve differs from that of `Ẽ` by the
//! rigid motion induced by `L`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{self, close_up, FrameModel, FramesError, LaxFrame, SymOutput, VacuumFrame, P3};
use crate::hierarchy::{Grid, HierarchyError, PotentialField};
use crate::liealg::{adjoint_frame_unchecked, j_matrix, lie_to_vec_unchecked, vec_to_lie};
use crate::{Flavor, Mat2C, Vec3R, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BacklundError {
    #[error("pole {0} lies on the real axis")]
    PoleOnRealAxis(C64),
    #[error("seed vector is zero")]
    ZeroSeed,
    #[error("seed vector is null for the indefinite form")]
    NullSeedVector,
    #[error("seed vectors are linearly dependent")]
    DependentSeeds,
    #[error("poles coincide or are conjugate")]
    CoincidentPoles,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("y₂ vanishes near ({x}, {t})")]
    VanishingY2 { x: f64, t: f64 },
    #[error("Riccati solution exceeds 1e8 at ({x}, {t}); use the linear system")]
    RiccatiBlowup { x: f64, t: f64 },
    #[error("seed lies on the singular set |p| = 1")]
    SingularSeed,
    #[error("expected a {expected:?} frame, got {got:?}")]
    WrongFlavor { expected: Flavor, got: Flavor },
    #[error(transparent)]
    Frames(#[from] FramesError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

type Result<T> = std::result::Result<T, BacklundError>;

fn cz() -> C64 {
    C64::new(0.0, 0.0)
}

fn cr(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Hermitian projection onto `ℂv`.
pub fn hermitian_projection(v: [C64; 2]) -> Mat2C {
    let n = v[0].norm_sqr() + v[1].norm_sqr();
    Mat2C::new(v[0] * v[0].conj(), v[0] * v[1].conj(), v[1] * v[0].conj(), v[1] * v[1].conj()).scale_re(1.0 / n)
}

/// `J`-Hermitian projection `v v* J / ⟨v, v⟩₁` onto `ℂv`.
pub fn j_projection(v: [C64; 2]) -> Mat2C {
    let n = v[0].norm_sqr() - v[1].norm_sqr();
    Mat2C::new(v[0] * v[0].conj(), -v[0] * v[1].conj(), v[1] * v[0].conj(), -v[1] * v[1].conj()).scale_re(1.0 / n)
}

/// Projection onto `ℂv` along `ℂw`.
pub fn oblique_projection(v: [C64; 2], w: [C64; 2]) -> Mat2C {
    let d = v[0] * w[1] - v[1] * w[0];
    Mat2C::new(v[0] * w[1], -v[0] * w[0], v[1] * w[1], -v[1] * w[0]) * (C64::new(1.0, 0.0) / d)
}

/// `r_{ξ,k}(λ) = aλ + [[ξ, ξ² - k²], [1, ξ]]`, `a = diag(1, -1)`.
pub fn kdv_factor(xi: f64, k: f64, lambda: C64) -> Mat2C {
    Mat2C::new(lambda + xi, cr(xi * xi - k * k), cr(1.0), -lambda + xi)
}

/// Generator of the dressing group of a flavor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SimpleElement {
    /// `f_{α,π}(λ) = I + (α - ᾱ)/(λ - α) π⊥`, with `π` Hermitian (SU2) or
    /// `J`-Hermitian (SU11).
    Unitary { flavor: Flavor, alpha: C64, projection: Mat2C },
    /// `h(λ) = I + (α₁ - α₂)/(λ - α₁) π′`, `π` real with `π′ = I - π`.
    Real { alpha1: f64, alpha2: f64, projection: Mat2C },
    /// `r_{ξ,k}(λ)`.
    Kdv { xi: f64, k: f64 },
}

impl SimpleElement {
    pub fn su2(alpha: C64, v: [C64; 2]) -> Result<Self> {
        check_pole(alpha)?;
        check_nonzero(v)?;
        Ok(SimpleElement::Unitary { flavor: Flavor::Su2, alpha, projection: hermitian_projection(v) })
    }

    pub fn su11(alpha: C64, v: [C64; 2]) -> Result<Self> {
        check_pole(alpha)?;
        check_nonzero(v)?;
        let n = v[0].norm_sqr() - v[1].norm_sqr();
        if n.abs() <= 1e-14 * (v[0].norm_sqr() + v[1].norm_sqr()) {
            return Err(BacklundError::NullSeedVector);
        }
        Ok(SimpleElement::Unitary { flavor: Flavor::Su11, alpha, projection: j_projection(v) })
    }

    /// Projection onto `ℝv₁` along `ℝv₂`.
    pub fn sl2r(alpha1: f64, alpha2: f64, v1: [f64; 2], v2: [f64; 2]) -> Result<Self> {
        if alpha1 == alpha2 {
            return Err(BacklundError::CoincidentPoles);
        }
        let d = v1[0] * v2[1] - v1[1] * v2[0];
        if d.abs() <= 1e-14 * (v1[0].hypot(v1[1]) * v2[0].hypot(v2[1])) {
            return Err(BacklundError::DependentSeeds);
        }
        let projection = oblique_projection([cr(v1[0]), cr(v1[1])], [cr(v2[0]), cr(v2[1])]);
        Ok(SimpleElement::Real { alpha1, alpha2, projection })
    }

    pub fn kdv(xi: f64, k: f64) -> Result<Self> {
        if k == 0.0 {
            return Err(BacklundError::InvalidParameter("c must be nonzero".into()));
        }
        Ok(SimpleElement::Kdv { xi, k })
    }

    pub fn flavor(&self) -> Flavor {
        match self {
            SimpleElement::Unitary { flavor, .. } => *flavor,
            SimpleElement::Real { .. } => Flavor::Sl2r,
            SimpleElement::Kdv { .. } => Flavor::Kdv,
        }
    }

    /// Points where the element or its inverse has a pole.
    pub fn poles(&self) -> Vec<C64> {
        match *self {
            SimpleElement::Unitary { alpha, .. } => vec![alpha, alpha.conj()],
            SimpleElement::Real { alpha1, alpha2, .. } => vec![cr(alpha1), cr(alpha2)],
            SimpleElement::Kdv { k, .. } => vec![cr(k), cr(-k)],
        }
    }

    fn near_pole(&self, lambda: C64) -> bool {
        self.poles().iter().any(|p| (p - lambda).norm() < 1e-12)
    }

    pub fn eval(&self, lambda: C64) -> Mat2C {
        match *self {
            SimpleElement::Unitary { alpha, projection, .. } => {
                Mat2C::identity() + (Mat2C::identity() - projection) * ((alpha - alpha.conj()) / (lambda - alpha))
            }
            SimpleElement::Real { alpha1, alpha2, projection } => {
                Mat2C::identity() + (Mat2C::identity() - projection) * (cr(alpha1 - alpha2) / (lambda - alpha1))
            }
            SimpleElement::Kdv { xi, k } => kdv_factor(xi, k, lambda),
        }
    }

    pub fn dlambda(&self, lambda: C64) -> Mat2C {
        match *self {
            SimpleElement::Unitary { alpha, projection, .. } => {
                (Mat2C::identity() - projection) * (-(alpha - alpha.conj()) / ((lambda - alpha) * (lambda - alpha)))
            }
            SimpleElement::Real { alpha1, alpha2, projection } => {
                (Mat2C::identity() - projection) * (-cr(alpha1 - alpha2) / ((lambda - alpha1) * (lambda - alpha1)))
            }
            SimpleElement::Kdv { .. } => Flavor::Kdv.a::<f64>(),
        }
    }

    pub fn inverse(&self, lambda: C64) -> Mat2C {
        match *self {
            SimpleElement::Unitary { alpha, projection, .. } => {
                Mat2C::identity() + (Mat2C::identity() - projection) * ((alpha.conj() - alpha) / (lambda - alpha.conj()))
            }
            SimpleElement::Real { alpha1, alpha2, projection } => {
                Mat2C::identity() + (Mat2C::identity() - projection) * (cr(alpha2 - alpha1) / (lambda - alpha2))
            }
            SimpleElement::Kdv { xi, k } => kdv_factor(-xi, k, lambda) * (C64::new(1.0, 0.0) / (lambda * lambda - k * k)),
        }
    }

    pub fn inverse_dlambda(&self, lambda: C64) -> Mat2C {
        match *self {
            SimpleElement::Unitary { alpha, projection, .. } => {
                let d = lambda - alpha.conj();
                (Mat2C::identity() - projection) * (-(alpha.conj() - alpha) / (d * d))
            }
            SimpleElement::Real { alpha1, alpha2, projection } => {
                let d = lambda - alpha2;
                (Mat2C::identity() - projection) * (-cr(alpha2 - alpha1) / (d * d))
            }
            SimpleElement::Kdv { xi, k } => {
                let den = lambda * lambda - k * k;
                Flavor::Kdv.a::<f64>() * (C64::new(1.0, 0.0) / den) - kdv_factor(-xi, k, lambda) * (lambda * 2.0 / (den * den))
            }
        }
    }

    /// Deviation from the flavor's reality condition at `λ` together with
    /// the inverse formula.
    pub fn reality_residual(&self, lambda: C64) -> f64 {
        let g = self.eval(lambda);
        let inv = (g * self.inverse(lambda) - Mat2C::identity()).max_abs();
        let gb = self.eval(lambda.conj());
        let real = match self.flavor() {
            Flavor::Su2 => (g * gb.adjoint() - Mat2C::identity()).max_abs(),
            Flavor::Su11 => {
                let j = j_matrix::<f64>();
                (j * gb.adjoint() * j - self.inverse(lambda)).max_abs()
            }
            Flavor::Sl2r | Flavor::Kdv => (gb.conj() - g).max_abs(),
        };
        inv.max(real)
    }

    /// Deviation of the projection from its defining identities.
    pub fn projection_residual(&self) -> f64 {
        match *self {
            SimpleElement::Unitary { flavor, projection: p, .. } => {
                let idem = (p * p - p).max_abs();
                let herm = match flavor {
                    Flavor::Su11 => {
                        let j = j_matrix::<f64>();
                        (j * p.adjoint() * j - p).max_abs()
                    }
                    _ => (p.adjoint() - p).max_abs(),
                };
                idem.max(herm)
            }
            SimpleElement::Real { projection: p, .. } => (p * p - p).max_abs().max(p.m.iter().fold(0.0f64, |a, z| a.max(z.im.abs()))),
            SimpleElement::Kdv { .. } => 0.0,
        }
    }
}

fn check_pole(alpha: C64) -> Result<()> {
    if alpha.im == 0.0 || !alpha.is_finite() {
        return Err(BacklundError::PoleOnRealAxis(alpha));
    }
    Ok(())
}

fn check_nonzero(v: [C64; 2]) -> Result<()> {
    if v[0].norm_sqr() + v[1].norm_sqr() == 0.0 {
        return Err(BacklundError::ZeroSeed);
    }
    Ok(())
}

/// Constant data of one Bäcklund step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flavor")]
pub enum Seed {
    #[serde(rename = "SU2")]
    Su2 { alpha: C64, v: [C64; 2] },
    #[serde(rename = "SU11")]
    Su11 { alpha: C64, v: [C64; 2] },
    #[serde(rename = "SL2R")]
    Sl2r { alpha1: f64, alpha2: f64, v1: [f64; 2], v2: [f64; 2] },
    #[serde(rename = "KDV")]
    Kdv { c: f64, xi: f64 },
}

impl Seed {
    pub fn flavor(&self) -> Flavor {
        match self {
            Seed::Su2 { .. } => Flavor::Su2,
            Seed::Su11 { .. } => Flavor::Su11,
            Seed::Sl2r { .. } => Flavor::Sl2r,
            Seed::Kdv { .. } => Flavor::Kdv,
        }
    }

    /// The constant left factor of the dressing.
    pub fn element(&self) -> Result<SimpleElement> {
        match *self {
            Seed::Su2 { alpha, v } => SimpleElement::su2(alpha, v),
            Seed::Su11 { alpha, v } => SimpleElement::su11(alpha, v),
            Seed::Sl2r { alpha1, alpha2, v1, v2 } => SimpleElement::sl2r(alpha1, alpha2, v1, v2),
            Seed::Kdv { c, xi } => SimpleElement::kdv(xi, c),
        }
    }

    pub fn poles(&self) -> Vec<C64> {
        match *self {
            Seed::Su2 { alpha, .. } | Seed::Su11 { alpha, .. } => vec![alpha, alpha.conj()],
            Seed::Sl2r { alpha1, alpha2, .. } => vec![cr(alpha1), cr(alpha2)],
            Seed::Kdv { c, .. } => vec![cr(c), cr(-c)],
        }
    }
}

/// Pointwise dressing data at one `(x, t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pointwise {
    /// Right factor generator: `f_{α,π̃}`, `h_{α₁,α₂,π̃}` or `r_{ξ̃,c}`.
    pub element: SimpleElement,
    /// `y = E(α)⁻¹ v` (first pole).
    pub y: [C64; 2],
    /// Solution at the second pole (SL2R only).
    pub w: Option<[C64; 2]>,
    /// `‖y‖²`, `⟨y,y⟩₁`, `det Y` or `y₂`; the transform is singular where it vanishes.
    pub degeneracy: f64,
}

/// Frame `L E R` of the transformed potential.
pub struct DressedFrame {
    base: Arc<dyn FrameModel>,
    seed: Seed,
    left: SimpleElement,
}

impl std::fmt::Debug for DressedFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DressedFrame").field("flavor", &self.base.flavor()).field("seed", &self.seed).finish()
    }
}

impl DressedFrame {
    pub fn new(base: Arc<dyn FrameModel>, seed: Seed) -> Result<Self> {
        if base.flavor() != seed.flavor() {
            return Err(BacklundError::WrongFlavor { expected: seed.flavor(), got: base.flavor() });
        }
        let left = seed.element()?;
        Ok(DressedFrame { base, seed, left })
    }

    pub fn base(&self) -> &Arc<dyn FrameModel> {
        &self.base
    }

    pub fn seed(&self) -> Seed {
        self.seed
    }

    pub fn left_factor(&self) -> SimpleElement {
        self.left
    }

    pub fn pointwise(&self, x: f64, t: f64) -> std::result::Result<Pointwise, FramesError> {
        let at = |l: C64| -> std::result::Result<Mat2C, FramesError> { Ok(self.base.eval(x, t, l)?.0) };
        let singular = FramesError::SingularDressing { x, t };
        match self.seed {
            Seed::Su2 { alpha, v } | Seed::Su11 { alpha, v } => {
                let y = at(alpha)?.inv().mul_vec(v);
                let flavor = self.seed.flavor();
                let (degeneracy, projection) = if flavor == Flavor::Su2 {
                    (y[0].norm_sqr() + y[1].norm_sqr(), hermitian_projection(y))
                } else {
                    (y[0].norm_sqr() - y[1].norm_sqr(), j_projection(y))
                };
                if degeneracy == 0.0 || !degeneracy.is_finite() {
                    return Err(singular);
                }
                Ok(Pointwise { element: SimpleElement::Unitary { flavor, alpha, projection }, y, w: None, degeneracy })
            }
            Seed::Sl2r { alpha1, alpha2, v1, v2 } => {
                let y = at(cr(alpha1))?.inv().mul_vec([cr(v1[0]), cr(v1[1])]);
                let w = at(cr(alpha2))?.inv().mul_vec([cr(v2[0]), cr(v2[1])]);
                let degeneracy = (y[0] * w[1] - y[1] * w[0]).re;
                if degeneracy == 0.0 || !degeneracy.is_finite() {
                    return Err(singular);
                }
                let projection = oblique_projection(y, w);
                Ok(Pointwise { element: SimpleElement::Real { alpha1, alpha2, projection }, y, w: Some(w), degeneracy })
            }
            Seed::Kdv { c, xi } => {
                let y = at(cr(c))?.inv().mul_vec([cr(c - xi), cr(1.0)]);
                let degeneracy = y[1].re;
                if degeneracy == 0.0 || !degeneracy.is_finite() {
                    return Err(singular);
                }
                let xi_t = c - (y[0] / y[1]).re;
                Ok(Pointwise { element: SimpleElement::Kdv { xi: xi_t, k: c }, y, w: None, degeneracy })
            }
        }
    }

    /// Right factor `R` and `∂R/∂λ`.
    fn right(pw: &Pointwise, lambda: C64) -> (Mat2C, Mat2C) {
        match pw.element {
            SimpleElement::Kdv { xi, k } => (kdv_factor(-xi, k, lambda), Flavor::Kdv.a::<f64>()),
            e => (e.inverse(lambda), e.inverse_dlambda(lambda)),
        }
    }

    /// Left factor `L` and `∂L/∂λ`.
    fn left(&self, lambda: C64) -> (Mat2C, Mat2C) {
        match self.left {
            SimpleElement::Kdv { xi, k } => {
                let inv = SimpleElement::Kdv { xi: -xi, k };
                (inv.inverse(lambda), inv.inverse_dlambda(lambda))
            }
            e => (e.eval(lambda), e.dlambda(lambda)),
        }
    }

    /// One-sided frame `E R` and its λ-derivative.
    pub fn eval_one_sided(&self, x: f64, t: f64, lambda: C64) -> std::result::Result<(Mat2C, Mat2C), FramesError> {
        if self.left.near_pole(lambda) {
            return Err(FramesError::DressingPole(lambda));
        }
        let pw = self.pointwise(x, t)?;
        let (e, el) = self.base.eval(x, t, lambda)?;
        let (r, rl) = Self::right(&pw, lambda);
        Ok((e * r, el * r + e * rl))
    }
}

impl FrameModel for DressedFrame {
    fn flavor(&self) -> Flavor {
        self.base.flavor()
    }

    fn eval(&self, x: f64, t: f64, lambda: C64) -> std::result::Result<(Mat2C, Mat2C), FramesError> {
        let (m, ml) = self.eval_one_sided(x, t, lambda)?;
        let (l, ll) = self.left(lambda);
        Ok((l * m, ll * m + l * ml))
    }

    fn potential(&self, x: f64, t: f64) -> std::result::Result<(C64, C64), FramesError> {
        let (q, r) = self.base.potential(x, t)?;
        let pw = self.pointwise(x, t)?;
        let a = self.flavor().a::<f64>();
        match pw.element {
            SimpleElement::Unitary { alpha, projection, .. } => {
                let d = projection.commutator(&a) * (alpha.conj() - alpha);
                Ok((q + d.m[1], r + d.m[2]))
            }
            SimpleElement::Real { alpha1, alpha2, projection } => {
                let d = (Mat2C::identity() - projection).commutator(&a).scale_re(alpha1 - alpha2);
                Ok((q + d.m[1], r + d.m[2]))
            }
            SimpleElement::Kdv { xi, k } => Ok((-q + 2.0 * (xi * xi - k * k), r)),
        }
    }
}

/// Grid, times and stored spectral parameters of a sampled transform.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampling {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub lambdas: Vec<C64>,
}

impl Sampling {
    pub fn new(grid: Grid, times: Vec<f64>, lambdas: Vec<C64>) -> Self {
        Sampling { grid, times, lambdas }
    }

    /// `nt` times `t0 + k dt`.
    pub fn uniform(grid: Grid, t0: f64, dt: f64, nt: usize, lambdas: Vec<C64>) -> Self {
        Sampling { grid, times: (0..nt).map(|k| t0 + k as f64 * dt).collect(), lambdas }
    }
}

/// Output of a sampled Bäcklund transformation.
#[derive(Clone, Debug)]
pub struct BTResult {
    pub model: Arc<DressedFrame>,
    pub potentials: Vec<PotentialField>,
    pub frame: LaxFrame,
    /// `dressing[k][i]` is the right-factor generator at `(x_i, t_k)`.
    pub dressing: Vec<Vec<SimpleElement>>,
    pub degeneracy: Vec<Vec<f64>>,
    /// `(k, i)` where the degeneracy changes sign between `x_i` and `x_{i+1}`.
    pub singular_locus: Vec<(usize, usize)>,
}

/// Apply one Bäcklund step to any frame model and sample the result.
pub fn dress(base: Arc<dyn FrameModel>, seed: Seed, sampling: &Sampling) -> Result<BTResult> {
    let model = Arc::new(DressedFrame::new(base, seed)?);
    let grid = sampling.grid;
    let rows: Vec<Vec<Pointwise>> = sampling
        .times
        .par_iter()
        .map(|&t| (0..grid.n).map(|i| model.pointwise(grid.x(i), t)).collect::<std::result::Result<Vec<_>, _>>())
        .collect::<std::result::Result<_, _>>()?;
    let degeneracy: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|p| p.degeneracy).collect()).collect();
    let mut singular_locus = Vec::new();
    for (k, d) in degeneracy.iter().enumerate() {
        for i in 0..d.len().saturating_sub(1) {
            if d[i].signum() != d[i + 1].signum() {
                singular_locus.push((k, i));
            }
        }
    }
    if matches!(seed, Seed::Kdv { .. }) {
        if let Some(&(k, i)) = singular_locus.first() {
            return Err(BacklundError::VanishingY2 { x: grid.x(i), t: sampling.times[k] });
        }
    }
    let dressing = rows.iter().map(|r| r.iter().map(|p| p.element).collect()).collect();
    let potentials = frames::sample_potentials(model.as_ref(), grid, &sampling.times)?;
    let frame = frames::sample_frame(model.as_ref(), grid, &sampling.times, &sampling.lambdas)?;
    Ok(BTResult { model, potentials, frame, dressing, degeneracy, singular_locus })
}

fn expect_flavor(base: &dyn FrameModel, f: Flavor) -> Result<()> {
    if base.flavor() != f {
        return Err(BacklundError::WrongFlavor { expected: f, got: base.flavor() });
    }
    Ok(())
}

/// Focusing NLS transform with pole `α` and seed `v0`.
pub fn bt_nls(base: Arc<dyn FrameModel>, sampling: &Sampling, alpha: C64, v0: [C64; 2]) -> Result<BTResult> {
    expect_flavor(base.as_ref(), Flavor::Su2)?;
    dress(base, Seed::Su2 { alpha, v: v0 }, sampling)
}

/// Defocusing NLS transform; the result may be singular where `⟨y,y⟩₁ = 0`.
pub fn bt_su11(base: Arc<dyn FrameModel>, sampling: &Sampling, alpha: C64, v0: [C64; 2]) -> Result<BTResult> {
    expect_flavor(base.as_ref(), Flavor::Su11)?;
    dress(base, Seed::Su11 { alpha, v: v0 }, sampling)
}

/// Transform of the `SL(2,ℝ)` second flow with real poles `α₁ ≠ α₂`.
pub fn bt_sl2r(base: Arc<dyn FrameModel>, sampling: &Sampling, alpha1: f64, alpha2: f64, v1: [f64; 2], v2: [f64; 2]) -> Result<BTResult> {
    expect_flavor(base.as_ref(), Flavor::Sl2r)?;
    dress(base, Seed::Sl2r { alpha1, alpha2, v1, v2 }, sampling)
}

/// KdV transform with parameter `c ≠ 0` and seed `ξ`.
pub fn bt_kdv(base: Arc<dyn FrameModel>, sampling: &Sampling, c: f64, xi: f64) -> Result<BTResult> {
    expect_flavor(base.as_ref(), Flavor::Kdv)?;
    dress(base, Seed::Kdv { c, xi }, sampling)
}

/// Transform of a numerically given trajectory of flow `j`: the frame is
/// integrated at the poles and the stored parameters, then dressed.
pub fn bt_from_trajectory(traj: &[PotentialField], t0: f64, dt: f64, j: usize, seed: Seed, lambdas: &[C64]) -> Result<BTResult> {
    let first = traj.first().ok_or_else(|| BacklundError::InvalidParameter("empty trajectory".into()))?;
    let mut ls: Vec<C64> = lambdas.to_vec();
    let poles = match seed {
        Seed::Su2 { alpha, .. } | Seed::Su11 { alpha, .. } => vec![alpha],
        Seed::Sl2r { alpha1, alpha2, .. } => vec![cr(alpha1), cr(alpha2)],
        Seed::Kdv { c, .. } => vec![cr(c)],
    };
    for p in poles {
        if !ls.iter().any(|l| (l - p).norm() < 1e-14) {
            ls.push(p);
        }
    }
    let base = frames::integrate_lax_frame(traj, t0, dt, j, &ls, Mat2C::identity())?;
    let times: Vec<f64> = (0..traj.len()).map(|k| t0 + k as f64 * dt).collect();
    dress(Arc::new(base), seed, &Sampling::new(first.grid, times, lambdas.to_vec()))
}

/// Solution of the Riccati form of the transform.
#[derive(Clone, Debug)]
pub struct RiccatiResult {
    /// `p[k][i]` at `(x_i, t_k)`.
    pub p: Vec<Vec<C64>>,
    pub potentials: Vec<PotentialField>,
    /// Points next to which `|p|² - 1` changes sign (SU11).
    pub singular_locus: Vec<(usize, usize)>,
}

const RICCATI_LIMIT: f64 = 1e8;

/// Integrate `p = y₁/y₂` for `y_x = -A(α) y`, `y_t = -B(α) y` along `t` at
/// `x₀` and then along `x`, with `substeps` RK4 steps per grid cell.
pub fn bt_riccati(traj: &[PotentialField], t0: f64, dt: f64, alpha: C64, p0: C64, substeps: usize) -> Result<RiccatiResult> {
    let first = traj.first().ok_or_else(|| BacklundError::InvalidParameter("empty trajectory".into()))?;
    let flavor = first.flavor;
    if !matches!(flavor, Flavor::Su2 | Flavor::Su11) {
        return Err(BacklundError::WrongFlavor { expected: Flavor::Su2, got: flavor });
    }
    check_pole(alpha)?;
    if flavor == Flavor::Su11 && (p0.norm() - 1.0).abs() < 1e-12 {
        return Err(BacklundError::SingularSeed);
    }
    let grid = first.grid;
    let s = substeps.max(1);
    let nodes = 2 * s;
    let h = grid.h();
    let a = flavor.a::<f64>().scale(alpha);
    // Riccati right-hand side for y' = -M y.
    let rhs = |m: &Mat2C, p: C64| -> C64 {
        let (aa, b, c) = (-m.m[0], -m.m[1], -m.m[2]);
        -c * p * p + aa * p * 2.0 + b
    };
    let rk4 = |p: C64, m0: &Mat2C, mh: &Mat2C, m1: &Mat2C, step: f64| -> C64 {
        let k1 = rhs(m0, p);
        let k2 = rhs(mh, p + k1 * (0.5 * step));
        let k3 = rhs(mh, p + k2 * (0.5 * step));
        let k4 = rhs(m1, p + k3 * step);
        p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0)
    };
    // Along t at x₀.
    let mut p_start = vec![p0];
    if traj.len() > 1 {
        let b: Vec<Mat2C> = traj
            .iter()
            .map(|u| Ok(crate::hierarchy::lax_pair(u, 2, alpha)?.b[0]))
            .collect::<std::result::Result<_, HierarchyError>>()?;
        let sub: Vec<Vec<Mat2C>> = (0..=nodes).map(|m| resample_mats(&b, m as f64 / nodes as f64)).collect();
        let mut p = p0;
        for k in 0..traj.len() - 1 {
            for sidx in 0..s {
                let m0 = &sub[2 * sidx][k];
                let mh = &sub[2 * sidx + 1][k];
                let m1 = &sub[2 * sidx + 2][k];
                p = rk4(p, m0, mh, m1, dt / s as f64);
            }
            if !(p.norm() < RICCATI_LIMIT) {
                return Err(BacklundError::RiccatiBlowup { x: grid.x0, t: t0 + (k + 1) as f64 * dt });
            }
            p_start.push(p);
        }
    }
    let rows: Vec<Vec<C64>> = traj
        .par_iter()
        .zip(p_start.par_iter())
        .enumerate()
        .map(|(k, (u, &ps))| {
            let sub: Vec<(Vec<C64>, Vec<C64>)> = (0..=nodes)
                .map(|m| {
                    let th = m as f64 / nodes as f64;
                    (resample(&grid, &u.q, th), resample(&grid, &u.r, th))
                })
                .collect();
            let mat = |m: usize, i: usize| a + Mat2C::offdiag(sub[m].0[i], sub[m].1[i]);
            let mut p = ps;
            let mut row = Vec::with_capacity(grid.n);
            row.push(p);
            for i in 0..grid.n - 1 {
                for sidx in 0..s {
                    p = rk4(p, &mat(2 * sidx, i), &mat(2 * sidx + 1, i), &mat(2 * sidx + 2, i), h / s as f64);
                }
                if !(p.norm() < RICCATI_LIMIT) {
                    return Err(BacklundError::RiccatiBlowup { x: grid.x(i + 1), t: t0 + k as f64 * dt });
                }
                row.push(p);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let two_i_im = (alpha - alpha.conj()) * C64::new(0.0, 2.0);
    let mut singular_locus = Vec::new();
    let potentials = traj
        .iter()
        .zip(&rows)
        .enumerate()
        .map(|(k, (u, row))| {
            let q: Vec<C64> = match flavor {
                Flavor::Su2 => row.iter().zip(&u.q).map(|(p, q)| q + two_i_im * p / (1.0 + p.norm_sqr())).collect(),
                _ => row.iter().zip(&u.q).map(|(p, q)| q - two_i_im * p / (p.norm_sqr() - 1.0)).collect(),
            };
            if flavor == Flavor::Su11 {
                for i in 0..row.len() - 1 {
                    if (row[i].norm_sqr() - 1.0).signum() != (row[i + 1].norm_sqr() - 1.0).signum() {
                        singular_locus.push((k, i));
                    }
                }
            }
            PotentialField::from_q(flavor, grid, q)
        })
        .collect::<std::result::Result<_, _>>()?;
    Ok(RiccatiResult { p: rows, potentials, singular_locus })
}

fn resample(grid: &Grid, f: &[C64], theta: f64) -> Vec<C64> {
    match grid.boundary {
        crate::hierarchy::Boundary::Periodic => crate::spectral::shift(f, grid.l, theta * grid.h()),
        crate::hierarchy::Boundary::Open => crate::spectral::fd_resample(f, theta),
    }
}

fn resample_mats(seq: &[Mat2C], theta: f64) -> Vec<Mat2C> {
    let comps: Vec<Vec<C64>> = (0..4).map(|k| crate::spectral::fd_resample(&seq.iter().map(|m| m.m[k]).collect::<Vec<_>>(), theta)).collect();
    (0..seq.len()).map(|i| Mat2C { m: [comps[0][i], comps[1][i], comps[2][i], comps[3][i]] }).collect()
}

/// Projections `(τ₁, τ₂)` with `f_{α₁,τ₁} f_{α₂,π₂} = f_{α₂,τ₂} f_{α₁,π₁}`.
pub fn permute(alpha1: C64, pi1: &Mat2C, alpha2: C64, pi2: &Mat2C) -> Result<(Mat2C, Mat2C)> {
    check_pole(alpha1)?;
    check_pole(alpha2)?;
    if (alpha1 - alpha2).norm() < 1e-14 || (alpha1 - alpha2.conj()).norm() < 1e-14 {
        return Err(BacklundError::CoincidentPoles);
    }
    let f = |alpha: C64, pi: &Mat2C, l: C64| SimpleElement::Unitary { flavor: Flavor::Su2, alpha, projection: *pi }.eval(l);
    let image = |m: &Mat2C, pi: &Mat2C| -> Result<Mat2C> {
        let tr = pi.trace().re;
        if (tr - 2.0).abs() < 1e-10 {
            return Ok(Mat2C::identity());
        }
        if (tr - 1.0).abs() > 1e-10 {
            return Err(BacklundError::InvalidParameter("projection must have rank one or two".into()));
        }
        let c0 = [pi.m[0], pi.m[2]];
        let c1 = [pi.m[1], pi.m[3]];
        let v = if c0[0].norm_sqr() + c0[1].norm_sqr() >= c1[0].norm_sqr() + c1[1].norm_sqr() { c0 } else { c1 };
        Ok(hermitian_projection(m.mul_vec(v)))
    };
    let tau1 = image(&f(alpha2, pi2, alpha1), pi1)?;
    let tau2 = image(&f(alpha1, pi1, alpha2), pi2)?;
    Ok((tau1, tau2))
}

/// Max-norm of `f_{α₁,τ₁} f_{α₂,π₂} - f_{α₂,τ₂} f_{α₁,π₁}` over the samples.
pub fn permutability_residual(alpha1: C64, pi1: &Mat2C, tau1: &Mat2C, alpha2: C64, pi2: &Mat2C, tau2: &Mat2C, lambdas: &[C64]) -> f64 {
    let f = |alpha: C64, pi: &Mat2C, l: C64| SimpleElement::Unitary { flavor: Flavor::Su2, alpha, projection: *pi }.eval(l);
    lambdas
        .iter()
        .map(|&l| (f(alpha1, tau1, l) * f(alpha2, pi2, l) - f(alpha2, tau2, l) * f(alpha1, pi1, l)).max_abs())
        .fold(0.0, f64::max)
}

/// Closed-form `p̃₁` of the permuted Riccati solution (swap indices for `p̃₂`).
pub fn permuted_p(alpha1: C64, p1: C64, alpha2: C64, p2: C64) -> C64 {
    let a2b = alpha2.conj();
    let num = (alpha1 - a2b) * p1 + (alpha1 - alpha2) * p1 * p2.norm_sqr() - (alpha2 - a2b) * p2;
    let den = (alpha1 - alpha2) + (alpha1 - a2b) * p2.norm_sqr() - (alpha2 - a2b) * p1 * p2.conj();
    num / den
}

/// `p̃₁` from the projection construction `f_{α₂,π̃₂}(α₁)(p₁, 1)`.
pub fn permuted_p_projection(alpha1: C64, p1: C64, alpha2: C64, p2: C64) -> C64 {
    let f = SimpleElement::Unitary { flavor: Flavor::Su2, alpha: alpha2, projection: hermitian_projection([p2, cr(1.0)]) };
    let xi = f.eval(alpha1).mul_vec([p1, cr(1.0)]);
    xi[0] / xi[1]
}

/// Sym data of a frame model at `λ = 0` on a grid (closing sample included).
struct SymSamples {
    gamma: Vec<Vec<P3>>,
    frames: Vec<Vec<[P3; 3]>>,
    phi: Vec<Vec<Mat2C>>,
}

fn to_frame(m: [[f64; 3]; 3]) -> [P3; 3] {
    [[m[0][0], m[1][0], m[2][0]], [m[0][1], m[1][1], m[2][1]], [m[0][2], m[1][2], m[2][2]]]
}

fn nx(grid: &Grid) -> usize {
    match grid.boundary {
        crate::hierarchy::Boundary::Periodic => grid.n + 1,
        crate::hierarchy::Boundary::Open => grid.n,
    }
}

fn sym_samples(model: &dyn FrameModel, grid: &Grid, times: &[f64]) -> std::result::Result<SymSamples, FramesError> {
    let flavor = model.flavor();
    let per_t: Vec<(Vec<P3>, Vec<[P3; 3]>, Vec<Mat2C>)> = times
        .par_iter()
        .map(|&t| {
            let mut g = Vec::new();
            let mut f = Vec::new();
            let mut p = Vec::new();
            for i in 0..nx(grid) {
                let (e, el) = model.eval(grid.x(i), t, cz())?;
                g.push(lie_to_vec_unchecked(&(el * e.inv()).traceless(), flavor).to_array());
                f.push(to_frame(adjoint_frame_unchecked(&e, flavor)));
                p.push(e);
            }
            Ok((g, f, p))
        })
        .collect::<std::result::Result<_, FramesError>>()?;
    let mut out = SymSamples { gamma: Vec::new(), frames: Vec::new(), phi: Vec::new() };
    for (g, f, p) in per_t {
        out.gamma.push(g);
        out.frames.push(f);
        out.phi.push(p);
    }
    Ok(out)
}

fn build_curves(points: Vec<Vec<P3>>, frames: &[Vec<[P3; 3]>], flavor: Flavor, grid: &Grid) -> Result<Vec<frames::DiscreteCurve>> {
    points
        .into_iter()
        .zip(frames)
        .map(|(p, f)| Ok(close_up(p, f.clone(), flavor.metric(), grid.h(), grid.x0, grid.boundary)?.0))
        .collect()
}

/// Curve-level transform computed three ways.
#[derive(Clone, Debug)]
pub struct CurveBT {
    pub times: Vec<f64>,
    /// Base curve plus the closed-form expansion in the base frame.
    pub formula: Vec<frames::DiscreteCurve>,
    /// Base curve plus `E(0) R_λ R⁻¹ E(0)⁻¹` of the one-sided frame.
    pub matrix_form: Vec<frames::DiscreteCurve>,
    /// Sym curve of the two-sided dressed frame.
    pub sym: SymOutput,
    /// Max pointwise distance between `formula` and `matrix_form`.
    pub formula_gap: f64,
    /// Max pointwise distance between `sym` and the image of `formula` under
    /// the rigid motion induced by the left factor at `λ = 0`.
    pub sym_gap: f64,
}

/// Coordinates of the closed-form curve update in the base frame at `λ = 0`.
pub fn curve_update_coefficients(pw: &Pointwise, seed: &Seed) -> P3 {
    let y = pw.y;
    match *seed {
        Seed::Su2 { alpha, .. } => {
            let k = alpha.im / (alpha.norm_sqr() * (y[0].norm_sqr() + y[1].norm_sqr()));
            let w = y[0] * y[1].conj();
            [k * (y[1].norm_sqr() - y[0].norm_sqr()), k * 2.0 * w.re, k * 2.0 * w.im]
        }
        Seed::Su11 { alpha, .. } => {
            let k = alpha.im / (alpha.norm_sqr() * (y[0].norm_sqr() - y[1].norm_sqr()));
            let w = y[0] * y[1].conj();
            [-k * (y[0].norm_sqr() + y[1].norm_sqr()), -2.0 * k * w.im, 2.0 * k * w.re]
        }
        Seed::Sl2r { alpha1, alpha2, .. } => {
            let w = pw.w.unwrap_or([cz(), cz()]);
            let (y1, y2, y3, y4) = (y[0].re, y[1].re, w[0].re, w[1].re);
            let k = (1.0 / alpha1 - 1.0 / alpha2) / (y1 * y4 - y2 * y3);
            [k * 0.5 * (y1 * y4 + y2 * y3), -k * y1 * y3, k * y2 * y4]
        }
        Seed::Kdv { c, .. } => {
            let xi = match pw.element {
                SimpleElement::Kdv { xi, .. } => xi,
                _ => 0.0,
            };
            let k = 1.0 / (c * c);
            [-k * xi, k * (c * c - xi * xi), k]
        }
    }
}

/// Transform the Sym curve of `base` (at `λ = 0`) by one Bäcklund step.
pub fn bt_curve(base: Arc<dyn FrameModel>, seed: Seed, sampling: &Sampling) -> Result<CurveBT> {
    let grid = sampling.grid;
    let flavor = base.flavor();
    let model = DressedFrame::new(base.clone(), seed)?;
    let bs = sym_samples(base.as_ref(), &grid, &sampling.times)?;
    let mut formula = Vec::new();
    let mut matrix = Vec::new();
    let mut gap: f64 = 0.0;
    for (k, &t) in sampling.times.iter().enumerate() {
        let mut fp = Vec::new();
        let mut mp = Vec::new();
        for i in 0..nx(&grid) {
            let x = grid.x(i);
            let pw = model.pointwise(x, t)?;
            let c = curve_update_coefficients(&pw, &seed);
            let g = bs.gamma[k][i];
            let fr = bs.frames[k][i];
            fp.push([0, 1, 2].map(|m| g[m] + c[0] * fr[0][m] + c[1] * fr[1][m] + c[2] * fr[2][m]));
            let (r, rl) = DressedFrame::right(&pw, cz());
            let phi = bs.phi[k][i];
            let corr = (phi * rl * r.inv() * phi.inv()).traceless();
            let v = lie_to_vec_unchecked(&corr, flavor).to_array();
            let mpt = [0, 1, 2].map(|m| g[m] + v[m]);
            gap = gap.max((0..3).fold(0.0f64, |a, m| a.max((mpt[m] - fp.last().unwrap()[m]).abs())));
            mp.push(mpt);
        }
        formula.push(fp);
        matrix.push(mp);
    }
    let one_sided: Vec<Vec<[P3; 3]>> = sampling
        .times
        .iter()
        .map(|&t| {
            (0..nx(&grid))
                .map(|i| Ok(to_frame(adjoint_frame_unchecked(&model.eval_one_sided(grid.x(i), t, cz())?.0, flavor))))
                .collect::<std::result::Result<Vec<_>, FramesError>>()
        })
        .collect::<std::result::Result<_, _>>()?;
    let formula = build_curves(formula, &one_sided, flavor, &grid)?;
    let matrix_form = build_curves(matrix, &one_sided, flavor, &grid)?;
    let frame = frames::sample_frame(&model, grid, &sampling.times, &[cz()])?;
    let sym = frames::sym_curve(&frame, 0.0)?;
    let (l0, ll0) = model.left(cz());
    let shift = (ll0 * l0.inv()).traceless();
    let mut sym_gap: f64 = 0.0;
    for (a, b) in sym.curves.iter().zip(&formula) {
        for (pa, pb) in a.points.iter().zip(&b.points) {
            let m = l0 * vec_to_lie(&Vec3R::from_array(*pb, flavor.metric()), flavor) * l0.inv() + shift;
            let moved = lie_to_vec_unchecked(&m, flavor).to_array();
            sym_gap = sym_gap.max((0..3).fold(0.0f64, |acc, k| acc.max((moved[k] - pa[k]).abs())));
        }
    }
    Ok(CurveBT { times: sampling.times.clone(), formula, matrix_form, sym, formula_gap: gap, sym_gap })
}

/// Focusing-NLS curve transform (the VFE case of [`bt_curve`]).
pub fn bt_curve_vfe(base: Arc<dyn FrameModel>, sampling: &Sampling, alpha: C64, v0: [C64; 2]) -> Result<CurveBT> {
    expect_flavor(base.as_ref(), Flavor::Su2)?;
    bt_curve(base, Seed::Su2 { alpha, v: v0 }, sampling)
}

/// Curve update written with the Riccati variable `p = y₁/y₂`.
pub fn vfe_riccati_update(alpha: C64, p: C64) -> P3 {
    let k = alpha.im / (alpha.norm_sqr() * (1.0 + p.norm_sqr()));
    [k * (1.0 - p.norm_sqr()), k * 2.0 * p.re, k * 2.0 * p.im]
}

/// Both routes of the two-step VFE permutability diagram.
#[derive(Clone, Debug)]
pub struct VfePermutability {
    pub times: Vec<f64>,
    /// `q₃` through `q₂ + …` and through `q₁ + …`, per slice.
    pub q12: [Vec<Vec<C64>>; 2],
    /// `γ₁₂` through `γ₁ + …` and through `γ₂ + …`, per slice.
    pub gamma12: [Vec<Vec<P3>>; 2],
    pub q_gap: f64,
    pub gamma_gap: f64,
}

/// Evaluate the permutability formulas for two focusing-NLS seeds
/// `(α_i, v_i)` with `p_i = y_{i1}/y_{i2}` and `y_i = E(α_i)⁻¹ v_i`.
pub fn vfe_permutability(base: Arc<dyn FrameModel>, sampling: &Sampling, s1: (C64, [C64; 2]), s2: (C64, [C64; 2])) -> Result<VfePermutability> {
    expect_flavor(base.as_ref(), Flavor::Su2)?;
    let ((a1, v1), (a2, v2)) = (s1, s2);
    check_pole(a1)?;
    check_pole(a2)?;
    if (a1 - a2).norm() < 1e-14 || (a1 - a2.conj()).norm() < 1e-14 {
        return Err(BacklundError::CoincidentPoles);
    }
    let grid = sampling.grid;
    let bs = sym_samples(base.as_ref(), &grid, &sampling.times)?;
    let k2i = |a: C64| (a - a.conj()) * C64::new(0.0, 2.0);
    let mut q12 = [Vec::new(), Vec::new()];
    let mut gamma12 = [Vec::new(), Vec::new()];
    let (mut q_gap, mut g_gap) = (0.0f64, 0.0f64);
    let frame_of = |phi: &Mat2C| to_frame(adjoint_frame_unchecked(phi, Flavor::Su2));
    let add = |g: P3, c: P3, f: &[P3; 3]| [0, 1, 2].map(|m| g[m] + c[0] * f[0][m] + c[1] * f[1][m] + c[2] * f[2][m]);
    for (k, &t) in sampling.times.iter().enumerate() {
        let mut qa = Vec::new();
        let mut qb = Vec::new();
        let mut ga = Vec::new();
        let mut gb = Vec::new();
        for i in 0..nx(&grid) {
            let x = grid.x(i);
            let (q, _) = base.potential(x, t)?;
            let y1 = base.eval(x, t, a1)?.0.inv().mul_vec(v1);
            let y2 = base.eval(x, t, a2)?.0.inv().mul_vec(v2);
            let (p1, p2) = (y1[0] / y1[1], y2[0] / y2[1]);
            let phi = bs.phi[k][i];
            let g = bs.gamma[k][i];
            let fr = bs.frames[k][i];
            let phi_i = |a: C64, p: C64| {
                let pi = hermitian_projection([p, cr(1.0)]);
                phi * (pi + (Mat2C::identity() - pi) * (a / a.conj()))
            };
            let g1 = add(g, vfe_riccati_update(a1, p1), &fr);
            let g2 = add(g, vfe_riccati_update(a2, p2), &fr);
            let pt1 = permuted_p(a1, p1, a2, p2);
            let pt2 = permuted_p(a2, p2, a1, p1);
            let q1 = q + k2i(a1) * p1 / (1.0 + p1.norm_sqr());
            let q2 = q + k2i(a2) * p2 / (1.0 + p2.norm_sqr());
            let qa_v = q2 + k2i(a1) * pt1 / (1.0 + pt1.norm_sqr());
            let qb_v = q1 + k2i(a2) * pt2 / (1.0 + pt2.norm_sqr());
            let ga_v = add(g1, vfe_riccati_update(a2, pt2), &frame_of(&phi_i(a1, p1)));
            let gb_v = add(g2, vfe_riccati_update(a1, pt1), &frame_of(&phi_i(a2, p2)));
            q_gap = q_gap.max((qa_v - qb_v).norm());
            g_gap = g_gap.max((0..3).fold(0.0f64, |acc, m| acc.max((ga_v[m] - gb_v[m]).abs())));
            qa.push(qa_v);
            qb.push(qb_v);
            ga.push(ga_v);
            gb.push(gb_v);
        }
        q12[0].push(qa);
        q12[1].push(qb);
        gamma12[0].push(ga);
        gamma12[1].push(gb);
    }
    Ok(VfePermutability { times: sampling.times.clone(), q12, gamma12, q_gap, gamma_gap: g_gap })
}

/// Default flow order of a flavor's curve flow (3 for KdV, else 2).
pub fn default_flow(flavor: Flavor) -> usize {
    if flavor == Flavor::Kdv {
        3
    } else {
        2
    }
}

/// Multi-soliton solution built from the vacuum.
#[derive(Clone, Debug)]
pub struct Family {
    pub flavor: Flavor,
    pub seeds: Vec<Seed>,
    pub model: Arc<dyn FrameModel>,
    pub potentials: Vec<PotentialField>,
    pub frame: LaxFrame,
    /// Sym curves at `λ = 0`.
    pub curves: SymOutput,
    pub singular_locus: Vec<(usize, usize)>,
}

/// Dress the vacuum of `flavor` successively by `seeds`, threading the
/// updated frame through each step.
pub fn soliton_factory(flavor: Flavor, seeds: &[Seed], sampling: &Sampling) -> Result<Family> {
    let mut model: Arc<dyn FrameModel> = Arc::new(VacuumFrame::new(flavor, default_flow(flavor)));
    let mut last: Option<Arc<DressedFrame>> = None;
    for (n, seed) in seeds.iter().enumerate() {
        if seed.flavor() != flavor {
            return Err(BacklundError::WrongFlavor { expected: flavor, got: seed.flavor() });
        }
        for prev in &seeds[..n] {
            for p in seed.poles() {
                if prev.poles().iter().any(|q| (q - p).norm() < 1e-12) {
                    return Err(BacklundError::CoincidentPoles);
                }
            }
        }
        let dressed = Arc::new(DressedFrame::new(model, *seed)?);
        last = Some(dressed.clone());
        model = dressed;
    }
    let grid = sampling.grid;
    let mut singular = Vec::new();
    if let Some(d) = &last {
        for (k, &t) in sampling.times.iter().enumerate() {
            let vals: Vec<f64> = (0..grid.n).map(|i| d.pointwise(grid.x(i), t).map(|p| p.degeneracy).unwrap_or(0.0)).collect();
            for i in 0..vals.len() - 1 {
                if vals[i].signum() != vals[i + 1].signum() || vals[i] == 0.0 {
                    singular.push((k, i));
                }
            }
        }
    }
    let potentials = frames::sample_potentials(model.as_ref(), grid, &sampling.times)?;
    let mut lambdas = sampling.lambdas.clone();
    if !lambdas.iter().any(|l| l.norm() < 1e-14) {
        lambdas.push(cz());
    }
    let frame = frames::sample_frame(model.as_ref(), grid, &sampling.times, &lambdas)?;
    let curves = frames::sym_curve(&frame, 0.0)?;
    Ok(Family { flavor, seeds: seeds.to_vec(), model, potentials, frame, curves, singular_locus: singular })
}

/// Rewrite seeds whose vectors refer to the vacuum frame for successive
/// dressing: the vector of seed `k` is carried through the left factors of
/// the seeds before it, `v ↦ f_{k-1}(α) ⋯ f_1(α) v`. The resulting family
/// does not depend on the order of the seeds.
pub fn carry_seeds(seeds: &[Seed]) -> Result<Vec<Seed>> {
    let mut factors: Vec<SimpleElement> = Vec::with_capacity(seeds.len());
    let mut out = Vec::with_capacity(seeds.len());
    let carry = |factors: &[SimpleElement], alpha: C64, v: [C64; 2]| factors.iter().fold(v, |v, f| f.eval(alpha).mul_vec(v));
    let real = |v: [C64; 2]| [v[0].re, v[1].re];
    let cplx = |v: [f64; 2]| [cr(v[0]), cr(v[1])];
    for seed in seeds {
        let carried = match *seed {
            Seed::Su2 { alpha, v } => Seed::Su2 { alpha, v: carry(&factors, alpha, v) },
            Seed::Su11 { alpha, v } => Seed::Su11 { alpha, v: carry(&factors, alpha, v) },
            Seed::Sl2r { alpha1, alpha2, v1, v2 } => Seed::Sl2r {
                alpha1,
                alpha2,
                v1: real(carry(&factors, cr(alpha1), cplx(v1))),
                v2: real(carry(&factors, cr(alpha2), cplx(v2))),
            },
            Seed::Kdv { .. } => *seed,
        };
        factors.push(carried.element()?);
        out.push(carried);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::hasimoto;
    use crate::hierarchy::{self, Boundary};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn vacuum(flavor: Flavor) -> Arc<dyn FrameModel> {
        Arc::new(VacuumFrame::new(flavor, default_flow(flavor)))
    }

    /// Max-norm of `q_t - rhs` at the middle of five slices spaced by `dt`.
    fn flow_residual(slices: &[PotentialField], dt: f64, j: usize, mask: impl Fn(usize) -> bool) -> f64 {
        let rhs = hierarchy::flow_rhs(&slices[2], j).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..slices[2].grid.n {
            if !mask(i) {
                continue;
            }
            let qt = (slices[0].q[i] - slices[1].q[i] * 8.0 + slices[3].q[i] * 8.0 - slices[4].q[i]) / (12.0 * dt);
            let rt = (slices[0].r[i] - slices[1].r[i] * 8.0 + slices[3].r[i] * 8.0 - slices[4].r[i]) / (12.0 * dt);
            worst = worst.max((qt - rhs.q[i]).norm()).max((rt - rhs.r[i]).norm());
        }
        worst
    }

    fn five(grid: Grid, dt: f64, lambdas: Vec<C64>) -> Sampling {
        Sampling::uniform(grid, -2.0 * dt, dt, 5, lambdas)
    }

    #[test]
    fn simple_elements_invert_and_are_real() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let els = [
            SimpleElement::su2(c(0.3, 1.1), [c(1.0, 0.2), c(-0.4, 0.7)]).unwrap(),
            SimpleElement::su11(c(-0.2, 0.8), [c(2.0, 0.1), c(0.5, -0.3)]).unwrap(),
            SimpleElement::sl2r(1.3, -0.4, [1.0, 0.5], [0.2, -1.0]).unwrap(),
            SimpleElement::kdv(0.7, 1.2).unwrap(),
        ];
        for e in els {
            assert!(e.projection_residual() < 1e-14);
            for _ in 0..8 {
                let l = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                assert!(e.reality_residual(l) < 1e-12, "{e:?}");
                let h = 1e-6;
                let fd = (e.inverse(l + h) - e.inverse(l - h)).scale_re(0.5 / h);
                assert!((fd - e.inverse_dlambda(l)).max_abs() < 1e-7);
                let fd = (e.eval(l + h) - e.eval(l - h)).scale_re(0.5 / h);
                assert!((fd - e.dlambda(l)).max_abs() < 1e-7);
            }
        }
        assert_eq!(SimpleElement::su11(c(0.0, 1.0), [c(1.0, 0.0), c(0.0, 1.0)]), Err(BacklundError::NullSeedVector));
        assert_eq!(SimpleElement::su2(c(1.0, 0.0), [c(1.0, 0.0), c(0.0, 0.0)]), Err(BacklundError::PoleOnRealAxis(c(1.0, 0.0))));
        assert_eq!(SimpleElement::sl2r(1.0, 2.0, [1.0, 2.0], [2.0, 4.0]), Err(BacklundError::DependentSeeds));
    }

    #[test]
    fn nls_one_soliton_from_vacuum() {
        let grid = Grid::periodic(512, 24.0, -12.0).unwrap();
        let dt = 1e-3;
        let lams = vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.5), c(0.0, -0.5)];
        let alpha = c(0.0, 1.0);
        let res = bt_nls(vacuum(Flavor::Su2), &five(grid, dt, lams), alpha, [c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let mid = &res.potentials[2];
        for i in 0..grid.n {
            let x = grid.x(i);
            assert!((mid.q[i] - c(-2.0 / (2.0 * x).cosh(), 0.0)).norm() < 1e-8);
            // printed closed form in terms of y
            let y = [c(x.exp(), 0.0), c((-x).exp(), 0.0)];
            let q = c(0.0, 2.0) * (alpha - alpha.conj()) * y[0] * y[1].conj() / (y[0].norm_sqr() + y[1].norm_sqr());
            assert!((mid.q[i] - q).norm() < 1e-12);
        }
        assert!((res.model.potential(0.0, 0.0).unwrap().0 + 2.0).norm() < 1e-14);
        assert!(flow_residual(&res.potentials, dt, 2, |_| true) < 1e-5);
        assert!(res.frame.reality < 1e-8, "{}", res.frame.reality);
        for l in [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0)] {
            assert!(hierarchy::lax_flatness(&res.potentials, dt, 2, l).unwrap() < 1e-6);
        }
        let (e, _) = res.model.eval(0.0, 0.0, c(0.4, 0.3)).unwrap();
        assert!((e - Mat2C::identity()).max_abs() < 1e-14);
        assert!(res.singular_locus.is_empty());
        // x-derivative of the dressed frame against the transformed potential
        let l = c(0.3, -0.2);
        let (e0, _) = res.model.eval(0.4, 0.0, l).unwrap();
        let h = 1e-5;
        let de = (res.model.eval(0.4 + h, 0.0, l).unwrap().0 - res.model.eval(0.4 - h, 0.0, l).unwrap().0).scale_re(0.5 / h);
        let (q, r) = res.model.potential(0.4, 0.0).unwrap();
        let a = Flavor::Su2.a::<f64>().scale(l) + Mat2C::offdiag(q, r);
        assert!((e0.inv() * de - a).max_abs() < 1e-8);
        assert!(matches!(res.model.eval(0.0, 0.0, alpha), Err(FramesError::DressingPole(_))));
    }

    #[test]
    fn diagonal_seed_fixes_vacuum() {
        let grid = Grid::periodic(64, 10.0, -5.0).unwrap();
        let res = bt_nls(vacuum(Flavor::Su2), &Sampling::uniform(grid, 0.0, 0.1, 3, vec![]), c(0.2, 1.0), [c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(res.potentials.iter().all(|u| u.max_abs() < 1e-15));
        let res = bt_from_trajectory(&[PotentialField::zero(Flavor::Su2, grid)], 0.0, 0.0, 2, Seed::Su2 { alpha: c(0.0, 1.0), v: [c(1.0, 0.0), c(0.0, 0.0)] }, &[]).unwrap();
        assert!(res.potentials[0].max_abs() < 1e-12);
    }

    #[test]
    fn trajectory_seed_matches_closed_form() {
        let grid = Grid::periodic(512, 16.0, -8.0).unwrap();
        let base = Sampling::new(grid, vec![0.0], vec![]);
        let alpha = c(0.3, 1.5);
        let first = bt_nls(vacuum(Flavor::Su2), &base, alpha, [c(1.0, 0.0), c(0.5, 0.5)]).unwrap();
        let seed = Seed::Su2 { alpha: c(-0.2, 0.6), v: [c(1.0, 0.0), c(1.0, 0.0)] };
        let numeric = bt_from_trajectory(&first.potentials, 0.0, 0.0, 2, seed, &[]).unwrap();
        // The numerical frame is normalized at the left end, the analytic one at x = 0.
        let anchor = first.model.eval(grid.x0, 0.0, c(-0.2, 0.6)).unwrap().0;
        let v = anchor.mul_vec([c(1.0, 0.0), c(1.0, 0.0)]);
        let exact = dress(first.model.clone(), Seed::Su2 { alpha: c(-0.2, 0.6), v }, &base).unwrap();
        let d = numeric.potentials[0].distance(&exact.potentials[0]);
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn riccati_matches_linear_system() {
        let grid = Grid::periodic(512, 16.0, -8.0).unwrap();
        let dt = 0.01;
        let alpha = c(0.1, 0.5);
        let first = bt_nls(vacuum(Flavor::Su2), &Sampling::uniform(grid, 0.0, dt, 6, vec![]), c(0.4, 1.5), [c(1.0, 0.0), c(1.0, 0.5)]).unwrap();
        for (k, traj) in [vec![PotentialField::zero(Flavor::Su2, grid)], first.potentials.clone()].into_iter().enumerate() {
            let model: Arc<dyn FrameModel> = if k == 0 { vacuum(Flavor::Su2) } else { first.model.clone() };
            let p0 = c(0.1, -0.05);
            let v = model.eval(grid.x0, 0.0, alpha).unwrap().0.mul_vec([p0, c(1.0, 0.0)]);
            let ric = bt_riccati(&traj, 0.0, dt, alpha, p0, 16).unwrap();
            let times: Vec<f64> = (0..traj.len()).map(|m| m as f64 * dt).collect();
            let lin = dress(model, Seed::Su2 { alpha, v }, &Sampling::new(grid, times, vec![])).unwrap();
            for (a, b) in ric.potentials.iter().zip(&lin.potentials) {
                let d = a.distance(b);
                assert!(d < 1e-8, "{k}: {d}");
            }
        }
        let huge = bt_riccati(&[PotentialField::zero(Flavor::Su2, Grid::periodic(64, 40.0, -20.0).unwrap())], 0.0, 0.0, alpha, c(1e-9, 0.0), 4);
        assert!(matches!(huge, Err(BacklundError::RiccatiBlowup { .. })));
    }

    #[test]
    fn defocusing_transform_is_singular_where_predicted() {
        let grid = Grid::periodic(256, 8.0, -4.0).unwrap();
        let res = bt_su11(vacuum(Flavor::Su11), &Sampling::new(grid, vec![0.0], vec![]), c(0.0, 1.0), [c(2.0, 0.0), c(1.0, 0.0)]).unwrap();
        let xs = -(2.0f64).ln() / 2.0;
        assert_eq!(res.singular_locus.len(), 1);
        let (_, i) = res.singular_locus[0];
        assert!(grid.x(i) <= xs && xs < grid.x(i + 1));
        // away from the singularity: printed formula and flow residual on an open grid
        let open = Grid::open(400, 6.0, 0.5).unwrap();
        let alpha = c(0.3, 1.0);
        let dt = 1e-3;
        let res = bt_su11(vacuum(Flavor::Su11), &five(open, dt, vec![c(0.5, 0.0), c(0.0, 0.7), c(0.0, -0.7)]), alpha, [c(2.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(res.singular_locus.is_empty());
        let e = VacuumFrame::new(Flavor::Su11, 2);
        for i in (0..open.n).step_by(37) {
            let y = e.eval(open.x(i), 0.0, alpha).unwrap().0.inv().mul_vec([c(2.0, 0.0), c(1.0, 0.0)]);
            let q = -c(0.0, 2.0) * (alpha - alpha.conj()) * y[0] * y[1].conj() / (y[0].norm_sqr() - y[1].norm_sqr());
            assert!((res.potentials[2].q[i] - q).norm() < 1e-12 * (1.0 + q.norm()));
        }
        let r = flow_residual(&res.potentials, dt, 2, |i| i > 10 && i < open.n - 10);
        assert!(r < 1e-5, "{r}");
        assert!(res.frame.reality < 1e-8);
    }

    #[test]
    fn sl2r_soliton_closed_form() {
        let grid = Grid::periodic(512, 24.0, -12.0).unwrap();
        let dt = 1e-3;
        let res = bt_sl2r(vacuum(Flavor::Sl2r), &five(grid, dt, vec![c(0.5, 0.0), c(0.0, 0.3), c(0.0, -0.3)]), 1.0, -1.0, [1.0, 1.0], [1.0, -1.0]).unwrap();
        for (k, u) in res.potentials.iter().enumerate() {
            let t = (k as f64 - 2.0) * dt;
            for i in 0..grid.n {
                let s = 1.0 / (2.0 * grid.x(i)).cosh();
                assert!((u.q[i] - c(2.0 * (-2.0 * t).exp() * s, 0.0)).norm() < 1e-12);
                assert!((u.r[i] - c(-2.0 * (2.0 * t).exp() * s, 0.0)).norm() < 1e-12);
            }
        }
        // printed formula with det Y
        let base = VacuumFrame::new(Flavor::Sl2r, 2);
        for &x in &[-1.3, 0.2, 2.5] {
            let y = base.eval(x, 0.1, c(1.0, 0.0)).unwrap().0.inv().mul_vec([c(1.0, 0.0), c(1.0, 0.0)]);
            let w = base.eval(x, 0.1, c(-1.0, 0.0)).unwrap().0.inv().mul_vec([c(1.0, 0.0), c(-1.0, 0.0)]);
            let det = y[0] * w[1] - y[1] * w[0];
            let m = DressedFrame::new(vacuum(Flavor::Sl2r), Seed::Sl2r { alpha1: 1.0, alpha2: -1.0, v1: [1.0, 1.0], v2: [1.0, -1.0] }).unwrap();
            let (q, r) = m.potential(x, 0.1).unwrap();
            assert!((q - (-(y[0] * w[0]) * 4.0 / det)).norm() < 1e-12);
            assert!((r - (-(y[1] * w[1]) * 4.0 / det)).norm() < 1e-12);
            // det Y is even in x at t = 0
            let yn = base.eval(-x, 0.0, c(1.0, 0.0)).unwrap().0.inv().mul_vec([c(1.0, 0.0), c(1.0, 0.0)]);
            let wn = base.eval(-x, 0.0, c(-1.0, 0.0)).unwrap().0.inv().mul_vec([c(1.0, 0.0), c(-1.0, 0.0)]);
            let yp = base.eval(x, 0.0, c(1.0, 0.0)).unwrap().0.inv().mul_vec([c(1.0, 0.0), c(1.0, 0.0)]);
            let wp = base.eval(x, 0.0, c(-1.0, 0.0)).unwrap().0.inv().mul_vec([c(1.0, 0.0), c(-1.0, 0.0)]);
            assert!(((yn[0] * wn[1] - yn[1] * wn[0]) - (yp[0] * wp[1] - yp[1] * wp[0])).norm() < 1e-12);
        }
        assert!(flow_residual(&res.potentials, dt, 2, |_| true) < 1e-5);
        assert!(res.frame.reality < 1e-8);
        let curve = bt_curve(vacuum(Flavor::Sl2r), Seed::Sl2r { alpha1: 1.0, alpha2: -1.0, v1: [1.0, 1.0], v2: [1.0, -1.0] }, &Sampling::new(grid, vec![0.0], vec![])).unwrap();
        assert!(curve.formula_gap < 1e-9, "{}", curve.formula_gap);
        assert!(curve.sym_gap < 1e-9, "{}", curve.sym_gap);
        assert!(curve.formula[0].speed_deviation() < 1e-6);
    }

    #[test]
    fn kdv_soliton_and_curve() {
        let grid = Grid::periodic(512, 32.0, -16.0).unwrap();
        let dt = 1e-3;
        let lams = vec![c(0.5, 0.0), c(-0.5, 0.0), c(0.0, 0.3), c(0.0, -0.3)];
        let res = bt_kdv(vacuum(Flavor::Kdv), &five(grid, dt, lams), 1.0, 0.0).unwrap();
        for (k, u) in res.potentials.iter().enumerate() {
            let t = (k as f64 - 2.0) * dt;
            for i in 0..grid.n {
                let s = 1.0 / (grid.x(i) + t).cosh();
                assert!((u.q[i] - c(-2.0 * s * s, 0.0)).norm() < 1e-12);
            }
        }
        let r = flow_residual(&res.potentials, dt, 3, |_| true);
        assert!(r < 1e-4, "{r}");
        assert!(res.frame.reality < 1e-8, "{}", res.frame.reality);
        let fixed = bt_kdv(vacuum(Flavor::Kdv), &Sampling::new(grid, vec![0.0], vec![]), 1.0, 1.0).unwrap();
        assert!(fixed.potentials[0].q.iter().all(|q| q.norm() < 1e-12));
        let cb = bt_curve(vacuum(Flavor::Kdv), Seed::Kdv { c: 1.0, xi: 0.0 }, &Sampling::new(grid, vec![0.0, 0.1], vec![])).unwrap();
        assert!(cb.formula_gap < 1e-9 && cb.sym_gap < 1e-9, "{} {}", cb.formula_gap, cb.sym_gap);
        for (curve, frame) in cb.sym.curves.iter().zip(&cb.sym.frames) {
            assert!(curve.speed_deviation() < 1e-6);
            assert!(frame.k2.iter().all(|k| (k - 2.0).abs() < 1e-4));
        }
    }

    #[test]
    fn vfe_curve_transform_three_ways() {
        let grid = Grid::periodic(512, 24.0, -12.0).unwrap();
        let alpha = c(0.0, 1.0);
        let cb = bt_curve_vfe(vacuum(Flavor::Su2), &Sampling::new(grid, vec![0.0, 0.2], vec![]), alpha, [c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(cb.formula_gap < 1e-9, "{}", cb.formula_gap);
        assert!(cb.sym_gap < 1e-9, "{}", cb.sym_gap);
        let curve = &cb.formula[1];
        assert!(curve.speed_deviation() < 1e-6);
        assert!(frames::aligned_rms(&cb.sym.curves[1].points, &curve.points) < 1e-9);
        // Hasimoto of the curve recovers the soliton up to a global phase
        let q = hasimoto(curve).unwrap();
        let model = DressedFrame::new(vacuum(Flavor::Su2), Seed::Su2 { alpha, v: [c(1.0, 0.0), c(1.0, 0.0)] }).unwrap();
        let exact: Vec<C64> = (0..grid.n).map(|i| model.potential(grid.x(i), 0.2).unwrap().0).collect();
        let ph: C64 = (0..grid.n).map(|i| q.q[i] * exact[i].conj()).sum();
        let ph = ph / ph.norm();
        let err = (0..grid.n).fold(0.0f64, |a, i| a.max((q.q[i] - exact[i] * ph).norm()));
        assert!(err < 1e-4, "{err}");
        // symmetric seed and imaginary pole: the t = 0 curve is symmetric about x = 0
        let c0 = &cb.formula[0];
        let mid = grid.n / 2;
        for d in 1..50 {
            let (a, b) = (c0.points[mid + d], c0.points[mid - d]);
            assert!((a[0] + b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9 && (a[2] + b[2]).abs() < 1e-9, "{a:?} {b:?}");
        }
        // Riccati form of the update
        let base = VacuumFrame::new(Flavor::Su2, 2);
        let m = DressedFrame::new(Arc::new(base), Seed::Su2 { alpha, v: [c(1.0, 0.0), c(1.0, 0.0)] }).unwrap();
        let pw = m.pointwise(0.7, 0.2).unwrap();
        let p = pw.y[0] / pw.y[1];
        let a = curve_update_coefficients(&pw, &Seed::Su2 { alpha, v: [c(1.0, 0.0), c(1.0, 0.0)] });
        let b = vfe_riccati_update(alpha, p);
        assert!((0..3).all(|k| (a[k] - b[k]).abs() < 1e-14));
    }

    #[test]
    fn su11_curve_update_matches_sym() {
        let open = Grid::open(300, 4.0, 0.5).unwrap();
        let seed = Seed::Su11 { alpha: c(0.3, 1.0), v: [c(2.0, 0.0), c(1.0, 0.0)] };
        let cb = bt_curve(vacuum(Flavor::Su11), seed, &Sampling::new(open, vec![0.0, 0.1], vec![])).unwrap();
        assert!(cb.formula_gap < 1e-9 && cb.sym_gap < 1e-9, "{} {}", cb.formula_gap, cb.sym_gap);
        assert!(cb.formula[1].speed_deviation() < 1e-6);
    }

    #[test]
    fn permutability_of_simple_elements() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (a1, a2) = (c(0.4, 1.0), c(-0.3, 0.6));
        let pi1 = hermitian_projection([c(1.0, 0.3), c(0.2, -0.5)]);
        let pi2 = hermitian_projection([c(-0.4, 0.1), c(1.0, 0.0)]);
        let (t1, t2) = permute(a1, &pi1, a2, &pi2).unwrap();
        let lams: Vec<C64> = (0..8).map(|_| c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
        assert!(permutability_residual(a1, &pi1, &t1, a2, &pi2, &t2, &lams) < 1e-12);
        let shared = permute(a1, &pi1, a2, &pi1).unwrap();
        assert!(permutability_residual(a1, &pi1, &shared.0, a2, &pi1, &shared.1, &lams) < 1e-12);
        let (t1, t2) = permute(a1, &pi1, a2, &Mat2C::identity()).unwrap();
        assert!((t1 - pi1).max_abs() < 1e-14 && (t2 - Mat2C::identity()).max_abs() < 1e-14);
        assert_eq!(permute(a1, &pi1, a1.conj(), &pi2), Err(BacklundError::CoincidentPoles));
        for _ in 0..20 {
            let p1 = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let p2 = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let a = permuted_p(a1, p1, a2, p2);
            let b = permuted_p_projection(a1, p1, a2, p2);
            assert!((a - b).norm() < 1e-10 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn carried_seeds_commute() {
        let su2 = [Seed::Su2 { alpha: c(0.2, 1.0), v: [c(1.0, 0.0), c(1.0, 0.0)] }, Seed::Su2 { alpha: c(-0.3, 0.6), v: [c(1.0, 0.0), c(-0.5, 0.5)] }];
        let su11 = [Seed::Su11 { alpha: c(0.3, 1.0), v: [c(2.0, 0.0), c(1.0, 0.0)] }, Seed::Su11 { alpha: c(-0.2, 0.7), v: [c(3.0, 0.0), c(0.5, 1.0)] }];
        let sl2r = [
            Seed::Sl2r { alpha1: 1.0, alpha2: -1.0, v1: [1.0, 1.0], v2: [1.0, -1.0] },
            Seed::Sl2r { alpha1: 0.5, alpha2: -0.4, v1: [1.0, 0.3], v2: [0.2, 1.0] },
        ];
        let f1 = SimpleElement::su2(c(0.2, 1.0), [c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let Seed::Su2 { v, .. } = carry_seeds(&su2).unwrap()[1] else { unreachable!() };
        let expect = f1.eval(c(-0.3, 0.6)).mul_vec([c(1.0, 0.0), c(-0.5, 0.5)]);
        assert!((v[0] - expect[0]).norm() + (v[1] - expect[1]).norm() < 1e-15);
        let cases: [(Flavor, &[Seed; 2], Grid); 3] = [
            (Flavor::Su2, &su2, Grid::periodic(256, 24.0, -12.0).unwrap()),
            (Flavor::Su11, &su11, Grid::open(200, 2.0, 0.5).unwrap()),
            (Flavor::Sl2r, &sl2r, Grid::open(200, 2.0, -1.0).unwrap()),
        ];
        for (flavor, seeds, grid) in cases {
            let sampling = Sampling::new(grid, vec![0.0, 0.1], vec![]);
            let forward = soliton_factory(flavor, &carry_seeds(seeds).unwrap(), &sampling).unwrap();
            let backward = soliton_factory(flavor, &carry_seeds(&[seeds[1], seeds[0]]).unwrap(), &sampling).unwrap();
            for (a, b) in forward.potentials.iter().zip(&backward.potentials) {
                assert!(a.distance(b) < 1e-9 * (1.0 + a.max_abs()), "{flavor:?}: {}", a.distance(b));
            }
        }
    }

    #[test]
    fn two_soliton_routes_agree() {
        let grid = Grid::periodic(256, 24.0, -12.0).unwrap();
        let sampling = Sampling::new(grid, vec![0.0, 0.3], vec![c(0.5, 0.0), c(0.0, 0.4), c(0.0, -0.4)]);
        let (a1, a2) = (c(0.2, 1.0), c(-0.3, 0.6));
        let (v1, v2) = ([c(1.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(-0.5, 0.5)]);
        let perm = vfe_permutability(vacuum(Flavor::Su2), &sampling, (a1, v1), (a2, v2)).unwrap();
        assert!(perm.q_gap < 1e-8, "{}", perm.q_gap);
        assert!(perm.gamma_gap < 1e-6, "{}", perm.gamma_gap);
        // sequential route: the second seed is carried through the first left factor
        let f1 = SimpleElement::su2(a1, v1).unwrap();
        let v2s = f1.eval(a2).mul_vec(v2);
        let fam = soliton_factory(Flavor::Su2, &[Seed::Su2 { alpha: a1, v: v1 }, Seed::Su2 { alpha: a2, v: v2s }], &sampling).unwrap();
        for (k, u) in fam.potentials.iter().enumerate() {
            for i in 0..grid.n {
                assert!((u.q[i] - perm.q12[0][k][i]).norm() < 1e-8);
            }
        }
        assert!(fam.frame.reality < 1e-8);
        assert!(fam.curves.curves.iter().all(|c| c.speed_deviation() < 1e-4));
        let empty = soliton_factory(Flavor::Su2, &[], &sampling).unwrap();
        assert!(empty.potentials.iter().all(|u| u.max_abs() == 0.0));
        assert!(matches!(empty.curves.curves[0].topology, frames::Topology::Quasiperiodic { .. }));
        assert_eq!(empty.curves.curves[0].points[5][1], 0.0);
        let one = soliton_factory(Flavor::Su2, &[Seed::Su2 { alpha: c(0.0, 1.0), v: [c(1.0, 0.0), c(1.0, 0.0)] }], &sampling).unwrap();
        assert!(one.potentials[0].q.iter().enumerate().all(|(i, q)| (q - c(-2.0 / (2.0 * grid.x(i)).cosh(), 0.0)).norm() < 1e-8));
        assert!(grid.boundary == Boundary::Periodic);
    }
}
