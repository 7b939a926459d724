//! 2×2 complex matrix algebra and the three real forms of `sl(2, C)` used by
//! the hierarchies: `su(2)`, `su(1,1)` and `sl(2, R)`.
//!
//! Every flavor fixes an ordered basis of its real Lie algebra together with
//! an invariant inner product:
//!
//! | flavor      | ordered basis        | `<X,Y>`        | metric on coordinates |
//! |-------------|----------------------|----------------|-----------------------|
//! | `Su2`       | `(a, -c, b)`         | `-tr(XY)/2`    | Euclidean             |
//! | `Su11`      | `(a, b, c)`          | `tr(XY)/2`     | `-x² + y² + z²`       |
//! | `Sl2r/Kdv`  | `(a, e12, e21)`      | `tr(XY)/2`     | `x² + yz`             |
//!
//! In the `su(2)` coordinates brackets become cross products,
//! `[X, Y] ↔ 2 (x × y)`.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Real scalar the algebra is generic over.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Default + Send + Sync + 'static {}

impl<T> Real for T where T: Float + FloatConst + FromPrimitive + Debug + Default + Send + Sync + 'static {}

#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Default tolerance of the algebra and group membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("element is not in the real Lie algebra (residual {residual:e})")]
    ResidualTooLarge { residual: f64 },
    #[error("normal basis is degenerate")]
    DegenerateBasis,
    #[error("element is not in the group (residual {residual:e})")]
    NotInGroup { residual: f64 },
}

/// Complex 2×2 matrix, entries stored row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2<T> {
    pub m: [Complex<T>; 4],
}

impl<T: Real> Mat2<T> {
    pub fn new(m11: Complex<T>, m12: Complex<T>, m21: Complex<T>, m22: Complex<T>) -> Self {
        Mat2 { m: [m11, m12, m21, m22] }
    }

    pub fn from_real(m11: T, m12: T, m21: T, m22: T) -> Self {
        let z = T::zero();
        Mat2::new(Complex::new(m11, z), Complex::new(m12, z), Complex::new(m21, z), Complex::new(m22, z))
    }

    pub fn zero() -> Self {
        let z = Complex::new(T::zero(), T::zero());
        Mat2 { m: [z; 4] }
    }

    pub fn identity() -> Self {
        Self::scalar(Complex::new(T::one(), T::zero()))
    }

    pub fn scalar(s: Complex<T>) -> Self {
        let z = Complex::new(T::zero(), T::zero());
        Mat2::new(s, z, z, s)
    }

    pub fn diag(d1: Complex<T>, d2: Complex<T>) -> Self {
        let z = Complex::new(T::zero(), T::zero());
        Mat2::new(d1, z, z, d2)
    }

    /// Off-diagonal matrix `q e12 + r e21`.
    pub fn offdiag(q: Complex<T>, r: Complex<T>) -> Self {
        let z = Complex::new(T::zero(), T::zero());
        Mat2::new(z, q, r, z)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.m[2 * i + j]
    }

    pub fn trace(&self) -> Complex<T> {
        self.m[0] + self.m[3]
    }

    pub fn det(&self) -> Complex<T> {
        self.m[0] * self.m[3] - self.m[1] * self.m[2]
    }

    /// Inverse via the adjugate. The caller guarantees `det != 0`.
    pub fn inv(&self) -> Self {
        let d = self.det();
        Mat2::new(self.m[3] / d, -self.m[1] / d, -self.m[2] / d, self.m[0] / d)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Mat2::new(self.m[0].conj(), self.m[2].conj(), self.m[1].conj(), self.m[3].conj())
    }

    pub fn conj(&self) -> Self {
        Mat2::new(self.m[0].conj(), self.m[1].conj(), self.m[2].conj(), self.m[3].conj())
    }

    pub fn transpose(&self) -> Self {
        Mat2::new(self.m[0], self.m[2], self.m[1], self.m[3])
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        Mat2 { m: self.m.map(|e| e * s) }
    }

    pub fn scale_re(&self, s: T) -> Self {
        Mat2 { m: self.m.map(|e| e * s) }
    }

    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }

    /// Traceless part `X - tr(X)/2 I`.
    pub fn traceless(&self) -> Self {
        let h = self.trace() * lit::<T>(0.5);
        *self - Mat2::scalar(h)
    }

    pub fn max_abs(&self) -> T {
        self.m.iter().fold(T::zero(), |acc, e| acc.max(e.norm()))
    }

    pub fn frobenius(&self) -> T {
        self.m.iter().fold(T::zero(), |acc, e| acc + e.norm_sqr()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|e| e.re.is_finite() && e.im.is_finite())
    }

    pub fn mul_vec(&self, v: [Complex<T>; 2]) -> [Complex<T>; 2] {
        [self.m[0] * v[0] + self.m[1] * v[1], self.m[2] * v[0] + self.m[3] * v[1]]
    }

    /// Matrix exponential, closed form `e^{tr/2}(cosh√z I + sinh√z/√z Y)` with
    /// `Y` the traceless part and `z = -det Y`.
    pub fn exp(&self) -> Self {
        let mu = self.trace() * lit::<T>(0.5);
        let y = self.traceless();
        exp_traceless(&y, -y.det()).scale(mu.exp())
    }

    /// `exp(X)` together with its directional derivative along `D`, for
    /// traceless `X` and `D`.
    pub fn exp_frechet(&self, d: &Self) -> (Self, Self) {
        let z = -self.det();
        let dz = (*self * *d).trace();
        let (c, s) = cosh_sinhc(z);
        let ds = sinhc_derivative(z, c, s);
        let e = exp_traceless(self, z);
        let de = Mat2::scalar(s * dz * lit::<T>(0.5)) + self.scale(ds * dz) + d.scale(s);
        (e, de)
    }
}

/// `exp(Y)` for traceless `Y` with `z = -det Y`. Away from `z = 0` the
/// spectral projectors `(I ± Y/√z)/2` are used, which keeps the small
/// entries that `cosh √z - sinh √z` would cancel.
fn exp_traceless<T: Real>(y: &Mat2<T>, z: Complex<T>) -> Mat2<T> {
    if z.norm() <= T::one() {
        let (c, s) = cosh_sinhc(z);
        return Mat2::scalar(c) + y.scale(s);
    }
    let w = z.sqrt();
    let half = lit::<T>(0.5);
    let yw = y.scale(w.inv());
    let id = Mat2::identity();
    (id + yw).scale(w.exp() * half) + (id - yw).scale((-w).exp() * half)
}

/// `(cosh √z, sinh √z / √z)`, both entire in `z`.
fn cosh_sinhc<T: Real>(z: Complex<T>) -> (Complex<T>, Complex<T>) {
    if z.norm() < lit(1e-3) {
        let mut c = Complex::new(T::one(), T::zero());
        let mut s = c;
        let mut tc = c;
        let mut ts = c;
        for n in 1..10 {
            let nn = lit::<T>(n as f64);
            tc = tc * z / ((lit::<T>(2.0) * nn - T::one()) * (lit::<T>(2.0) * nn));
            ts = ts * z / ((lit::<T>(2.0) * nn) * (lit::<T>(2.0) * nn + T::one()));
            c = c + tc;
            s = s + ts;
        }
        (c, s)
    } else {
        let w = z.sqrt();
        (w.cosh(), w.sinh() / w)
    }
}

/// Derivative of `sinh √z / √z` with respect to `z`.
fn sinhc_derivative<T: Real>(z: Complex<T>, c: Complex<T>, s: Complex<T>) -> Complex<T> {
    if z.norm() < lit(1e-2) {
        // sum_{n>=1} n z^{n-1} / (2n+1)!
        let mut acc = Complex::new(T::zero(), T::zero());
        let mut zp = Complex::new(T::one(), T::zero());
        let mut fact = lit::<T>(6.0);
        for n in 1..10 {
            acc = acc + zp * (lit::<T>(n as f64) / fact);
            zp = zp * z;
            fact = fact * lit::<T>((2 * n + 2) as f64) * lit::<T>((2 * n + 3) as f64);
        }
        acc
    } else {
        (c - s) / (z * lit::<T>(2.0))
    }
}

impl<T: Real> Add for Mat2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Mat2 { m: [self.m[0] + o.m[0], self.m[1] + o.m[1], self.m[2] + o.m[2], self.m[3] + o.m[3]] }
    }
}

impl<T: Real> Sub for Mat2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Mat2 { m: [self.m[0] - o.m[0], self.m[1] - o.m[1], self.m[2] - o.m[2], self.m[3] - o.m[3]] }
    }
}

impl<T: Real> AddAssign for Mat2<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> SubAssign for Mat2<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Neg for Mat2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Mat2 { m: self.m.map(|e| -e) }
    }
}

impl<T: Real> Mul for Mat2<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let a = &self.m;
        let b = &o.m;
        Mat2 {
            m: [
                a[0] * b[0] + a[1] * b[2],
                a[0] * b[1] + a[1] * b[3],
                a[2] * b[0] + a[3] * b[2],
                a[2] * b[1] + a[3] * b[3],
            ],
        }
    }
}

impl<T: Real> Mul<Complex<T>> for Mat2<T> {
    type Output = Self;
    fn mul(self, s: Complex<T>) -> Self {
        self.scale(s)
    }
}

/// Reality flavor of the hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flavor {
    #[serde(rename = "SU2")]
    Su2,
    #[serde(rename = "SU11")]
    Su11,
    #[serde(rename = "SL2R")]
    Sl2r,
    #[serde(rename = "KDV")]
    Kdv,
}

impl Flavor {
    pub const ALL: [Flavor; 4] = [Flavor::Su2, Flavor::Su11, Flavor::Sl2r, Flavor::Kdv];

    /// The eigenvalue `s` of `a = diag(s, -s)`.
    pub fn s<T: Real>(self) -> Complex<T> {
        match self {
            Flavor::Su2 | Flavor::Su11 => Complex::new(T::zero(), T::one()),
            Flavor::Sl2r | Flavor::Kdv => Complex::new(T::one(), T::zero()),
        }
    }

    pub fn a<T: Real>(self) -> Mat2<T> {
        let s = self.s::<T>();
        Mat2::diag(s, -s)
    }

    pub fn metric(self) -> Metric {
        match self {
            Flavor::Su2 => Metric::Euclidean,
            Flavor::Su11 => Metric::Minkowski,
            Flavor::Sl2r | Flavor::Kdv => Metric::Null,
        }
    }

    /// Sign of the trace form: `<X,Y> = sign · tr(XY) / 2`.
    pub fn form_sign<T: Real>(self) -> T {
        match self {
            Flavor::Su2 => -T::one(),
            _ => T::one(),
        }
    }

    pub fn basis<T: Real>(self) -> BasisTriple<T> {
        let o = T::one();
        let z = T::zero();
        let i = Complex::new(z, o);
        let one = Complex::new(o, z);
        let zero = Complex::new(z, z);
        let a = self.a::<T>();
        match self {
            Flavor::Su2 => {
                let b = Mat2::from_real(z, o, -o, z);
                let c = Mat2::new(zero, i, i, zero);
                BasisTriple { a, b, c, ordered: [a, -c, b], metric: Metric::Euclidean }
            }
            Flavor::Su11 => {
                let b = Mat2::from_real(z, o, o, z);
                let c = Mat2::new(zero, i, -i, zero);
                BasisTriple { a, b, c, ordered: [a, b, c], metric: Metric::Minkowski }
            }
            Flavor::Sl2r | Flavor::Kdv => {
                let b = Mat2::new(zero, one, zero, zero);
                let c = Mat2::new(zero, zero, one, zero);
                BasisTriple { a, b, c, ordered: [a, b, c], metric: Metric::Null }
            }
        }
    }
}

/// Inner product on `R³` carried by a coordinate vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    /// `x² + y² + z²`
    Euclidean,
    /// `-x² + y² + z²`
    Minkowski,
    /// `x² + yz`
    Null,
}

impl Metric {
    /// Gram matrix `D` with `<u, v> = uᵗ D v`.
    pub fn gram<T: Real>(self) -> [[T; 3]; 3] {
        let o = T::one();
        let z = T::zero();
        let h = lit::<T>(0.5);
        match self {
            Metric::Euclidean => [[o, z, z], [z, o, z], [z, z, o]],
            Metric::Minkowski => [[-o, z, z], [z, o, z], [z, z, o]],
            Metric::Null => [[o, z, z], [z, z, h], [z, h, z]],
        }
    }

    pub fn dot<T: Real>(self, u: &[T; 3], v: &[T; 3]) -> T {
        match self {
            Metric::Euclidean => u[0] * v[0] + u[1] * v[1] + u[2] * v[2],
            Metric::Minkowski => -u[0] * v[0] + u[1] * v[1] + u[2] * v[2],
            Metric::Null => u[0] * v[0] + lit::<T>(0.5) * (u[1] * v[2] + u[2] * v[1]),
        }
    }
}

/// Coordinates in a flavor basis, tagged with the metric they live in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub metric: Metric,
}

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T, metric: Metric) -> Self {
        Vec3 { x, y, z, metric }
    }

    pub fn from_array(v: [T; 3], metric: Metric) -> Self {
        Vec3 { x: v[0], y: v[1], z: v[2], metric }
    }

    pub fn to_array(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, o: &Self) -> T {
        self.metric.dot(&self.to_array(), &o.to_array())
    }

    pub fn norm2(&self) -> T {
        self.dot(self)
    }

    pub fn scale(&self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s, self.metric)
    }

    pub fn add(&self, o: &Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z, self.metric)
    }

    pub fn sub(&self, o: &Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z, self.metric)
    }

    /// Euclidean cross product of the coordinate triples.
    pub fn cross(&self, o: &Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
            self.metric,
        )
    }
}

/// Generators `a, b, c` of a flavor together with its ordered basis.
#[derive(Clone, Copy, Debug)]
pub struct BasisTriple<T> {
    pub a: Mat2<T>,
    pub b: Mat2<T>,
    pub c: Mat2<T>,
    /// Ordered basis used for coordinates: `(a, -c, b)` for `su(2)`,
    /// `(a, b, c)` otherwise.
    pub ordered: [Mat2<T>; 3],
    pub metric: Metric,
}

/// Invariant inner product of the flavor, `±tr(XY)/2`.
pub fn inner<T: Real>(x: &Mat2<T>, y: &Mat2<T>, flavor: Flavor) -> T {
    ((*x * *y).trace() * lit::<T>(0.5)).re * flavor.form_sign::<T>()
}

/// Distance of `X` from the flavor's real Lie algebra.
pub fn algebra_residual<T: Real>(x: &Mat2<T>, flavor: Flavor) -> T {
    let tr = x.trace().norm();
    let m = &x.m;
    let dev = match flavor {
        Flavor::Su2 => (m[0] + m[0].conj()).norm().max((m[3] + m[3].conj()).norm()).max((m[1] + m[2].conj()).norm()),
        Flavor::Su11 => (m[0] + m[0].conj()).norm().max((m[3] + m[3].conj()).norm()).max((m[1] - m[2].conj()).norm()),
        Flavor::Sl2r | Flavor::Kdv => m.iter().fold(T::zero(), |acc, e| acc.max(e.im.abs())),
    };
    tr.max(dev)
}

/// Coordinates of `X` in the flavor's ordered basis.
pub fn lie_to_vec<T: Real>(x: &Mat2<T>, flavor: Flavor) -> Result<Vec3<T>, LieError> {
    lie_to_vec_tol(x, flavor, lit(MEMBERSHIP_TOL))
}

/// `lie_to_vec` with an explicit membership tolerance (relative to `1 + |X|`).
pub fn lie_to_vec_tol<T: Real>(x: &Mat2<T>, flavor: Flavor, tol: T) -> Result<Vec3<T>, LieError> {
    let res = algebra_residual(x, flavor);
    if !(res <= tol * (T::one() + x.max_abs())) {
        return Err(LieError::ResidualTooLarge { residual: res.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(lie_to_vec_unchecked(x, flavor))
}

/// Coordinates without the membership test (projects onto the real form).
pub fn lie_to_vec_unchecked<T: Real>(x: &Mat2<T>, flavor: Flavor) -> Vec3<T> {
    let h = lit::<T>(0.5);
    let m = &x.m;
    match flavor {
        Flavor::Su2 => {
            // X = x a + y (-c) + z b = [[ix, z - iy], [-z - iy, -ix]]
            let xx = (m[0].im - m[3].im) * h;
            let y = -(m[1].im + m[2].im) * h;
            let z = (m[1].re - m[2].re) * h;
            Vec3::new(xx, y, z, Metric::Euclidean)
        }
        Flavor::Su11 => {
            // X = x a + y b + z c = [[ix, y + iz], [y - iz, -ix]]
            let xx = (m[0].im - m[3].im) * h;
            let y = (m[1].re + m[2].re) * h;
            let z = (m[1].im - m[2].im) * h;
            Vec3::new(xx, y, z, Metric::Minkowski)
        }
        Flavor::Sl2r | Flavor::Kdv => Vec3::new((m[0].re - m[3].re) * h, m[1].re, m[2].re, Metric::Null),
    }
}

/// Inverse of [`lie_to_vec`].
pub fn vec_to_lie<T: Real>(v: &Vec3<T>, flavor: Flavor) -> Mat2<T> {
    let basis = flavor.basis::<T>();
    let [e1, e2, e3] = basis.ordered;
    e1.scale_re(v.x) + e2.scale_re(v.y) + e3.scale_re(v.z)
}

/// Hodge star on the normal plane spanned by `(e1, e2)`.
///
/// Euclidean and Minkowski normal planes are space-like and the star is the
/// rotation `e1 ↦ e2, e2 ↦ -e1`. For the null metric the normal plane is
/// Lorentzian and `(e1, e2)` is a null basis with `*e1 = e1, *e2 = -e2`.
pub fn hodge_star_normal<T: Real>(e1: &Vec3<T>, e2: &Vec3<T>, v: &Vec3<T>) -> Result<Vec3<T>, LieError> {
    let g11 = e1.dot(e1);
    let g12 = e1.dot(e2);
    let g22 = e2.dot(e2);
    let det = g11 * g22 - g12 * g12;
    let scale = (g11.abs() + g22.abs() + g12.abs()).max(T::min_positive_value());
    if det.abs() <= lit::<T>(1e-12) * scale * scale {
        return Err(LieError::DegenerateBasis);
    }
    let r1 = v.dot(e1);
    let r2 = v.dot(e2);
    let alpha = (g22 * r1 - g12 * r2) / det;
    let beta = (g11 * r2 - g12 * r1) / det;
    Ok(match e1.metric {
        Metric::Euclidean | Metric::Minkowski => e2.scale(alpha).sub(&e1.scale(beta)),
        Metric::Null => e1.scale(alpha).sub(&e2.scale(beta)),
    })
}

/// Deviation of `g` from the flavor's group (`det = 1` plus the reality
/// condition at a real spectral parameter).
pub fn group_residual<T: Real>(g: &Mat2<T>, flavor: Flavor) -> T {
    let one = Complex::new(T::one(), T::zero());
    let det = (g.det() - one).norm();
    let real = match flavor {
        Flavor::Su2 => (g.adjoint() * *g - Mat2::identity()).max_abs(),
        Flavor::Su11 => {
            let j = j_matrix::<T>();
            (g.adjoint() * j * *g - j).max_abs()
        }
        Flavor::Sl2r | Flavor::Kdv => g.m.iter().fold(T::zero(), |acc, e| acc.max(e.im.abs())),
    };
    det.max(real)
}

/// `J = diag(1, -1)`.
pub fn j_matrix<T: Real>() -> Mat2<T> {
    Mat2::from_real(T::one(), T::zero(), T::zero(), -T::one())
}

/// Matrix of `Ad(g)` in the flavor's ordered basis; column `k` holds the
/// coordinates of `g δ_k g⁻¹`.
pub fn adjoint_frame<T: Real>(g: &Mat2<T>, flavor: Flavor) -> Result<[[T; 3]; 3], LieError> {
    let res = group_residual(g, flavor);
    if !(res <= lit::<T>(MEMBERSHIP_TOL) * (T::one() + g.max_abs() * g.max_abs())) {
        return Err(LieError::NotInGroup { residual: res.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(adjoint_frame_unchecked(g, flavor))
}

/// [`adjoint_frame`] without the group membership test.
pub fn adjoint_frame_unchecked<T: Real>(g: &Mat2<T>, flavor: Flavor) -> [[T; 3]; 3] {
    let gi = g.inv();
    let basis = flavor.basis::<T>();
    let mut out = [[T::zero(); 3]; 3];
    for (k, e) in basis.ordered.iter().enumerate() {
        let v = lie_to_vec_unchecked(&(*g * *e * gi), flavor).to_array();
        for i in 0..3 {
            out[i][k] = v[i];
        }
    }
    out
}

/// `φ(λ) = [[1, λ], [0, 1]]`, the gauge of the KdV evenness condition.
pub fn kdv_gauge<T: Real>(lambda: Complex<T>) -> Mat2<T> {
    let o = Complex::new(T::one(), T::zero());
    let z = Complex::new(T::zero(), T::zero());
    Mat2::new(o, lambda, z, o)
}

/// Max-norm deviation of a λ-family from the flavor's reality condition at
/// `λ`. The family is queried at `λ`, `λ̄` and, for KdV, at `-λ`.
pub fn reality_residual<T, F>(family: F, lambda: Complex<T>, flavor: Flavor) -> T
where
    T: Real,
    F: Fn(Complex<T>) -> Mat2<T>,
{
    let e = family(lambda);
    let ec = family(lambda.conj());
    match flavor {
        Flavor::Su2 => (ec.adjoint() * e - Mat2::identity()).max_abs(),
        Flavor::Su11 => {
            let j = j_matrix::<T>();
            (ec.adjoint() * j * e - j).max_abs()
        }
        Flavor::Sl2r => (ec.conj() - e).max_abs(),
        Flavor::Kdv => {
            let conj = (ec.conj() - e).max_abs();
            let en = family(-lambda);
            let p = kdv_gauge(lambda);
            let pn = kdv_gauge(-lambda);
            let even = (p.inv() * e * p - pn.inv() * en * pn).max_abs();
            conj.max(even)
        }
    }
}

/// Reality residual of a single matrix at a real spectral parameter.
pub fn reality_residual_real<T: Real>(x: &Mat2<T>, flavor: Flavor) -> T {
    let x = *x;
    let lambda = Complex::new(T::zero(), T::zero());
    match flavor {
        Flavor::Kdv => reality_residual(|_| x, lambda, Flavor::Sl2r),
        f => reality_residual(|_| x, lambda, f),
    }
}
