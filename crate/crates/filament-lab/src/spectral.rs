//! Fourier differentiation on periodic grids and high-order finite differences
//! for open ones.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::FftPlanner;

use crate::C64;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward DFT in place (no normalization).
pub fn fft(data: &mut [C64]) {
    let n = data.len();
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    plan.process(data);
}

/// Inverse DFT in place, normalized by `1/N`.
pub fn ifft(data: &mut [C64]) {
    let n = data.len();
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    plan.process(data);
    let s = 1.0 / n as f64;
    data.iter_mut().for_each(|v| *v *= s);
}

/// Angular wavenumbers of an `N`-point grid of period `L`, in FFT order.
/// The Nyquist entry carries `+π N / L`.
pub fn wavenumbers(n: usize, l: f64) -> Vec<f64> {
    let base = 2.0 * PI / l;
    (0..n)
        .map(|j| if j <= n / 2 { j as f64 * base } else { (j as f64 - n as f64) * base })
        .collect()
}

/// Whether `n` is a power of two no smaller than 8.
pub fn valid_grid_size(n: usize) -> bool {
    n >= 8 && n.is_power_of_two()
}

/// Multiply the spectrum of `f` by `symbol(k)` and transform back.
/// At the Nyquist mode the symbol is averaged over `±k`, so odd derivatives of
/// real data stay real.
pub fn apply_symbol<F: Fn(f64) -> C64>(f: &[C64], l: f64, symbol: F) -> Vec<C64> {
    let n = f.len();
    let mut data = f.to_vec();
    fft(&mut data);
    let ks = wavenumbers(n, l);
    for (j, v) in data.iter_mut().enumerate() {
        let s = if n.is_multiple_of(2) && j == n / 2 { 0.5 * (symbol(ks[j]) + symbol(-ks[j])) } else { symbol(ks[j]) };
        *v *= s;
    }
    ifft(&mut data);
    data
}

/// Spectral derivative of the given order.
pub fn derivative(f: &[C64], l: f64, order: u32) -> Vec<C64> {
    derivative_twisted(f, l, order, C64::new(0.0, 0.0))
}

/// `(∂ + κ)^order f`: the derivative of `e^{κx} f` with the factor removed.
pub fn derivative_twisted(f: &[C64], l: f64, order: u32, kappa: C64) -> Vec<C64> {
    if order == 0 {
        return f.to_vec();
    }
    apply_symbol(f, l, |k| (C64::new(kappa.re, k + kappa.im)).powu(order))
}

/// Spectral derivative of real samples.
pub fn derivative_real(f: &[f64], l: f64, order: u32) -> Vec<f64> {
    let c: Vec<C64> = f.iter().map(|&v| C64::new(v, 0.0)).collect();
    derivative(&c, l, order).into_iter().map(|v| v.re).collect()
}

/// Periodic antiderivative with zero mean, together with the mean of `f`
/// (the part that cannot be integrated periodically).
pub fn antiderivative(f: &[C64], l: f64) -> (Vec<C64>, C64) {
    let n = f.len();
    let mut data = f.to_vec();
    fft(&mut data);
    let mean = data[0] / n as f64;
    let ks = wavenumbers(n, l);
    for (j, v) in data.iter_mut().enumerate() {
        if j == 0 || (n.is_multiple_of(2) && j == n / 2) {
            *v = C64::new(0.0, 0.0);
        } else {
            *v /= C64::new(0.0, ks[j]);
        }
    }
    ifft(&mut data);
    (data, mean)
}

/// Values of the trigonometric interpolant at `x_j + shift`.
pub fn shift(f: &[C64], l: f64, shift: f64) -> Vec<C64> {
    apply_symbol(f, l, |k| C64::new(0.0, k * shift).exp())
}

/// Evaluate the trigonometric interpolant of periodic samples at arbitrary
/// points (direct sum).
pub fn evaluate_at(f: &[C64], x0: f64, l: f64, points: &[f64]) -> Vec<C64> {
    let n = f.len();
    let mut coef = f.to_vec();
    fft(&mut coef);
    let ks = wavenumbers(n, l);
    points
        .iter()
        .map(|&x| {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                let w = if n.is_multiple_of(2) && j == n / 2 { (ks[j] * (x - x0)).cos() * coef[j] } else { coef[j] * C64::new(0.0, ks[j] * (x - x0)).exp() };
                acc += w;
            }
            acc / n as f64
        })
        .collect()
}

/// Periodic quadrature `h Σ f_j`.
pub fn integrate(f: &[C64], h: f64) -> C64 {
    f.iter().sum::<C64>() * h
}

/// Finite-difference weights (Fornberg) for derivatives `0..=m` at `z` on
/// the nodes `xs`. Returns `w[d][k]`.
pub fn fornberg(z: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Width of the finite-difference stencils.
pub const FD_STENCIL: usize = 9;

/// Finite-difference derivative on a uniform open grid: centered 9-point
/// stencils in the interior and one-sided 9-point stencils near the ends.
pub fn fd_derivative(f: &[C64], h: f64, order: usize) -> Vec<C64> {
    let n = f.len();
    let w = FD_STENCIL.min(n);
    let half = w / 2;
    let mut out = vec![C64::new(0.0, 0.0); n];
    let mut cache: Vec<Option<Vec<f64>>> = vec![None; w];
    for i in 0..n {
        let start = if i < half { 0 } else if i + half >= n { n - w } else { i - half };
        let off = i - start;
        let weights = cache[off].get_or_insert_with(|| {
            let xs: Vec<f64> = (0..w).map(|k| k as f64).collect();
            fornberg(off as f64, &xs, order).swap_remove(order)
        });
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..w {
            acc += f[start + k] * weights[k];
        }
        out[i] = acc / h.powi(order as i32);
    }
    out
}

/// Finite-difference derivative of real samples.
pub fn fd_derivative_real(f: &[f64], h: f64, order: usize) -> Vec<f64> {
    let c: Vec<C64> = f.iter().map(|&v| C64::new(v, 0.0)).collect();
    fd_derivative(&c, h, order).into_iter().map(|v| v.re).collect()
}

/// Interpolate samples of an open uniform grid at the midpoints
/// `x_j + h/2`, `j = 0..N-1`, with 8-point Lagrange stencils.
pub fn fd_midpoints(f: &[C64]) -> Vec<C64> {
    fd_resample(f, 0.5)
}

/// Interpolate at `x_j + θh` for each `j` (`θ ∈ [0, 1]`).
pub fn fd_resample(f: &[C64], theta: f64) -> Vec<C64> {
    let n = f.len();
    let w = 8.min(n);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let start = (i as isize - (w as isize / 2 - 1)).clamp(0, (n - w) as isize) as usize;
        let xs: Vec<f64> = (0..w).map(|k| (start + k) as f64).collect();
        let weights = fornberg(i as f64 + theta, &xs, 0).swap_remove(0);
        out.push((0..w).map(|k| f[start + k] * weights[k]).sum());
    }
    out
}
