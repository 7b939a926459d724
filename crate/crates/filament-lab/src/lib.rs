//! Numerical laboratory for integrable curve flows.
//!
//! The crate covers both directions of the curve/soliton correspondence:
//! potentials are extracted from discrete curves through parallel frames, and
//! curves are rebuilt from Lax frames through the Sym formula. Bäcklund
//! transformations produce explicit multi-soliton filaments, and direct PDE
//! solvers serve as independent oracles.
//!
//! The matrix algebra in [`liealg`] is generic over the real scalar; the grid
//! based modules work in `f64`.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod liealg;
pub mod hierarchy;
pub mod spectral;
pub mod frames;
pub mod backlund;
pub mod flows;
pub mod io;

pub use num_complex::Complex;

/// Double-precision complex scalar.
pub type C64 = Complex<f64>;
/// Double-precision complex 2×2 matrix.
pub type Mat2C = liealg::Mat2<f64>;
/// Single-precision complex 2×2 matrix.
pub type Mat2C32 = liealg::Mat2<f32>;
/// Double-precision tagged coordinate vector.
pub type Vec3R = liealg::Vec3<f64>;

pub use liealg::{Flavor, Metric};
