//! Curve geometry and the two directions of the curve/potential bridge.
//!
//! [`curve`] extracts potentials from sampled curves through parallel
//! frames; [`lax`] integrates extended frames of a potential and rebuilds the
//! curve with the Sym formula `γ = Eλ E⁻¹`.

use thiserror::Error;

pub mod curve;
pub mod lax;

pub use curve::*;
pub use lax::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FramesError {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("chord {index} is shorter than half the spacing")]
    DegenerateTangent { index: usize },
    #[error("initial normal is parallel to the tangent")]
    DegenerateNormal,
    #[error("operation is not defined for this metric")]
    WrongMetric,
    #[error("curve is not closed")]
    NotClosed,
    #[error("Frenet frame undefined at sample {index} (vanishing curvature)")]
    FrenetUndefined { index: usize },
    #[error("tangent at sample {index} is not space-like")]
    NotSpacelike { index: usize },
    #[error("Lax flatness residual {residual:e} exceeds the gate")]
    FlatnessTooLarge { residual: f64 },
    #[error("reality residual {residual:e} exceeds the gate")]
    RealityDrift { residual: f64 },
    #[error("spectral parameter {0} is not sampled")]
    MissingDerivativeChannel(crate::C64),
    #[error("point ({x}, {t}) is not a sample of the frame")]
    OffGrid { x: f64, t: f64 },
    #[error("frame model does not carry its potential")]
    NoPotential,
    #[error("dressing is singular at ({x}, {t})")]
    SingularDressing { x: f64, t: f64 },
    #[error("spectral parameter {0} is a pole of the dressing")]
    DressingPole(crate::C64),
    #[error("inconsistent trajectory: {0}")]
    InvalidTrajectory(String),
    #[error(transparent)]
    Hierarchy(#[from] crate::hierarchy::HierarchyError),
}
