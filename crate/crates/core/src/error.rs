use thiserror::Error;

use crate::flow::FlowTrajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index ({i},{j},{k},{l}) out of range for dimension {n}")]
    IndexOutOfRange {
        n: usize,
        i: usize,
        j: usize,
        k: usize,
        l: usize,
    },

    #[error("entries ({first:?}) and ({second:?}) lie in one symmetry orbit but disagree")]
    SymmetryConflict {
        first: (usize, usize, usize, usize, f64),
        second: (usize, usize, usize, usize, f64),
    },

    #[error("first Bianchi identity violated: residual {residual:e} exceeds {tolerance:e}")]
    BianchiViolation { residual: f64, tolerance: f64 },

    #[error("vectors span a degenerate plane (Gram determinant {gram:e})")]
    DegeneratePlane { gram: f64 },

    #[error("frame is not orthonormal: {reason}")]
    BadFrame { reason: String },

    #[error("weight {value} outside admissible range [{lo}, {hi}]")]
    RangeViolation { value: f64, lo: f64, hi: f64 },

    #[error("operation needs dimension {expected}, got {got}")]
    WrongDimension { expected: String, got: usize },

    #[error("optimizer exhausted {restarts} restarts without reaching stationarity (best value {best})")]
    OptimizerDiverged { restarts: usize, best: f64 },

    #[error("maximal sectional curvature {k_max} is not positive")]
    NonpositiveCurvature { k_max: f64 },

    #[error("flow blew up near t = {t_blowup:.12} (last finite state at t = {t_last:.12})")]
    BlowupReached {
        t_last: f64,
        t_blowup: f64,
        trajectory: Box<FlowTrajectory>,
    },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    MaxStepsExceeded { max_steps: usize, t: f64 },

    #[error("initial tensor is not strictly inside the cone (margin {margin:e})")]
    NotInCone { margin: f64 },

    #[error("hypothesis violated at state {index}: {reason}")]
    HypothesisViolated { index: usize, reason: String },

    #[error("invalid model specification: {0}")]
    SpecInvalid(String),

    #[error("cone shift bisection failed: {0}")]
    BisectionFailed(String),

    #[error("could not construct constrained complex vectors: {0}")]
    ConstraintConstructionFailed(String),

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("malformed tensor document: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
