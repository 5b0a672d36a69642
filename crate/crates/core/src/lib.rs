//! Numerical laboratory for algebraic curvature tensors on ℝⁿ.
//!
//! Tensors carry the symmetries of a Riemannian curvature tensor in an
//! orthonormal basis. On top of them the crate evaluates pointwise curvature
//! conditions (sectional pinching, isotropic curvature and its PIC1/PIC2
//! strengthenings, curvature-operator positivity) by global optimization over
//! orthonormal frames, and integrates the reaction ODE `dR/dt = Q(R)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod conditions;
pub mod decomposition;
pub mod error;
pub mod flow;
pub mod frame;
pub mod io;
pub mod models;
pub mod optimize;
pub mod quantities;
pub mod tensor;

pub use conditions::{ConditionReport, ConeId, MarginOptions};
pub use error::{Error, Result};
pub use frame::{ComplexVector, Frame, Frame4, Plane};
pub use models::ModelSpec;
pub use quantities::LambdaRange;
pub use tensor::{constant_curvature, make_tensor, BianchiMode, CurvatureTensor};
