//! The Hamilton reaction ODE `dR/dt = Q(R)` and experiments built on it.
//!
//! Only the reaction part of the curvature evolution is modelled: a closed,
//! convex, `O(n)`-invariant set of curvature tensors is preserved by the full
//! evolution exactly when it is preserved by this ODE.

pub mod boundary;
pub mod experiments;
pub mod integrate;
pub mod q;

pub use boundary::{boundary_inward_value, key_inequality_residual, KeyInequality};
pub use experiments::{
    checkpoints, convergence_experiment, diagnose, diagnostics_columns, interior_estimate_monitor,
    invariance_experiment, ray_distance, ConvergenceOptions, ConvergenceReport, Diagnostic, InteriorPoint,
    InvarianceConfig, InvarianceReport, InvarianceRun,
};
pub use integrate::{detect_blowup, integrate, FlowTrajectory, Method, Normalization, StepControl};
pub use q::{q_tensor, q_tensor_reference};
