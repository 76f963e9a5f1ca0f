//! Attitude-independent calibration of three-axis magnetometers.
//!
//! Two batch estimators are provided:
//!
//! * [`nm`]: the norm-based estimator minimizing `Σ (1 − ‖R (y_k − h)‖²)²`,
//!   a quartic objective in the nine parameters `{R, h}`.
//! * [`ml`]: the constrained maximum-likelihood estimator over
//!   `{T = R⁻¹, h, m_k}` with `‖m_k‖ = 1`, solved by Newton's method on the
//!   Lagrangian with an O(N) Schur-complement elimination of the per-sample
//!   blocks.
//!
//! Both are started from a linear ellipsoid fit ([`init_fit`]). The
//! [`simulator`], [`metrics`] and [`experiments`] modules provide synthetic
//! data, error scoring and the Monte-Carlo studies.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the `*F64`
//! aliases below fix the common double precision case.

// `!(x > 0)` is used deliberately so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Solver errors carry the partial report by value.
#![allow(clippy::result_large_err)]

pub mod error;
pub mod experiments;
pub mod init_fit;
pub mod linalg;
pub mod metrics;
pub mod ml;
pub mod model;
pub mod nm;
mod scalar;
pub mod simulator;
pub mod solve;

pub use error::{Error, Result};
pub use scalar::Real;

pub use init_fit::{fit_ellipsoid, initial_estimate, initial_ml_state, initial_params, EllipsoidCoeffs, EllipsoidFit};
pub use metrics::{apply_calibration, error_metrics, ErrorMetrics};
pub use ml::{ml_kkt_system, ml_objective, solve_ml, MlKkt, MlSolveReport};
pub use model::{
    attitude_from_euler, cholesky_upper, decompose_scale_ortho, qr_decompose, CalibrationParams,
    Mat3, MlState, ScaleOrthoDecomp, UpperTriangular3, Vec3,
};
pub use nm::{nm_gradient_hessian, nm_objective, solve_nm, SolveReport};
pub use simulator::{reference_trajectory, simulate, Dataset, SensorTruth, Trajectory};
pub use solve::{SolveError, SolveErrorKind, SolveOptions};

pub type CalibrationParamsF64 = CalibrationParams<f64>;
pub type CalibrationParamsF32 = CalibrationParams<f32>;
pub type UpperTriangular3F64 = UpperTriangular3<f64>;
pub type DatasetF64 = Dataset<f64>;
pub type DatasetF32 = Dataset<f32>;
pub type SensorTruthF64 = SensorTruth<f64>;
pub type TrajectoryF64 = Trajectory<f64>;
pub type MlStateF64 = MlState<f64>;
pub type MlStateF32 = MlState<f32>;
pub type SolveOptionsF64 = SolveOptions<f64>;
pub type SolveReportF64 = SolveReport<f64>;
pub type MlSolveReportF64 = MlSolveReport<f64>;
pub type ErrorMetricsF64 = ErrorMetrics<f64>;
