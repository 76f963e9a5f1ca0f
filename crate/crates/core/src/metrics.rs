//! Calibrated output and error metrics against a reference calibration.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{decompose_scale_ortho, CalibrationParams, Vec3};
use crate::Real;

/// Scale-factor, orthogonality and hard-iron errors of an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics<T> {
    /// Average scale-factor error, percent.
    pub scale_pct: T,
    /// Average sensor non-orthogonality error, degrees.
    pub ortho_deg: T,
    /// Average hard-iron error, Gauss.
    pub hard_iron_gauss: T,
}

impl<T: Real> ErrorMetrics<T> {
    pub fn max_component(&self) -> T {
        self.scale_pct.max(self.ortho_deg).max(self.hard_iron_gauss)
    }
}

/// `R (y − h)`.
pub fn apply_calibration<T: Real>(params: &CalibrationParams<T>, y: &Vec3<T>) -> Vec3<T> {
    params.shape.mul_vec(&(y - params.offset()))
}

/// Scores `estimate` against `truth` after splitting both shapes as `R = M Λ`:
///
/// * `e_s = ‖diag(Λ⁻¹ Λ̂ − I)‖ / 3 × 100`
/// * `e_o = 180 / (3π) · ‖M̂ − M‖` over the strictly upper entries
/// * `e_h = ‖ĥ − h‖ / 3`
pub fn error_metrics<T: Real>(
    estimate: &CalibrationParams<T>,
    truth: &CalibrationParams<T>,
) -> Result<ErrorMetrics<T>> {
    let est = decompose_scale_ortho(&estimate.shape)?;
    let tru = decompose_scale_ortho(&truth.shape)?;
    let three = T::lit(3.0);

    let scale_sq = (0..3).fold(T::zero(), |acc, i| {
        let d = est.lambda[i] / tru.lambda[i] - T::one();
        acc + d * d
    });
    let (mu, mt) = (est.m_matrix.strict_upper(), tru.m_matrix.strict_upper());
    let ortho_sq = (0..3).fold(T::zero(), |acc, i| {
        let d = mu[i] - mt[i];
        acc + d * d
    });

    Ok(ErrorMetrics {
        scale_pct: scale_sq.sqrt() / three * T::lit(100.0),
        ortho_deg: T::lit(180.0) / (three * T::PI()) * ortho_sq.sqrt(),
        hard_iron_gauss: (estimate.offset() - truth.offset()).norm() / three,
    })
}
