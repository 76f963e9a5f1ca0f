use magcal::init_fit::EllipsoidFit;
use magcal::nm::SolveReport;
use magcal::{CalibrationParams, MlSolveReport, UpperTriangular3};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nm,
    Ml,
    Truth,
}

/// A calibration result on disk. Triangular matrices are stored as
/// `(d11, d12, d13, d22, d23, d33)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReportFile {
    pub format_version: u32,
    pub method: Method,
    /// `R`, mapping `y − h` onto the unit sphere.
    pub shape: [f64; 6],
    /// `T = R⁻¹`; written for ML and truth reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_matrix: Option<[f64; 6]>,
    pub offset: [f64; 3],
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_eigenvalue: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_violation: Option<f64>,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_digest: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn finite(history: &[f64]) -> Vec<f64> {
    history.iter().copied().filter(|v| v.is_finite()).collect()
}

impl CalibrationReportFile {
    fn base(method: Method, params: &CalibrationParams<f64>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            method,
            shape: params.shape.0,
            t_matrix: None,
            offset: params.offset,
            objective_history: Vec::new(),
            iterations: 0,
            converged: true,
            min_eigenvalue: None,
            constraint_violation: None,
            tool_version: TOOL_VERSION.to_string(),
            input_digest: None,
            warnings: Vec::new(),
        }
    }

    pub fn truth(params: &CalibrationParams<f64>) -> Self {
        let mut r = Self::base(Method::Truth, params);
        r.t_matrix = params.shape.inverse().ok().map(|t| t.0);
        r
    }

    pub fn from_nm(rep: &SolveReport<f64>, fit: &EllipsoidFit<f64>, digest: &str) -> Self {
        let mut r = Self::base(Method::Nm, &rep.final_params);
        r.objective_history = finite(&rep.objective_history);
        r.iterations = rep.iterations;
        r.converged = rep.converged;
        r.min_eigenvalue = Some(fit.min_eigenvalue);
        r.input_digest = Some(digest.to_string());
        r
    }

    pub fn from_ml(rep: &MlSolveReport<f64>, fit: &EllipsoidFit<f64>, digest: &str) -> Self {
        let t = rep.final_state.t_matrix;
        let shape = t.inverse().unwrap_or(UpperTriangular3([f64::NAN; 6]));
        let params = CalibrationParams::new_unchecked(shape, rep.final_state.offset);
        let mut r = Self::base(Method::Ml, &params);
        r.t_matrix = Some(t.0);
        r.objective_history = finite(&rep.objective_history);
        r.iterations = rep.iterations;
        r.converged = rep.converged;
        r.min_eigenvalue = Some(fit.min_eigenvalue);
        r.constraint_violation = Some(rep.final_violation()).filter(|v| v.is_finite());
        r.input_digest = Some(digest.to_string());
        r.warnings = rep.warnings.clone();
        r
    }

    /// The calibration parameters, validated.
    pub fn params(&self) -> CliResult<CalibrationParams<f64>> {
        if self.format_version != FORMAT_VERSION {
            return Err(CliError::Input(format!(
                "unsupported report format_version {}",
                self.format_version
            )));
        }
        let shape = UpperTriangular3(self.shape);
        CalibrationParams::new(shape, Vector3::from(self.offset))
            .map_err(|e| CliError::Input(format!("invalid report parameters: {e}")))
    }
}
