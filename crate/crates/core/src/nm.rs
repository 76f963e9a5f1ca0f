//! Norm-based estimator: minimizes `Σ (1 − ‖R (y_k − h)‖²)²` over the six
//! free entries of upper-triangular `R` and the offset `h`, with plain
//! Newton steps on analytic derivatives.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use crate::linalg::SymmetricIndefinite;
use crate::model::{CalibrationParams, UPPER_COLUMN_MAJOR};
use crate::simulator::Dataset;
use crate::solve::{SolveError, SolveErrorKind, SolveOptions};
use crate::Real;

pub type Gradient<T> = SVector<T, 9>;
pub type Hessian<T> = SMatrix<T, 9, 9>;

/// Outcome of a Newton solve on the norm-based objective.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    /// Objective per iteration, index 0 being the initial value.
    pub objective_history: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub final_params: CalibrationParams<T>,
}

impl<T: Real> SolveReport<T> {
    pub fn final_objective(&self) -> T {
        *self.objective_history.last().expect("history is never empty")
    }
}

/// `Σ (1 − ‖R u_k‖²)²` with `u_k = y_k − h`.
pub fn nm_objective<T: Real>(params: &CalibrationParams<T>, data: &Dataset<T>) -> T {
    let h = params.offset();
    data.samples.iter().fold(T::zero(), |acc, y| {
        let r = T::one() - params.shape.mul_vec(&(y - h)).norm_squared();
        acc + r * r
    })
}

/// Gradient and Hessian of [`nm_objective`] in the packed coordinates of
/// [`CalibrationParams::to_vector`].
pub fn nm_gradient_hessian<T: Real>(
    params: &CalibrationParams<T>,
    data: &Dataset<T>,
) -> (Gradient<T>, Hessian<T>) {
    let r = params.shape.to_matrix();
    let rtr = r.transpose() * r;
    let h = params.offset();
    let two = T::lit(2.0);
    let mut g = Gradient::zeros();
    let mut hess = Hessian::zeros();

    for y in &data.samples {
        let u = y - h;
        let v = r * u;
        let e = v.norm_squared() - T::one();
        let w = rtr * u;
        // ∂e/∂R_ij / 2 = v_i u_j
        let dr: [T; 6] = UPPER_COLUMN_MAJOR.map(|(i, j)| v[i] * u[j]);

        for p in 0..6 {
            g[p] += e * dr[p];
        }
        for m in 0..3 {
            g[6 + m] -= e * w[m];
        }

        for (p, &(i, j)) in UPPER_COLUMN_MAJOR.iter().enumerate() {
            for (q, &(k, l)) in UPPER_COLUMN_MAJOR.iter().enumerate().skip(p) {
                let mut val = two * dr[p] * dr[q];
                if i == k {
                    val += e * u[j] * u[l];
                }
                hess[(p, q)] += val;
            }
            for m in 0..3 {
                let mut val = -two * dr[p] * w[m] - e * u[j] * r[(i, m)];
                if j == m {
                    val -= e * v[i];
                }
                hess[(p, 6 + m)] += val;
            }
        }
        for a in 0..3 {
            for b in a..3 {
                hess[(6 + a, 6 + b)] += e * rtr[(a, b)] + two * w[a] * w[b];
            }
        }
    }

    for p in 0..9 {
        for q in 0..p {
            hess[(p, q)] = hess[(q, p)];
        }
    }
    let four = T::lit(4.0);
    (g * four, hess * four)
}

/// Newton iteration `x ← x − H⁻¹ g` from `init`.
///
/// Stops when the gradient is already stationary, when the objective changes
/// by at most `objective_tolerance`, or when the step norm falls below
/// `step_tolerance`.
pub fn solve_nm<T: Real>(
    data: &Dataset<T>,
    init: &CalibrationParams<T>,
    opts: &SolveOptions<T>,
) -> Result<SolveReport<T>, SolveError<SolveReport<T>>> {
    let mut params = *init;
    let mut f = nm_objective(&params, data);
    let mut report = SolveReport {
        objective_history: vec![f],
        iterations: 0,
        converged: false,
        final_params: params,
    };
    if !f.is_finite() {
        return Err(SolveError {
            kind: SolveErrorKind::NonFinite,
            report,
        });
    }

    loop {
        let (g, hess) = nm_gradient_hessian(&params, data);
        if g.norm() <= opts.gradient_tolerance * (T::one() + f) {
            report.converged = true;
            break;
        }
        if report.iterations >= opts.max_iterations {
            break;
        }
        let dense = DMatrix::from_iterator(9, 9, hess.iter().copied());
        let factor = match SymmetricIndefinite::new(&dense) {
            Ok(f) => f,
            Err(_) => {
                let kind = if hess.iter().all(|v| v.is_finite()) {
                    SolveErrorKind::SingularHessian
                } else {
                    SolveErrorKind::NonFinite
                };
                return Err(SolveError { kind, report });
            }
        };
        let step = factor.solve(&DVector::from_column_slice(g.as_slice()));
        let mut x = params.to_vector();
        for (xi, si) in x.iter_mut().zip(step.iter()) {
            *xi -= *si;
        }
        let next = CalibrationParams::from_vector(&x);
        let f_next = nm_objective(&next, data);
        report.iterations += 1;
        if !f_next.is_finite() || step.iter().any(|s| !s.is_finite()) {
            return Err(SolveError {
                kind: SolveErrorKind::NonFinite,
                report,
            });
        }
        report.objective_history.push(f_next);
        report.final_params = next;
        params = next;
        let change = (f_next - f).abs();
        f = f_next;
        if change <= opts.objective_tolerance || step.norm() <= opts.step_tolerance {
            report.converged = true;
            break;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::UpperTriangular3;
    use nalgebra::Vector3;

    #[test]
    fn objective_single_sample() {
        let d = Dataset::from_samples(vec![Vector3::new(1.0, 1.0, 0.0)]).unwrap();
        assert_eq!(nm_objective(&CalibrationParams::identity(), &d), 1.0);
    }

    #[test]
    fn identity_on_unit_vectors_is_stationary() {
        let d = Dataset::<f64>::from_samples(vec![
            Vector3::x(),
            Vector3::y(),
            Vector3::z(),
            -Vector3::x(),
        ])
        .unwrap();
        let p = CalibrationParams::identity();
        let (g, _) = nm_gradient_hessian(&p, &d);
        assert_eq!(g, Gradient::zeros());
        let rep = solve_nm(&d, &p, &SolveOptions::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn singular_hessian_is_reported() {
        // One sample cannot pin nine parameters.
        let d = Dataset::from_samples(vec![Vector3::new(2.0, 0.0, 0.0)]).unwrap();
        let init = CalibrationParams::new_unchecked(
            UpperTriangular3::identity(),
            Vector3::zeros(),
        );
        let err = solve_nm(&d, &init, &SolveOptions::default()).unwrap_err();
        assert_eq!(err.kind, SolveErrorKind::SingularHessian);
        assert_eq!(err.report.objective_history.len(), 1);
    }
}
