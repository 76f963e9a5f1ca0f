//! Initial estimate from a linear ellipsoid fit.
//!
//! Every noise-free sample satisfies `yᵀ A y + bᵀ y + c = 0` with
//! `A = RᵀR`, `b = −2 A h` and `c = hᵀ A h − 1`. Stacking one linear equation
//! per sample gives `Y z = 0`; the least-squares solution over unit `z` is the
//! eigenvector of `YᵀY` for its smallest eigenvalue, rescaled so that
//! `hᵀ A h − c = 1`.

use nalgebra::{SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::model::{cholesky_upper, CalibrationParams, Mat3, MlState, Symmetric3, Vec3};
use crate::simulator::Dataset;
use crate::Real;

/// Minimum number of samples for the ten-coefficient fit.
pub const MIN_SAMPLES: usize = 10;

/// Quadric `yᵀ A y + bᵀ y + c = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidCoeffs<T> {
    pub a_matrix: Symmetric3<T>,
    pub b_vec: [T; 3],
    pub c_scalar: T,
}

impl<T: Real> EllipsoidCoeffs<T> {
    /// Coefficients implied by a calibration `{R, h}`.
    pub fn from_params(p: &CalibrationParams<T>) -> Self {
        let r = p.shape.to_matrix();
        let a = r.transpose() * r;
        let h = p.offset();
        let b = a * h * T::lit(-2.0);
        let c = h.dot(&(a * h)) - T::one();
        Self {
            a_matrix: Symmetric3::from_matrix(&a),
            b_vec: [b.x, b.y, b.z],
            c_scalar: c,
        }
    }

    pub fn a(&self) -> Mat3<T> {
        self.a_matrix.to_matrix()
    }

    pub fn b(&self) -> Vec3<T> {
        Vector3::from(self.b_vec)
    }

    /// Packs `[vec(A) (column-stacked upper), b, c]`, matching
    /// [`build_design_row`].
    pub fn to_vector(&self) -> [T; 10] {
        let a = self.a_matrix.0.to_vec();
        let b = self.b_vec;
        [a[0], a[1], a[2], a[3], a[4], a[5], b[0], b[1], b[2], self.c_scalar]
    }
}

/// Result of [`fit_ellipsoid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidFit<T> {
    pub coeffs: EllipsoidCoeffs<T>,
    /// Smallest eigenvalue of `YᵀY`, evaluated on the centered and
    /// RMS-normalized samples. Zero for noise-free data.
    pub min_eigenvalue: T,
}

/// Row of the linear system for one sample:
/// `[y1², 2y1y2, y2², 2y1y3, 2y2y3, y3², y1, y2, y3, 1]`.
///
/// Mixed quadratic terms carry the factor two from merging each lower
/// triangular column into its symmetric counterpart.
pub fn build_design_row<T: Real>(y: &Vec3<T>) -> [T; 10] {
    let two = T::lit(2.0);
    let (a, b, c) = (y.x, y.y, y.z);
    [
        a * a,
        two * a * b,
        b * b,
        two * a * c,
        two * b * c,
        c * c,
        a,
        b,
        c,
        T::one(),
    ]
}

/// Smallest eigenpair of `YᵀY` for design rows `rows`, eigenvector normalized.
pub fn min_eigenvector<T: Real>(rows: &[[T; 10]]) -> (T, SVector<T, 10>) {
    let mut normal = SMatrix::<T, 10, 10>::zeros();
    for row in rows {
        let v = SVector::<T, 10>::from_row_slice(row);
        normal += v * v.transpose();
    }
    let eig = normal.symmetric_eigen();
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, T::max_value().unwrap()), |(bi, bv), (i, &v)| {
            if v < bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    let z = eig.eigenvectors.column(idx).normalize();
    (eig.eigenvalues[idx], z)
}

fn leading_minors<T: Real>(a: &Mat3<T>) -> [T; 3] {
    [
        a[(0, 0)],
        a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)],
        a.determinant(),
    ]
}

fn unpack<T: Real>(z: &SVector<T, 10>) -> (Mat3<T>, Vec3<T>, T) {
    let a = Symmetric3(crate::model::UpperTriangular3::from_vec(&z.as_slice()[..6])).to_matrix();
    (a, Vector3::new(z[6], z[7], z[8]), z[9])
}

/// Fits the calibration quadric to `data`.
///
/// Samples are centered on their mean and scaled to unit RMS radius before
/// the eigen-solve; this is an exact change of variables that is undone on
/// the returned coefficients.
pub fn fit_ellipsoid<T: Real>(data: &Dataset<T>) -> Result<EllipsoidFit<T>> {
    let n = data.len();
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientData {
            required: MIN_SAMPLES,
            actual: n,
        });
    }
    let nn = T::lit(n as f64);
    let center = data.samples.iter().fold(Vector3::zeros(), |acc, y| acc + y) / nn;
    let spread = (data
        .samples
        .iter()
        .fold(T::zero(), |acc, y| acc + (y - center).norm_squared())
        / nn)
        .sqrt();
    if !(spread > T::zero()) || !spread.is_finite() {
        return Err(Error::DegenerateExcitation("samples do not span a volume"));
    }

    let rows: Vec<[T; 10]> = data
        .samples
        .iter()
        .map(|y| build_design_row(&((y - center) / spread)))
        .collect();
    let (min_eigenvalue, mut z) = min_eigenvector(&rows);

    let (a_e, _, _) = unpack(&z);
    let minors = leading_minors(&a_e);
    let zero = T::zero();
    let positive = minors.iter().all(|&m| m > zero);
    let negative = minors[0] < zero && minors[1] > zero && minors[2] < zero;
    if negative {
        z = -z;
    } else if !positive {
        return Err(Error::DegenerateExcitation(
            "fitted quadric is not an ellipsoid",
        ));
    }
    let (a_e, b_e, c_e) = unpack(&z);
    let a_inv = a_e
        .try_inverse()
        .ok_or(Error::DegenerateExcitation("fitted quadric matrix is singular"))?;
    let denom = b_e.dot(&(a_inv * b_e)) - T::lit(4.0) * c_e;
    let alpha = T::lit(4.0) / denom;
    if !(alpha > zero) || !alpha.is_finite() {
        return Err(Error::DegenerateExcitation(
            "ellipsoid normalization is not positive",
        ));
    }

    // Undo the normalization x = (y − center) / spread.
    let s2 = spread * spread;
    let a = a_e * (alpha / s2);
    let b_x = b_e * (alpha / spread);
    let c_x = c_e * alpha;
    let b = b_x - a * center * T::lit(2.0);
    let c = center.dot(&(a * center)) - b_x.dot(&center) + c_x;

    Ok(EllipsoidFit {
        coeffs: EllipsoidCoeffs {
            a_matrix: Symmetric3::from_matrix(&a),
            b_vec: [b.x, b.y, b.z],
            c_scalar: c,
        },
        min_eigenvalue,
    })
}

/// `h = −A⁻¹ b / 2` and `R = chol(A)` (upper factor).
pub fn initial_params<T: Real>(coeffs: &EllipsoidCoeffs<T>) -> Result<CalibrationParams<T>> {
    let a = coeffs.a();
    let shape = cholesky_upper(&a)
        .map_err(|_| Error::DegenerateExcitation("quadric matrix is not positive definite"))?;
    let a_inv = a
        .try_inverse()
        .ok_or(Error::DegenerateExcitation("quadric matrix is singular"))?;
    let offset = a_inv * coeffs.b() * T::lit(-0.5);
    Ok(CalibrationParams::new_unchecked(shape, offset))
}

/// ML starting point: `T = R⁻¹`, `m_k = R (y_k − h)` and zero multipliers.
pub fn initial_ml_state<T: Real>(
    params: &CalibrationParams<T>,
    data: &Dataset<T>,
) -> Result<MlState<T>> {
    let t_matrix = params.shape.inverse()?;
    let h = params.offset();
    let field_dirs = data
        .samples
        .iter()
        .map(|y| params.shape.mul_vec(&(y - h)))
        .collect();
    Ok(MlState {
        t_matrix,
        offset: h,
        field_dirs,
        lagrange: vec![T::zero(); data.len()],
    })
}

/// Ellipsoid fit followed by [`initial_params`].
pub fn initial_estimate<T: Real>(data: &Dataset<T>) -> Result<(CalibrationParams<T>, EllipsoidFit<T>)> {
    let fit = fit_ellipsoid(data)?;
    Ok((initial_params(&fit.coeffs)?, fit))
}
