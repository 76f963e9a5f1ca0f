//! Domain types and the fixed-size 3×3 decompositions they rely on.

use nalgebra::{Matrix3, Vector3};
use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

pub type Vec3<T> = Vector3<T>;
pub type Mat3<T> = Matrix3<T>;

/// Positions of the six free entries inside a column-major 3×3 `vec`, in
/// column-stacked order `(0,0) (0,1) (1,1) (0,2) (1,2) (2,2)`.
pub const UPPER_COLUMN_MAJOR: [(usize, usize); 6] =
    [(0, 0), (0, 1), (1, 1), (0, 2), (1, 2), (2, 2)];

/// Upper-triangular 3×3 matrix stored as its six free entries in row-major
/// order `(d11, d12, d13, d22, d23, d33)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UpperTriangular3<T>(pub [T; 6]);

impl<T: Copy + Num> UpperTriangular3<T> {
    pub fn new(d11: T, d12: T, d13: T, d22: T, d23: T, d33: T) -> Self {
        Self([d11, d12, d13, d22, d23, d33])
    }

    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self([o, z, z, o, z, o])
    }

    pub fn from_diagonal(d: [T; 3]) -> Self {
        let z = T::zero();
        Self([d[0], z, z, d[1], z, d[2]])
    }

    fn slot(i: usize, j: usize) -> Option<usize> {
        match (i, j) {
            (0, 0) => Some(0),
            (0, 1) => Some(1),
            (0, 2) => Some(2),
            (1, 1) => Some(3),
            (1, 2) => Some(4),
            (2, 2) => Some(5),
            _ => None,
        }
    }

    /// Entry `(i, j)`, zero below the diagonal.
    pub fn get(&self, i: usize, j: usize) -> T {
        Self::slot(i, j).map_or(T::zero(), |s| self.0[s])
    }

    /// Sets a free entry. Panics when `(i, j)` lies below the diagonal.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let s = Self::slot(i, j).expect("entry below the diagonal is structurally zero");
        self.0[s] = v;
    }

    pub fn diagonal(&self) -> [T; 3] {
        [self.0[0], self.0[3], self.0[5]]
    }

    /// Strictly upper entries `(d12, d13, d23)`.
    pub fn strict_upper(&self) -> [T; 3] {
        [self.0[1], self.0[2], self.0[4]]
    }

    /// Free entries in column-stacked order (see [`UPPER_COLUMN_MAJOR`]).
    pub fn to_vec(&self) -> [T; 6] {
        UPPER_COLUMN_MAJOR.map(|(i, j)| self.get(i, j))
    }

    pub fn from_vec(v: &[T]) -> Self {
        let mut out = Self([T::zero(); 6]);
        for (p, &(i, j)) in UPPER_COLUMN_MAJOR.iter().enumerate() {
            out.set(i, j, v[p]);
        }
        out
    }
}

impl<T: Real> UpperTriangular3<T> {
    pub fn to_matrix(&self) -> Mat3<T> {
        Matrix3::from_fn(|i, j| self.get(i, j))
    }

    /// Reads the upper triangle of `m`, discarding anything below it.
    pub fn from_matrix_upper(m: &Mat3<T>) -> Self {
        Self([m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 1)], m[(1, 2)], m[(2, 2)]])
    }

    pub fn has_positive_diagonal(&self) -> bool {
        self.diagonal().iter().all(|&d| d > T::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Inverse by back substitution; the result is again upper triangular.
    pub fn inverse(&self) -> Result<Self> {
        let [a, b, c, d, e, f] = self.0;
        if a.is_zero() || d.is_zero() || f.is_zero() {
            return Err(Error::ZeroDiagonal);
        }
        let (ia, id, if_) = (T::one() / a, T::one() / d, T::one() / f);
        let i12 = -b * ia * id;
        let i23 = -e * id * if_;
        let i13 = (b * e - c * d) * ia * id * if_;
        Ok(Self([ia, i12, i13, id, i23, if_]))
    }

    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let [a, b, c, d, e, f] = self.0;
        Vector3::new(a * v.x + b * v.y + c * v.z, d * v.y + e * v.z, f * v.z)
    }

    /// `(d11, d12, d13, d22, d23, d33)` as `f64`.
    pub fn to_f64(&self) -> [f64; 6] {
        self.0.map(|v| v.as_f64())
    }
}

/// Symmetric 3×3 matrix stored as its upper triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Symmetric3<T>(pub UpperTriangular3<T>);

impl<T: Real> Symmetric3<T> {
    pub fn to_matrix(&self) -> Mat3<T> {
        Matrix3::from_fn(|i, j| {
            if i <= j {
                self.0.get(i, j)
            } else {
                self.0.get(j, i)
            }
        })
    }

    pub fn from_matrix(m: &Mat3<T>) -> Self {
        Self(UpperTriangular3::from_matrix_upper(m))
    }
}

/// Shape matrix `R` and hard-iron offset `h`; calibrated output is `R (y - h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct CalibrationParams<T> {
    pub shape: UpperTriangular3<T>,
    pub offset: [T; 3],
}

impl<T: Real> CalibrationParams<T> {
    /// Validates that the shape diagonal is strictly positive.
    pub fn new(shape: UpperTriangular3<T>, offset: Vec3<T>) -> Result<Self> {
        if !shape.is_finite() || offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite calibration parameter".into()));
        }
        if !shape.has_positive_diagonal() {
            return Err(Error::InvalidInput(
                "shape matrix diagonal must be strictly positive".into(),
            ));
        }
        Ok(Self::new_unchecked(shape, offset))
    }

    pub fn new_unchecked(shape: UpperTriangular3<T>, offset: Vec3<T>) -> Self {
        Self {
            shape,
            offset: [offset.x, offset.y, offset.z],
        }
    }

    pub fn identity() -> Self {
        Self::new_unchecked(UpperTriangular3::identity(), Vector3::zeros())
    }

    pub fn offset(&self) -> Vec3<T> {
        Vector3::from(self.offset)
    }

    /// Packed parameter vector `[vec(R) (column-stacked upper), h]`.
    pub fn to_vector(&self) -> [T; 9] {
        let r = self.shape.to_vec();
        [r[0], r[1], r[2], r[3], r[4], r[5], self.offset[0], self.offset[1], self.offset[2]]
    }

    pub fn from_vector(x: &[T]) -> Self {
        Self {
            shape: UpperTriangular3::from_vec(&x[..6]),
            offset: [x[6], x[7], x[8]],
        }
    }
}

/// Iterate of the constrained maximum-likelihood solver.
#[derive(Debug, Clone, PartialEq)]
pub struct MlState<T: Real> {
    /// `T = R⁻¹`.
    pub t_matrix: UpperTriangular3<T>,
    pub offset: Vec3<T>,
    /// Calibrated field direction per sample.
    pub field_dirs: Vec<Vec3<T>>,
    /// Lagrange multiplier per sample for the unit-norm constraint.
    pub lagrange: Vec<T>,
}

impl<T: Real> MlState<T> {
    pub fn len(&self) -> usize {
        self.field_dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.field_dirs.is_empty()
    }

    /// Dimension of the full unknown vector, `4N + 9`.
    pub fn dim(&self) -> usize {
        4 * self.len() + 9
    }

    /// `max_k |‖m_k‖² − 1|`.
    pub fn constraint_violation(&self) -> T {
        self.field_dirs
            .iter()
            .fold(T::zero(), |acc, m| acc.max((m.norm_squared() - T::one()).abs()))
    }

    /// Converts to `R = T⁻¹` and the offset.
    pub fn params(&self) -> Result<CalibrationParams<T>> {
        Ok(CalibrationParams::new_unchecked(
            self.t_matrix.inverse()?,
            self.offset,
        ))
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.t_matrix.is_finite()
            && self.offset.iter().all(|v| v.is_finite())
            && self.field_dirs.iter().all(|m| m.iter().all(|v| v.is_finite()))
            && self.lagrange.iter().all(|v| v.is_finite())
    }
}

/// `R = M Λ`: unit-diagonal non-orthogonality factor and per-axis scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleOrthoDecomp<T> {
    pub m_matrix: UpperTriangular3<T>,
    pub lambda: [T; 3],
}

impl<T: Copy + Num> ScaleOrthoDecomp<T> {
    /// Recomposes `M Λ`.
    pub fn recompose(&self) -> UpperTriangular3<T> {
        let mut out = self.m_matrix;
        for j in 0..3 {
            for i in 0..=j {
                out.set(i, j, self.m_matrix.get(i, j) * self.lambda[j]);
            }
        }
        // the unit diagonal times Λ_jj is Λ_jj exactly
        for j in 0..3 {
            out.set(j, j, self.lambda[j]);
        }
        out
    }
}

/// Splits `r` into `M Λ` with `Λ = diag(r)` and `M = r Λ⁻¹`.
///
/// Only field operations are used, so exact scalar types recompose exactly.
pub fn decompose_scale_ortho<T: Copy + Num>(r: &UpperTriangular3<T>) -> Result<ScaleOrthoDecomp<T>> {
    let lambda = r.diagonal();
    if lambda.iter().any(|d| d.is_zero()) {
        return Err(Error::ZeroDiagonal);
    }
    let mut m = UpperTriangular3::identity();
    for (j, &l) in lambda.iter().enumerate() {
        for i in 0..j {
            m.set(i, j, r.get(i, j) / l);
        }
    }
    Ok(ScaleOrthoDecomp {
        m_matrix: m,
        lambda,
    })
}

/// Attitude matrix `C_n^b` for roll `phi`, pitch `theta` and yaw `psi` in
/// degrees.
pub fn attitude_from_euler<T: Real>(phi: T, theta: T, psi: T) -> Mat3<T> {
    let (sf, cf) = deg_to_rad(phi).sin_cos();
    let (st, ct) = deg_to_rad(theta).sin_cos();
    let (sp, cp) = deg_to_rad(psi).sin_cos();
    Matrix3::new(
        ct * cp,
        sf * sp - cf * cp * st,
        cf * sp + cp * sf * st,
        st,
        cf * ct,
        -ct * sf,
        -ct * sp,
        cp * sf + cf * st * sp,
        cf * cp - sf * st * sp,
    )
}

fn deg_to_rad<T: Real>(deg: T) -> T {
    deg * T::PI() / T::lit(180.0)
}

/// QR decomposition with the diagonal of `r` normalized to be positive.
pub fn qr_decompose<T: Real>(m: &Mat3<T>) -> Result<(Mat3<T>, UpperTriangular3<T>)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    let qr = m.qr();
    let mut q = qr.q();
    let mut r = qr.r();
    let tol = T::lit(8.0) * T::eps() * m.norm();
    for i in 0..3 {
        if r[(i, i)].abs() <= tol {
            return Err(Error::SingularMatrix);
        }
        if r[(i, i)] < T::zero() {
            q.column_mut(i).neg_mut();
            r.row_mut(i).neg_mut();
        }
    }
    Ok((q, UpperTriangular3::from_matrix_upper(&r)))
}

/// Upper Cholesky factor `R` with `Rᵀ R = a`.
pub fn cholesky_upper<T: Real>(a: &Mat3<T>) -> Result<UpperTriangular3<T>> {
    let zero = T::zero();
    let a11 = a[(0, 0)];
    if !(a11 > zero) {
        return Err(Error::NotPositiveDefinite);
    }
    let r11 = a11.sqrt();
    let r12 = a[(0, 1)] / r11;
    let r13 = a[(0, 2)] / r11;
    let p22 = a[(1, 1)] - r12 * r12;
    if !(p22 > zero) {
        return Err(Error::NotPositiveDefinite);
    }
    let r22 = p22.sqrt();
    let r23 = (a[(1, 2)] - r12 * r13) / r22;
    let p33 = a[(2, 2)] - r13 * r13 - r23 * r23;
    if !(p33 > zero) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(UpperTriangular3::new(r11, r12, r13, r22, r23, p33.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn euler_zero_is_identity() {
        let c = attitude_from_euler(0.0, 0.0, 0.0);
        assert_eq!(c, Matrix3::identity());
    }

    #[test]
    fn euler_roll_ninety() {
        let c = attitude_from_euler(90.0, 0.0, 0.0);
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_abs_diff_eq!(c, expected, epsilon = 1e-15);
    }

    #[test]
    fn qr_of_trivial_inputs() {
        let (q, r) = qr_decompose(&Matrix3::<f64>::identity()).unwrap();
        assert_abs_diff_eq!(q, Matrix3::identity(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.to_matrix(), Matrix3::identity(), epsilon = 1e-15);

        let d = Matrix3::from_diagonal(&Vector3::new(2.0, 3.0, 4.0));
        let (q, r) = qr_decompose(&d).unwrap();
        assert_abs_diff_eq!(q, Matrix3::identity(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.to_matrix(), d, epsilon = 1e-15);
    }

    #[test]
    fn qr_of_negative_diagonal_flips_signs() {
        let m = Matrix3::from_diagonal(&Vector3::new(-2.0, 3.0, -4.0));
        let (q, r) = qr_decompose(&m).unwrap();
        assert!(r.has_positive_diagonal());
        assert_abs_diff_eq!(q * r.to_matrix(), m, epsilon = 1e-15);
    }

    #[test]
    fn qr_singular() {
        let m = Matrix3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0);
        assert_eq!(qr_decompose(&m).unwrap_err(), Error::SingularMatrix);
    }

    #[test]
    fn cholesky_trivial() {
        let r = cholesky_upper(&Matrix3::<f64>::identity()).unwrap();
        assert_eq!(r, UpperTriangular3::identity());
        let r = cholesky_upper(&Matrix3::from_diagonal(&Vector3::new(4.0, 9.0, 16.0))).unwrap();
        assert_eq!(r, UpperTriangular3::from_diagonal([2.0, 3.0, 4.0]));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 1.0));
        assert_eq!(cholesky_upper(&a).unwrap_err(), Error::NotPositiveDefinite);
        let a = Matrix3::new(1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert_eq!(cholesky_upper(&a).unwrap_err(), Error::NotPositiveDefinite);
    }

    #[test]
    fn scale_ortho_examples() {
        let d = decompose_scale_ortho(&UpperTriangular3::from_diagonal([2.0, 3.0, 4.0])).unwrap();
        assert_eq!(d.m_matrix, UpperTriangular3::identity());
        assert_eq!(d.lambda, [2.0, 3.0, 4.0]);

        let r = UpperTriangular3::new(2.0, 1.0, 0.0, 1.0, 1.0, 4.0);
        let d = decompose_scale_ortho(&r).unwrap();
        assert_eq!(d.lambda, [2.0, 1.0, 4.0]);
        assert_eq!(d.m_matrix, UpperTriangular3::new(1.0, 1.0, 0.0, 1.0, 0.25, 1.0));
        assert_eq!(d.recompose(), r);
    }

    #[test]
    fn scale_ortho_zero_diagonal() {
        let r = UpperTriangular3::new(2.0, 1.0, 0.0, 0.0, 1.0, 4.0);
        assert_eq!(decompose_scale_ortho(&r).unwrap_err(), Error::ZeroDiagonal);
    }

    #[test]
    fn triangular_inverse() {
        let r = UpperTriangular3::new(2.0, 0.3, -0.7, 1.5, 0.4, 0.9);
        let inv = r.inverse().unwrap();
        assert_abs_diff_eq!(r.to_matrix() * inv.to_matrix(), Matrix3::identity(), epsilon = 1e-15);
        let v = Vector3::new(0.1, -2.0, 3.0);
        assert_abs_diff_eq!(r.mul_vec(&v), r.to_matrix() * v, epsilon = 1e-15);
    }

    #[test]
    fn column_stacked_packing() {
        let r = UpperTriangular3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        assert_eq!(r.to_vec(), [1.0, 2.0, 4.0, 3.0, 5.0, 6.0]);
        assert_eq!(UpperTriangular3::from_vec(&r.to_vec()), r);
    }
}
