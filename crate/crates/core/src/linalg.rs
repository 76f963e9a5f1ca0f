//! Dense symmetric indefinite factorization.
//!
//! Bunch-Kaufman diagonal pivoting, `P A Pᵀ = L D Lᵀ` with `D` block diagonal
//! (1×1 and 2×2 blocks). Used for the Newton systems, whose Hessians are
//! symmetric but not necessarily positive definite, and for the per-sample
//! KKT blocks whose multiplier diagonal is structurally zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pivot {
    One,
    Two,
}

/// Factorization of a symmetric matrix; solves `A x = b`.
#[derive(Debug, Clone)]
pub struct SymmetricIndefinite<T: Real> {
    n: usize,
    /// Strictly lower part holds `L`; the diagonal and first sub-diagonal of
    /// 2×2 blocks hold `D`.
    factor: DMatrix<T>,
    /// Row interchanges applied in order at each step: `(kk, kp)`.
    swaps: Vec<(usize, usize)>,
    /// Pivot kind per leading index (second index of a 2×2 block is skipped).
    pivots: Vec<(usize, Pivot)>,
}

impl<T: Real> SymmetricIndefinite<T> {
    /// Factors the symmetric matrix `a`. Only the lower triangle is read.
    ///
    /// A pivot whose magnitude falls below `n·ε·max|a_ij|` is treated as zero
    /// and the matrix is reported singular.
    pub fn new(a: &DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                actual: a.ncols(),
            });
        }
        let mut f = a.clone();
        for j in 0..n {
            for i in 0..j {
                f[(i, j)] = f[(j, i)];
            }
        }
        let scale = f.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if !scale.is_finite() {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        let tiny = T::lit(n.max(1) as f64) * T::eps() * scale;
        let alpha = (T::one() + T::lit(17.0).sqrt()) / T::lit(8.0);

        let mut swaps = Vec::new();
        let mut pivots = Vec::new();
        let mut k = 0;
        while k < n {
            let absakk = f[(k, k)].abs();
            let (mut imax, mut colmax) = (k, T::zero());
            for i in k + 1..n {
                let v = f[(i, k)].abs();
                if v > colmax {
                    colmax = v;
                    imax = i;
                }
            }
            if absakk.max(colmax) <= tiny {
                return Err(Error::SingularMatrix);
            }

            let (kp, kind) = if absakk >= alpha * colmax {
                (k, Pivot::One)
            } else {
                let mut rowmax = T::zero();
                for j in k..n {
                    if j != imax {
                        rowmax = rowmax.max(f[(imax, j)].abs());
                    }
                }
                if absakk * rowmax >= alpha * colmax * colmax {
                    (k, Pivot::One)
                } else if f[(imax, imax)].abs() >= alpha * rowmax {
                    (imax, Pivot::One)
                } else {
                    (imax, Pivot::Two)
                }
            };

            let kk = if kind == Pivot::One { k } else { k + 1 };
            if kp != kk {
                // Full symmetric interchange: rows of the finished L columns
                // and both rows and columns of the trailing block.
                f.swap_rows(kk, kp);
                f.swap_columns(kk, kp);
                swaps.push((kk, kp));
            }

            match kind {
                Pivot::One => {
                    let d = f[(k, k)];
                    if d.abs() <= tiny {
                        return Err(Error::SingularMatrix);
                    }
                    for j in k + 1..n {
                        let cj = f[(j, k)] / d;
                        for i in j..n {
                            let v = f[(i, j)] - f[(i, k)] * cj;
                            f[(i, j)] = v;
                            f[(j, i)] = v;
                        }
                    }
                    for i in k + 1..n {
                        f[(i, k)] /= d;
                        f[(k, i)] = T::zero();
                    }
                    pivots.push((k, Pivot::One));
                    k += 1;
                }
                Pivot::Two => {
                    let (d11, d21, d22) = (f[(k, k)], f[(k + 1, k)], f[(k + 1, k + 1)]);
                    let det = d11 * d22 - d21 * d21;
                    if det.abs() <= tiny * tiny {
                        return Err(Error::SingularMatrix);
                    }
                    let (i11, i21, i22) = (d22 / det, -d21 / det, d11 / det);
                    let mut l = vec![(T::zero(), T::zero()); n];
                    for (i, li) in l.iter_mut().enumerate().skip(k + 2) {
                        let (c1, c2) = (f[(i, k)], f[(i, k + 1)]);
                        *li = (c1 * i11 + c2 * i21, c1 * i21 + c2 * i22);
                    }
                    for j in k + 2..n {
                        let (c1, c2) = (f[(j, k)], f[(j, k + 1)]);
                        for i in j..n {
                            let v = f[(i, j)] - (l[i].0 * c1 + l[i].1 * c2);
                            f[(i, j)] = v;
                            f[(j, i)] = v;
                        }
                    }
                    for (i, li) in l.iter().enumerate().skip(k + 2) {
                        f[(i, k)] = li.0;
                        f[(i, k + 1)] = li.1;
                        f[(k, i)] = T::zero();
                        f[(k + 1, i)] = T::zero();
                    }
                    f[(k, k + 1)] = d21;
                    pivots.push((k, Pivot::Two));
                    k += 2;
                }
            }
        }
        Ok(Self {
            n,
            factor: f,
            swaps,
            pivots,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let n = self.n;
        let f = &self.factor;
        let mut x = b.clone();
        for &(a, c) in &self.swaps {
            x.swap_rows(a, c);
        }
        // L z = P b
        for &(k, kind) in &self.pivots {
            let w = if kind == Pivot::One { 1 } else { 2 };
            for c in k..k + w {
                let xc = x[c];
                for i in k + w..n {
                    x[i] -= f[(i, c)] * xc;
                }
            }
        }
        // D w = z
        for &(k, kind) in &self.pivots {
            match kind {
                Pivot::One => x[k] /= f[(k, k)],
                Pivot::Two => {
                    let (d11, d21, d22) = (f[(k, k)], f[(k + 1, k)], f[(k + 1, k + 1)]);
                    let det = d11 * d22 - d21 * d21;
                    let (b1, b2) = (x[k], x[k + 1]);
                    x[k] = (d22 * b1 - d21 * b2) / det;
                    x[k + 1] = (d11 * b2 - d21 * b1) / det;
                }
            }
        }
        // Lᵀ y = w
        for &(k, kind) in self.pivots.iter().rev() {
            let w = if kind == Pivot::One { 1 } else { 2 };
            for c in k..k + w {
                let mut s = x[c];
                for i in k + w..n {
                    s -= f[(i, c)] * x[i];
                }
                x[c] = s;
            }
        }
        for &(a, c) in self.swaps.iter().rev() {
            x.swap_rows(a, c);
        }
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col = self.solve(&b.column(j).into_owned());
            out.set_column(j, &col);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &DMatrix<f64>, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a * x - b).norm() / (1.0 + b.norm())
    }

    #[test]
    fn solves_positive_definite() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = SymmetricIndefinite::new(&a).unwrap().solve(&b);
        assert!(residual(&a, &x, &b) < 1e-14);
    }

    #[test]
    fn solves_kkt_block_with_zero_diagonal() {
        // [[H, g], [gᵀ, 0]] with structurally zero trailing diagonal.
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, 0.1, 0.0, 1.2, 0.1, 3.0, 0.3, -0.4, 0.0, 0.3, 1.5, 0.8, 1.2, -0.4, 0.8, 0.0,
            ],
        );
        let b = DVector::from_vec(vec![0.3, 1.0, -1.0, 2.0]);
        let x = SymmetricIndefinite::new(&a).unwrap().solve(&b);
        assert!(residual(&a, &x, &b) < 1e-14);
    }

    #[test]
    fn two_by_two_pivot_needed() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0f64, 1.0, 1.0, 0.0]);
        let b = DVector::from_vec(vec![3.0f64, 5.0]);
        let f = SymmetricIndefinite::new(&a).unwrap();
        assert!(f.pivots.iter().any(|p| p.1 == Pivot::Two));
        let x = f.solve(&b);
        assert!((x[0] - 5.0).abs() < 1e-15 && (x[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn singular_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(
            SymmetricIndefinite::new(&a).unwrap_err(),
            Error::SingularMatrix
        );
        let z = DMatrix::<f64>::zeros(3, 3);
        assert!(SymmetricIndefinite::new(&z).is_err());
    }

    #[test]
    fn random_indefinite_systems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for n in 2..25 {
            let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let mut a = &m + m.transpose();
            // sprinkle zero diagonals to force interchanges
            for i in (0..n).step_by(3) {
                a[(i, i)] = 0.0;
            }
            let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let x = SymmetricIndefinite::new(&a).unwrap().solve(&b);
            let dense = a.clone().lu().solve(&b).unwrap();
            assert!(residual(&a, &x, &b) < 1e-10, "n = {n}");
            assert!((&x - &dense).norm() < 1e-8 * (1.0 + dense.norm()));
        }
    }
}
