//! Constrained maximum-likelihood estimator.
//!
//! Minimizes `Σ ‖y_k − T m_k − h‖²` subject to `‖m_k‖ = 1` by Newton's method
//! on the Lagrangian
//!
//! ```text
//! f = Σ ‖y_k − T m_k − h‖² + λ_k (‖m_k‖² − 1)
//! ```
//!
//! over `x = [vec(T), h, m_1 … m_N, λ_1 … λ_N]` (dimension `4N + 9`). The
//! Hessian is an arrowhead: each `(m_k, λ_k)` block couples only to the
//! nine head coordinates `(T, h)`. [`MlKkt::newton_step`] eliminates those
//! blocks onto the head by Schur complements, so one iteration is O(N);
//! [`MlKkt::dense_newton_step`] factors the assembled matrix and is kept as a
//! reference.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::linalg::SymmetricIndefinite;
use crate::model::{MlState, Vec3, UPPER_COLUMN_MAJOR};
use crate::simulator::Dataset;
use crate::solve::{SolveError, SolveErrorKind, SolveOptions};
use crate::Real;

/// Outcome of a constrained ML solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MlSolveReport<T: Real> {
    /// Data misfit `Σ ‖y_k − T m_k − h‖²` per iteration.
    pub objective_history: Vec<T>,
    /// `max_k |‖m_k‖² − 1|` per iteration.
    pub constraint_violation_history: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Lagrangian gradient norm at the final state.
    pub gradient_norm: T,
    pub final_state: MlState<T>,
    pub warnings: Vec<String>,
}

impl<T: Real> MlSolveReport<T> {
    pub fn final_misfit(&self) -> T {
        *self.objective_history.last().expect("history is never empty")
    }

    pub fn final_violation(&self) -> T {
        *self
            .constraint_violation_history
            .last()
            .expect("history is never empty")
    }
}

fn check_sizes<T: Real>(state: &MlState<T>, data: &Dataset<T>) -> Result<()> {
    if state.field_dirs.len() != data.len() {
        return Err(Error::SizeMismatch {
            expected: data.len(),
            actual: state.field_dirs.len(),
        });
    }
    if state.lagrange.len() != data.len() {
        return Err(Error::SizeMismatch {
            expected: data.len(),
            actual: state.lagrange.len(),
        });
    }
    Ok(())
}

/// Returns `(misfit, lagrangian)`.
pub fn ml_objective<T: Real>(state: &MlState<T>, data: &Dataset<T>) -> Result<(T, T)> {
    check_sizes(state, data)?;
    let t = state.t_matrix;
    let mut misfit = T::zero();
    let mut penalty = T::zero();
    for ((y, m), &lam) in data.samples.iter().zip(&state.field_dirs).zip(&state.lagrange) {
        misfit += (y - t.mul_vec(m) - state.offset).norm_squared();
        penalty += lam * (m.norm_squared() - T::one());
    }
    Ok((misfit, misfit + penalty))
}

/// Gradient and Hessian of the Lagrangian in arrowhead form.
///
/// Head coordinates are the six column-stacked free entries of `T` followed
/// by `h`. Full-vector layout is `[head (9), m_1 … m_N (3N), λ_1 … λ_N (N)]`.
#[derive(Debug, Clone)]
pub struct MlKkt<T: Real> {
    pub head_gradient: SVector<T, 9>,
    pub head_hessian: SMatrix<T, 9, 9>,
    pub samples: Vec<SampleBlock<T>>,
}

/// Per-sample rows of the KKT system.
#[derive(Debug, Clone)]
pub struct SampleBlock<T: Real> {
    /// `∂f/∂m_k = −2 Tᵀ r_k + 2 λ_k m_k`.
    pub grad_m: Vec3<T>,
    /// `∂f/∂λ_k = ‖m_k‖² − 1`.
    pub grad_lambda: T,
    /// `∂²f/∂(T,h)∂m_k`.
    pub coupling: SMatrix<T, 9, 3>,
    /// `2 TᵀT + 2 λ_k I`.
    pub hess_mm: Matrix3<T>,
    /// `2 m_k`.
    pub hess_ml: Vec3<T>,
}

impl<T: Real> SampleBlock<T> {
    fn kkt_block(&self) -> DMatrix<T> {
        let mut k = DMatrix::zeros(4, 4);
        k.view_mut((0, 0), (3, 3)).copy_from(&self.hess_mm);
        for i in 0..3 {
            k[(i, 3)] = self.hess_ml[i];
            k[(3, i)] = self.hess_ml[i];
        }
        k
    }
}

/// Assembles the arrowhead gradient and Hessian at `state`.
pub fn ml_kkt_system<T: Real>(state: &MlState<T>, data: &Dataset<T>) -> Result<MlKkt<T>> {
    check_sizes(state, data)?;
    let two = T::lit(2.0);
    let t = state.t_matrix.to_matrix();
    let tt2 = t.transpose() * t * two;
    let h = state.offset;
    let mut hg = SVector::<T, 9>::zeros();
    let mut hh = SMatrix::<T, 9, 9>::zeros();
    let mut samples = Vec::with_capacity(data.len());

    for ((y, m), &lam) in data.samples.iter().zip(&state.field_dirs).zip(&state.lagrange) {
        let r = y - h - t * m;
        for (p, &(i, j)) in UPPER_COLUMN_MAJOR.iter().enumerate() {
            hg[p] -= two * m[j] * r[i];
            for (q, &(k, l)) in UPPER_COLUMN_MAJOR.iter().enumerate().skip(p) {
                if i == k {
                    hh[(p, q)] += two * m[j] * m[l];
                }
            }
            hh[(p, 6 + i)] += two * m[j];
        }
        for a in 0..3 {
            hg[6 + a] -= two * r[a];
        }

        let mut coupling = SMatrix::<T, 9, 3>::zeros();
        for (p, &(i, j)) in UPPER_COLUMN_MAJOR.iter().enumerate() {
            for c in 0..3 {
                let mut v = two * m[j] * t[(i, c)];
                if j == c {
                    v -= two * r[i];
                }
                coupling[(p, c)] = v;
            }
        }
        for a in 0..3 {
            for c in 0..3 {
                coupling[(6 + a, c)] = two * t[(a, c)];
            }
        }

        samples.push(SampleBlock {
            grad_m: (t.transpose() * r) * -two + m * (two * lam),
            grad_lambda: m.norm_squared() - T::one(),
            coupling,
            hess_mm: tt2 + Matrix3::identity() * (two * lam),
            hess_ml: m * two,
        });
    }
    let n2 = two * T::lit(data.len() as f64);
    for a in 0..3 {
        hh[(6 + a, 6 + a)] = n2;
    }
    for p in 0..9 {
        for q in 0..p {
            hh[(p, q)] = hh[(q, p)];
        }
    }
    Ok(MlKkt {
        head_gradient: hg,
        head_hessian: hh,
        samples,
    })
}

impl<T: Real> MlKkt<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        4 * self.len() + 9
    }

    /// Full gradient in the `[head, m_1 … m_N, λ_1 … λ_N]` layout.
    pub fn gradient(&self) -> DVector<T> {
        let n = self.len();
        let mut g = DVector::zeros(self.dim());
        g.rows_mut(0, 9).copy_from(&self.head_gradient);
        for (k, s) in self.samples.iter().enumerate() {
            g.fixed_rows_mut::<3>(9 + 3 * k).copy_from(&s.grad_m);
            g[9 + 3 * n + k] = s.grad_lambda;
        }
        g
    }

    pub fn gradient_norm(&self) -> T {
        let mut sq = self.head_gradient.norm_squared();
        for s in &self.samples {
            sq += s.grad_m.norm_squared() + s.grad_lambda * s.grad_lambda;
        }
        sq.sqrt()
    }

    /// Assembled `(4N+9)×(4N+9)` Hessian.
    pub fn dense_hessian(&self) -> DMatrix<T> {
        let n = self.len();
        let mut hm = DMatrix::zeros(self.dim(), self.dim());
        hm.view_mut((0, 0), (9, 9)).copy_from(&self.head_hessian);
        for (k, s) in self.samples.iter().enumerate() {
            let mk = 9 + 3 * k;
            let lk = 9 + 3 * n + k;
            hm.view_mut((0, mk), (9, 3)).copy_from(&s.coupling);
            hm.view_mut((mk, 0), (3, 9)).copy_from(&s.coupling.transpose());
            hm.view_mut((mk, mk), (3, 3)).copy_from(&s.hess_mm);
            for i in 0..3 {
                hm[(mk + i, lk)] = s.hess_ml[i];
                hm[(lk, mk + i)] = s.hess_ml[i];
            }
        }
        hm
    }

    /// Newton step `H⁻¹ g` by Schur-complement elimination of the per-sample
    /// blocks; cost is linear in the number of samples.
    pub fn newton_step(&self) -> Result<DVector<T>> {
        let n = self.len();
        let mut schur = self.head_hessian;
        let mut rhs = self.head_gradient;
        // K_k⁻¹ B_kᵀ and K_k⁻¹ g_k per sample for the back substitution.
        let mut eliminated: Vec<(SMatrix<T, 4, 9>, SVector<T, 4>)> = Vec::with_capacity(n);

        for s in &self.samples {
            let factor = SymmetricIndefinite::new(&s.kkt_block())?;
            let mut b = DMatrix::zeros(4, 10);
            b.view_mut((0, 0), (3, 9)).copy_from(&s.coupling.transpose());
            b.view_mut((0, 9), (3, 1)).copy_from(&s.grad_m);
            b[(3, 9)] = s.grad_lambda;
            let sol = factor.solve_matrix(&b);
            let x: SMatrix<T, 4, 9> = sol.fixed_view::<4, 9>(0, 0).into_owned();
            let y: SVector<T, 4> = sol.fixed_view::<4, 1>(0, 9).into_owned();
            // B_k = [coupling, 0]: only the m rows of X and y contribute.
            let xm = x.fixed_rows::<3>(0);
            schur -= s.coupling * xm;
            rhs -= s.coupling * y.fixed_rows::<3>(0);
            eliminated.push((x, y));
        }

        let schur_dense = DMatrix::from_iterator(9, 9, schur.iter().copied());
        let head_step = SymmetricIndefinite::new(&schur_dense)?
            .solve(&DVector::from_column_slice(rhs.as_slice()));
        let head = SVector::<T, 9>::from_column_slice(head_step.as_slice());

        let mut step = DVector::zeros(self.dim());
        step.rows_mut(0, 9).copy_from(&head);
        for (k, (x, y)) in eliminated.iter().enumerate() {
            let z = y - x * head;
            step.fixed_rows_mut::<3>(9 + 3 * k).copy_from(&z.fixed_rows::<3>(0));
            step[9 + 3 * n + k] = z[3];
        }
        Ok(step)
    }

    /// Newton step from factoring the assembled dense Hessian.
    pub fn dense_newton_step(&self) -> Result<DVector<T>> {
        Ok(SymmetricIndefinite::new(&self.dense_hessian())?.solve(&self.gradient()))
    }
}

/// Applies `x ← x − step` in the full-vector layout.
pub fn apply_step<T: Real>(state: &MlState<T>, step: &DVector<T>) -> MlState<T> {
    let n = state.len();
    let mut t = state.t_matrix.to_vec();
    for (p, tp) in t.iter_mut().enumerate() {
        *tp -= step[p];
    }
    let offset = state.offset - Vector3::new(step[6], step[7], step[8]);
    let field_dirs = state
        .field_dirs
        .iter()
        .enumerate()
        .map(|(k, m)| m - step.fixed_rows::<3>(9 + 3 * k))
        .collect();
    let lagrange = state
        .lagrange
        .iter()
        .enumerate()
        .map(|(k, l)| *l - step[9 + 3 * n + k])
        .collect();
    MlState {
        t_matrix: crate::model::UpperTriangular3::from_vec(&t),
        offset,
        field_dirs,
        lagrange,
    }
}

/// Which linear solver produces the Newton step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepMethod {
    /// Schur-complement elimination, O(N) per iteration.
    #[default]
    BlockElimination,
    /// Dense factorization of the `(4N+9)` Hessian, O(N³) per iteration.
    Dense,
}

/// Newton iteration on the Lagrangian from `init`.
pub fn solve_ml<T: Real>(
    data: &Dataset<T>,
    init: &MlState<T>,
    opts: &SolveOptions<T>,
) -> std::result::Result<MlSolveReport<T>, SolveError<MlSolveReport<T>>> {
    solve_ml_with(data, init, opts, StepMethod::BlockElimination)
}

/// [`solve_ml`] with an explicit choice of step solver.
///
/// Exits with `converged` once the Lagrangian gradient norm is at most
/// `gradient_tolerance · (1 + misfit)` or a step shorter than
/// `step_tolerance` has been taken.
pub fn solve_ml_with<T: Real>(
    data: &Dataset<T>,
    init: &MlState<T>,
    opts: &SolveOptions<T>,
    method: StepMethod,
) -> std::result::Result<MlSolveReport<T>, SolveError<MlSolveReport<T>>> {
    let mut report = MlSolveReport {
        objective_history: Vec::new(),
        constraint_violation_history: Vec::new(),
        iterations: 0,
        converged: false,
        gradient_norm: T::zero(),
        final_state: init.clone(),
        warnings: Vec::new(),
    };
    let fail = |kind, mut report: MlSolveReport<T>| {
        if report.objective_history.is_empty() {
            report.objective_history.push(T::nan());
            report.constraint_violation_history.push(T::nan());
        }
        Err(SolveError { kind, report })
    };
    let (mut misfit, _) = match ml_objective(init, data) {
        Ok(v) => v,
        Err(_) => return fail(SolveErrorKind::SizeMismatch, report),
    };
    report.objective_history.push(misfit);
    report
        .constraint_violation_history
        .push(init.constraint_violation());
    if !misfit.is_finite() || !init.is_finite() {
        return fail(SolveErrorKind::NonFinite, report);
    }

    let mut state = init.clone();
    loop {
        let kkt = ml_kkt_system(&state, data).expect("sizes checked");
        report.gradient_norm = kkt.gradient_norm();
        if !report.gradient_norm.is_finite() {
            return fail(SolveErrorKind::NonFinite, report);
        }
        if report.gradient_norm <= opts.gradient_tolerance * (T::one() + misfit) {
            report.converged = true;
            break;
        }
        if report.iterations >= opts.max_iterations {
            break;
        }
        let step = match method {
            StepMethod::BlockElimination => kkt.newton_step(),
            StepMethod::Dense => kkt.dense_newton_step(),
        };
        let step = match step {
            Ok(s) => s,
            Err(_) => return fail(SolveErrorKind::SingularHessian, report),
        };
        state = apply_step(&state, &step);
        report.iterations += 1;
        if !state.is_finite() {
            return fail(SolveErrorKind::NonFinite, report);
        }
        misfit = ml_objective(&state, data).expect("sizes checked").0;
        report.objective_history.push(misfit);
        report
            .constraint_violation_history
            .push(state.constraint_violation());
        report.final_state = state.clone();
        if step.norm() <= opts.step_tolerance {
            report.gradient_norm = ml_kkt_system(&state, data)
                .expect("sizes checked")
                .gradient_norm();
            report.converged = true;
            break;
        }
    }
    if !report.final_state.t_matrix.has_positive_diagonal() {
        report
            .warnings
            .push("estimated T has a non-positive diagonal entry".to_string());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::UpperTriangular3;

    fn unit_data() -> Dataset<f64> {
        let s = 0.5f64.sqrt();
        Dataset::from_samples(vec![
            Vector3::x(),
            Vector3::y(),
            Vector3::z(),
            Vector3::new(s, s, 0.0),
            Vector3::new(0.0, -s, s),
            -Vector3::x(),
        ])
        .unwrap()
    }

    fn identity_state(d: &Dataset<f64>) -> MlState<f64> {
        MlState {
            t_matrix: UpperTriangular3::identity(),
            offset: Vector3::zeros(),
            field_dirs: d.samples.iter().map(|y| y.normalize()).collect(),
            lagrange: vec![0.0; d.len()],
        }
    }

    #[test]
    fn exact_state_has_zero_misfit() {
        let d = unit_data();
        let s = identity_state(&d);
        let (misfit, lag) = ml_objective(&s, &d).unwrap();
        assert!(misfit < 1e-30 && lag.abs() < 1e-15);
        assert!(s.constraint_violation() < 1e-15);
        let kkt = ml_kkt_system(&s, &d).unwrap();
        assert!(kkt.samples.iter().all(|b| b.grad_lambda.abs() < 1e-15));
    }

    #[test]
    fn hh_block_is_2n_identity() {
        let d = unit_data();
        let kkt = ml_kkt_system(&identity_state(&d), &d).unwrap();
        let hh = kkt.head_hessian.fixed_view::<3, 3>(6, 6).into_owned();
        assert_eq!(hh, Matrix3::identity() * (2.0 * d.len() as f64));
    }

    #[test]
    fn size_mismatch() {
        let d = unit_data();
        let mut s = identity_state(&d);
        s.lagrange.pop();
        assert_eq!(
            ml_objective(&s, &d).unwrap_err(),
            Error::SizeMismatch {
                expected: 6,
                actual: 5
            }
        );
        let err = solve_ml(&d, &s, &SolveOptions::default()).unwrap_err();
        assert_eq!(err.kind, SolveErrorKind::SizeMismatch);
    }

    #[test]
    fn converges_immediately_at_solution() {
        let d = unit_data();
        let rep = solve_ml(&d, &identity_state(&d), &SolveOptions::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
        assert!(rep.warnings.is_empty());
    }

    #[test]
    fn apply_step_layout() {
        let d = unit_data();
        let s = identity_state(&d);
        let mut step = DVector::zeros(s.dim());
        step[0] = 0.5; // t11
        step[7] = 1.0; // h_y
        step[9 + 3] = 2.0; // m_2.x
        step[9 + 3 * 6 + 5] = -3.0; // λ_6
        let n = apply_step(&s, &step);
        assert_eq!(n.t_matrix.get(0, 0), 0.5);
        assert_eq!(n.offset, Vector3::new(0.0, -1.0, 0.0));
        assert_eq!(n.field_dirs[1], Vector3::new(-2.0, 1.0, 0.0));
        assert_eq!(n.lagrange[5], 3.0);
    }
}
