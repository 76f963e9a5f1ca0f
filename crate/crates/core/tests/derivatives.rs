//! Analytic derivatives against central finite differences.

mod common;

use common::*;
use magcal::ml::apply_step;
use magcal::nm::{nm_gradient_hessian, nm_objective};
use magcal::{ml_kkt_system, ml_objective, CalibrationParams, MlState};
use magcal::simulator::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const INSTANCES: u64 = 100;

fn nm_fd_gradient(p: &CalibrationParams<f64>, d: &Dataset<f64>) -> DVector<f64> {
    let x = p.to_vector();
    DVector::from_fn(9, |i, _| {
        let h = 1e-6 * x[i].abs().max(1.0);
        let (mut xp, mut xm) = (x, x);
        xp[i] += h;
        xm[i] -= h;
        (nm_objective(&CalibrationParams::from_vector(&xp), d)
            - nm_objective(&CalibrationParams::from_vector(&xm), d))
            / (2.0 * h)
    })
}

fn nm_fd_hessian(p: &CalibrationParams<f64>, d: &Dataset<f64>) -> DMatrix<f64> {
    let x = p.to_vector();
    let mut out = DMatrix::zeros(9, 9);
    for j in 0..9 {
        let h = 1e-6 * x[j].abs().max(1.0);
        let (mut xp, mut xm) = (x, x);
        xp[j] += h;
        xm[j] -= h;
        let gp = nm_gradient_hessian(&CalibrationParams::from_vector(&xp), d).0;
        let gm = nm_gradient_hessian(&CalibrationParams::from_vector(&xm), d).0;
        out.set_column(j, &DVector::from_column_slice(((gp - gm) / (2.0 * h)).as_slice()));
    }
    out
}

fn shift(state: &MlState<f64>, j: usize, h: f64) -> MlState<f64> {
    let mut e = DVector::zeros(state.dim());
    e[j] = -h;
    apply_step(state, &e)
}

fn ml_fd_gradient(s: &MlState<f64>, d: &Dataset<f64>) -> DVector<f64> {
    let lag = |st: &MlState<f64>| ml_objective(st, d).unwrap().1;
    DVector::from_fn(s.dim(), |j, _| {
        let h = 1e-6;
        (lag(&shift(s, j, h)) - lag(&shift(s, j, -h))) / (2.0 * h)
    })
}

#[test]
fn nm_gradient_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let truth = random_params(&mut r);
        let n = r.random_range(10..40);
        let d = random_dataset(&mut r, &truth, n, 0.05);
        let p = random_params(&mut r);
        let g = nm_gradient_hessian(&p, &d).0;
        let g = DVector::from_column_slice(g.as_slice());
        worst = worst.max(rel_err(&g, &nm_fd_gradient(&p, &d)));
    }
    assert!(worst <= 1e-6, "worst relative error {worst:e}");
}

#[test]
fn nm_hessian_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut r = rng(1000 + seed);
        let truth = random_params(&mut r);
        let n = r.random_range(10..40);
        let d = random_dataset(&mut r, &truth, n, 0.05);
        let p = random_params(&mut r);
        let hess = nm_gradient_hessian(&p, &d).1;
        let hess = DMatrix::from_column_slice(9, 9, hess.as_slice());
        let fd = nm_fd_hessian(&p, &d);
        worst = worst.max((&hess - &fd).norm() / fd.norm());
    }
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

#[test]
fn ml_gradient_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut r = rng(2000 + seed);
        let truth = random_params(&mut r);
        let n = r.random_range(5..20);
        let d = random_dataset(&mut r, &truth, n, 0.05);
        let s = random_ml_state(&mut r, &truth, &d);
        let g = ml_kkt_system(&s, &d).unwrap().gradient();
        worst = worst.max(rel_err(&g, &ml_fd_gradient(&s, &d)));
    }
    assert!(worst <= 1e-6, "worst relative error {worst:e}");
}

#[test]
fn ml_hessian_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut r = rng(3000 + seed);
        let truth = random_params(&mut r);
        let d = random_dataset(&mut r, &truth, 8, 0.05);
        let s = random_ml_state(&mut r, &truth, &d);
        let hess = ml_kkt_system(&s, &d).unwrap().dense_hessian();
        let mut fd = DMatrix::zeros(s.dim(), s.dim());
        for j in 0..s.dim() {
            let gp = ml_kkt_system(&shift(&s, j, 1e-6), &d).unwrap().gradient();
            let gm = ml_kkt_system(&shift(&s, j, -1e-6), &d).unwrap().gradient();
            fd.set_column(j, &((gp - gm) / 2e-6));
        }
        worst = worst.max((&hess - &fd).norm() / fd.norm());
    }
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

#[test]
fn ml_gradient_vanishes_at_noise_free_truth() {
    let mut r = rng(77);
    let truth = random_params(&mut r);
    let d = random_dataset(&mut r, &truth, 25, 0.0);
    let s = magcal::initial_ml_state(&truth, &d).unwrap();
    let g = ml_kkt_system(&s, &d).unwrap().gradient();
    assert!(g.norm() < 1e-12, "{}", g.norm());
}
