#![allow(dead_code)]

use magcal::simulator::Dataset;
use magcal::{CalibrationParams, MlState, UpperTriangular3};
use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_params(rng: &mut ChaCha8Rng) -> CalibrationParams<f64> {
    let shape = UpperTriangular3::new(
        rng.random_range(0.5..2.0),
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        rng.random_range(0.5..2.0),
        rng.random_range(-0.5..0.5),
        rng.random_range(0.5..2.0),
    );
    let offset = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
    CalibrationParams::new(shape, offset).unwrap()
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Samples on the ellipsoid of `p` plus uniform noise of half-width `noise`.
pub fn random_dataset(rng: &mut ChaCha8Rng, p: &CalibrationParams<f64>, n: usize, noise: f64) -> Dataset<f64> {
    let t = p.shape.inverse().unwrap().to_matrix();
    let samples = (0..n)
        .map(|_| {
            let m = random_unit(rng);
            let e = Vector3::from_fn(|_, _| rng.random_range(-noise..=noise));
            t * m + p.offset() + e
        })
        .collect();
    Dataset::from_samples(samples).unwrap()
}

/// An ML state away from any stationary point: perturbed directions and
/// non-zero multipliers.
pub fn random_ml_state(rng: &mut ChaCha8Rng, p: &CalibrationParams<f64>, data: &Dataset<f64>) -> MlState<f64> {
    let t = p.shape.inverse().unwrap();
    let field_dirs = data
        .samples
        .iter()
        .map(|y| p.shape.mul_vec(&(y - p.offset())) + Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1)))
        .collect();
    let lagrange = (0..data.len()).map(|_| rng.random_range(-0.5..0.5)).collect();
    MlState {
        t_matrix: t,
        offset: p.offset() + Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1)),
        field_dirs,
        lagrange,
    }
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
