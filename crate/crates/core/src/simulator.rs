//! Synthetic magnetometer data: `y = S C(φ,θ,ψ) m + h + e`.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{attitude_from_euler, qr_decompose, CalibrationParams, Mat3, Vec3};
use crate::Real;

/// Soft-iron matrix used by the reference scenario (row-major).
pub const DEFAULT_SOFT_IRON: [f64; 9] = [0.7, -0.8, 0.4, 1.1, 0.3, -0.1, -0.3, 0.6, 0.7];
/// Hard-iron offset of the reference scenario, Gauss.
pub const DEFAULT_HARD_IRON: [f64; 3] = [0.5, 1.7, 2.6];
/// Geomagnetic direction (North, Up, East) before renormalization.
pub const DEFAULT_FIELD: [f64; 3] = [0.7388, 0.0409, -0.6727];
pub const DEFAULT_SIGMA: f64 = 0.003;
pub const DEFAULT_SAMPLES: usize = 300;
/// Amplitude of the roll and pitch oscillations of the reference trajectory, degrees.
pub const DEFAULT_TILT_AMPLITUDE: f64 = 20.0;

/// Ground-truth sensor model.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorTruth<T: Real> {
    pub soft_iron: Mat3<T>,
    pub hard_iron: Vec3<T>,
    pub noise_sigma: T,
    /// Unit-norm field direction in the navigation frame.
    pub field: Vec3<T>,
}

impl<T: Real> SensorTruth<T> {
    /// Validates the model and renormalizes `field` to unit length.
    pub fn new(soft_iron: Mat3<T>, hard_iron: Vec3<T>, noise_sigma: T, field: Vec3<T>) -> Result<Self> {
        let finite = soft_iron.iter().chain(hard_iron.iter()).chain(field.iter()).all(|v| v.is_finite());
        if !finite || !noise_sigma.is_finite() {
            return Err(Error::InvalidInput("non-finite sensor model entry".into()));
        }
        if noise_sigma < T::zero() {
            return Err(Error::InvalidInput("noise sigma must be non-negative".into()));
        }
        let norm = field.norm();
        if norm <= T::zero() {
            return Err(Error::InvalidInput("field vector must be nonzero".into()));
        }
        qr_decompose(&soft_iron).map_err(|_| Error::InvalidInput("soft-iron matrix is singular".into()))?;
        Ok(Self {
            soft_iron,
            hard_iron,
            noise_sigma,
            field: field / norm,
        })
    }

    /// The reference scenario: fixed `S`, `h`, `σ = 0.003` and field direction.
    pub fn reference_default() -> Self {
        Self::new(
            Matrix3::from_row_slice(&DEFAULT_SOFT_IRON.map(T::lit)),
            Vector3::from(DEFAULT_HARD_IRON.map(T::lit)),
            T::lit(DEFAULT_SIGMA),
            Vector3::from(DEFAULT_FIELD.map(T::lit)),
        )
        .expect("reference scenario is valid")
    }

    pub fn with_sigma(mut self, sigma: T) -> Self {
        assert!(sigma >= T::zero());
        self.noise_sigma = sigma;
        self
    }

    /// True calibration: `R` is the triangular QR factor of `S⁻¹`.
    pub fn calibration_params(&self) -> CalibrationParams<T> {
        let inv = self.soft_iron.try_inverse().expect("validated invertible");
        let (_, r) = qr_decompose(&inv).expect("validated invertible");
        CalibrationParams::new_unchecked(r, self.hard_iron)
    }
}

/// Ordered `(φ, θ, ψ)` attitudes in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    angles: Vec<[T; 3]>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(angles: Vec<[T; 3]>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        if angles.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite trajectory angle".into()));
        }
        Ok(Self { angles })
    }

    pub fn angles(&self) -> &[[T; 3]] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Full yaw revolution with ten roll and pitch oscillations of the given
    /// amplitudes (degrees), sampled at `k = 1..=n`.
    pub fn sweep(n: usize, roll_amplitude: T, pitch_amplitude: T) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyTrajectory);
        }
        let nn = T::lit(n as f64);
        let pi = T::PI();
        let twenty = T::lit(20.0);
        let angles = (1..=n)
            .map(|k| {
                let k = T::lit(k as f64);
                let phi = roll_amplitude * (twenty * pi * k / nn + pi / T::lit(2.0)).sin();
                let theta = pitch_amplitude * (twenty * pi * k / nn).sin();
                let psi = T::lit(360.0) * k / nn;
                [phi, theta, psi]
            })
            .collect();
        Self::new(angles)
    }
}

/// Reference trajectory of `n` samples (±20° roll/pitch, one yaw turn).
pub fn reference_trajectory<T: Real>(n: usize) -> Result<Trajectory<T>> {
    let amp = T::lit(DEFAULT_TILT_AMPLITUDE);
    Trajectory::sweep(n, amp, amp)
}

/// Raw measurements, optionally with the model that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    pub samples: Vec<Vec3<T>>,
    pub truth: Option<SensorTruth<T>>,
    pub trajectory: Option<Trajectory<T>>,
}

impl<T: Real> Dataset<T> {
    pub fn from_samples(samples: Vec<Vec3<T>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InsufficientData {
                required: 1,
                actual: 0,
            });
        }
        if samples.iter().any(|y| y.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        Ok(Self {
            samples,
            truth: None,
            trajectory: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Simulates one measurement per attitude of `traj`, with noise from a
/// ChaCha8 generator seeded by `seed`.
pub fn simulate<T: Real>(truth: &SensorTruth<T>, traj: &Trajectory<T>, seed: u64) -> Dataset<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with_rng(truth, traj, &mut rng)
}

/// As [`simulate`], drawing noise from a caller-owned generator.
pub fn simulate_with_rng<T: Real, G: Rng + ?Sized>(
    truth: &SensorTruth<T>,
    traj: &Trajectory<T>,
    rng: &mut G,
) -> Dataset<T> {
    let samples = traj
        .angles()
        .iter()
        .map(|&[phi, theta, psi]| {
            let c = attitude_from_euler(phi, theta, psi);
            let clean = truth.soft_iron * (c * truth.field) + truth.hard_iron;
            if truth.noise_sigma > T::zero() {
                let e = Vector3::from_fn(|_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
                clean + e * truth.noise_sigma
            } else {
                clean
            }
        })
        .collect();
    Dataset {
        samples,
        truth: Some(truth.clone()),
        trajectory: Some(traj.clone()),
    }
}

/// JSON-serializable simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    /// Row-major soft-iron matrix.
    pub soft_iron: [f64; 9],
    pub hard_iron: [f64; 3],
    pub sigma: f64,
    pub field: [f64; 3],
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_tilt")]
    pub roll_amplitude_deg: f64,
    #[serde(default = "default_tilt")]
    pub pitch_amplitude_deg: f64,
}

fn default_format_version() -> u32 {
    1
}

fn default_tilt() -> f64 {
    DEFAULT_TILT_AMPLITUDE
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            format_version: 1,
            soft_iron: DEFAULT_SOFT_IRON,
            hard_iron: DEFAULT_HARD_IRON,
            sigma: DEFAULT_SIGMA,
            field: DEFAULT_FIELD,
            n: DEFAULT_SAMPLES,
            seed: 0,
            roll_amplitude_deg: DEFAULT_TILT_AMPLITUDE,
            pitch_amplitude_deg: DEFAULT_TILT_AMPLITUDE,
        }
    }
}

impl SimulationConfig {
    pub fn truth<T: Real>(&self) -> Result<SensorTruth<T>> {
        SensorTruth::new(
            Matrix3::from_row_slice(&self.soft_iron.map(T::lit)),
            Vector3::from(self.hard_iron.map(T::lit)),
            T::lit(self.sigma),
            Vector3::from(self.field.map(T::lit)),
        )
    }

    pub fn trajectory<T: Real>(&self) -> Result<Trajectory<T>> {
        Trajectory::sweep(
            self.n,
            T::lit(self.roll_amplitude_deg),
            T::lit(self.pitch_amplitude_deg),
        )
    }

    /// Validates the whole scenario.
    pub fn validate(&self) -> Result<()> {
        self.truth::<f64>()?;
        self.trajectory::<f64>()?;
        Ok(())
    }

    pub fn simulate<T: Real>(&self) -> Result<Dataset<T>> {
        Ok(simulate(&self.truth()?, &self.trajectory()?, self.seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_endpoints() {
        let t = reference_trajectory::<f64>(300).unwrap();
        assert_eq!(t.len(), 300);
        let [phi, theta, psi] = t.angles()[299];
        assert!((psi - 360.0).abs() < 1e-12);
        assert!((phi - 20.0).abs() < 1e-12);
        assert!(theta.abs() < 1e-12);
    }

    #[test]
    fn empty_trajectory_rejected() {
        assert_eq!(reference_trajectory::<f64>(0).unwrap_err(), Error::EmptyTrajectory);
        assert_eq!(Trajectory::<f64>::new(vec![]).unwrap_err(), Error::EmptyTrajectory);
    }

    #[test]
    fn identity_model_returns_field() {
        let field = Vector3::new(0.6, 0.0, 0.8);
        let truth = SensorTruth::new(Matrix3::identity(), Vector3::zeros(), 0.0, field).unwrap();
        let traj = Trajectory::new(vec![[0.0, 0.0, 0.0]]).unwrap();
        let d = simulate(&truth, &traj, 1);
        assert_eq!(d.samples, vec![field]);
    }

    #[test]
    fn field_is_renormalized() {
        let t = SensorTruth::<f64>::reference_default();
        assert!((t.field.norm() - 1.0).abs() < 1e-12);
        assert!((Vector3::from(DEFAULT_FIELD).norm() - 1.0000118).abs() < 1e-7);
    }

    #[test]
    fn rejects_invalid_truth() {
        let m = Matrix3::<f64>::identity();
        assert!(SensorTruth::new(m, Vector3::zeros(), -1.0, Vector3::x()).is_err());
        assert!(SensorTruth::new(m, Vector3::zeros(), 0.1, Vector3::zeros()).is_err());
        assert!(SensorTruth::new(Matrix3::zeros(), Vector3::zeros(), 0.1, Vector3::x()).is_err());
    }

    #[test]
    fn noise_free_samples_have_unit_calibrated_norm() {
        let truth = SensorTruth::<f64>::reference_default().with_sigma(0.0);
        let p = truth.calibration_params();
        let d = simulate(&truth, &reference_trajectory(300).unwrap(), 3);
        for y in &d.samples {
            let m = p.shape.mul_vec(&(y - p.offset()));
            assert!((1.0 - m.norm_squared()).abs() < 1e-10);
        }
    }

    #[test]
    fn distorted_magnitudes_spread() {
        let d = simulate(&SensorTruth::<f64>::reference_default(), &reference_trajectory(300).unwrap(), 0);
        let (lo, hi) = d.samples.iter().fold((f64::MAX, f64::MIN), |(lo, hi), y| {
            (lo.min(y.norm()), hi.max(y.norm()))
        });
        // The offset alone has norm > 3, so every raw magnitude sits far from one.
        assert!(lo > 1.5 && hi > 3.0 && hi - lo > 1.0, "range [{lo}, {hi}]");
    }

    #[test]
    fn deterministic_per_seed() {
        let truth = SensorTruth::<f64>::reference_default();
        let traj = reference_trajectory(50).unwrap();
        assert_eq!(simulate(&truth, &traj, 9), simulate(&truth, &traj, 9));
        assert_ne!(simulate(&truth, &traj, 9).samples, simulate(&truth, &traj, 10).samples);
    }

    #[test]
    fn noise_statistics() {
        let sigma = 0.01;
        let field = Vector3::new(0.0, 0.0, 1.0);
        let truth = SensorTruth::new(Matrix3::identity(), Vector3::zeros(), sigma, field).unwrap();
        let n = 100_000;
        let traj = Trajectory::new(vec![[0.0, 0.0, 0.0]; n]).unwrap();
        let d = simulate(&truth, &traj, 42);
        let errs: Vec<Vector3<f64>> = d.samples.iter().map(|y| y - field).collect();
        let mean = errs.iter().fold(Vector3::zeros(), |a, e| a + e) / n as f64;
        let bound = 5.0 * sigma / (n as f64).sqrt();
        assert!(mean.iter().all(|m| m.abs() < bound), "{mean:?}");
        let mut cov = Matrix3::zeros();
        for e in &errs {
            let c = e - mean;
            cov += c * c.transpose();
        }
        cov /= (n - 1) as f64;
        let var = sigma * sigma;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { var } else { 0.0 };
                assert!((cov[(i, j)] - target).abs() < 0.05 * var, "cov[{i},{j}] = {}", cov[(i, j)]);
            }
        }
    }

    #[test]
    fn config_roundtrip_defaults() {
        let cfg = SimulationConfig::default();
        cfg.validate().unwrap();
        let d = cfg.simulate::<f64>().unwrap();
        assert_eq!(d.len(), 300);
        let bad = SimulationConfig { n: 0, ..cfg };
        assert!(bad.validate().is_err());
    }
}
