//! Monte-Carlo accuracy, initial-error sensitivity and timing studies.
//!
//! Every run draws from its own ChaCha8 stream derived from the master seed
//! and the run index, so results do not depend on how runs are scheduled
//! across worker threads.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init_fit::{initial_estimate, initial_ml_state};
use crate::metrics::{error_metrics, ErrorMetrics};
use crate::ml::{solve_ml_with, StepMethod};
use crate::model::{CalibrationParams, UpperTriangular3};
use crate::nm::solve_nm;
use crate::simulator::{simulate_with_rng, Dataset, SimulationConfig};
use crate::solve::SolveOptions;
use crate::Real;

/// Divergence threshold on the final norm-based objective (reference scenario).
pub const NM_DIVERGENCE_THRESHOLD: f64 = 0.018;
/// Divergence threshold on the final ML misfit (reference scenario).
pub const ML_DIVERGENCE_THRESHOLD: f64 = 0.004;
/// Perturbation grid of the sensitivity sweep, 0 % to 7 %.
pub const DEFAULT_ALPHAS: [f64; 8] = [0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07];

const SIGN_STREAM_OFFSET: u64 = 1 << 32;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Multiplies every entry of `R` and `h` by `1 ± alpha` with random signs.
pub fn perturb_initial_with_rng<T: Real, G: Rng + ?Sized>(
    params: &CalibrationParams<T>,
    alpha: T,
    rng: &mut G,
) -> CalibrationParams<T> {
    let mut sign = || if rng.random::<bool>() { T::one() } else { -T::one() };
    let mut shape = UpperTriangular3([T::zero(); 6]);
    // Signs are drawn for all nine entries; the structural zeros stay zero.
    for i in 0..3 {
        for j in 0..3 {
            let s = sign();
            if i <= j {
                shape.set(i, j, params.shape.get(i, j) * (T::one() + alpha * s));
            }
        }
    }
    let mut offset = params.offset;
    for h in offset.iter_mut() {
        *h *= T::one() + alpha * sign();
    }
    CalibrationParams { shape, offset }
}

pub fn perturb_initial<T: Real>(params: &CalibrationParams<T>, alpha: T, seed: u64) -> CalibrationParams<T> {
    perturb_initial_with_rng(params, alpha, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    NotConverged,
    SingularHessian,
    NonFinite,
    InitFailure,
}

/// One estimator's result in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome<T> {
    pub status: RunStatus,
    pub iterations: usize,
    /// Final norm-based objective or ML misfit; NaN when unavailable.
    pub final_objective: T,
    pub objective_history: Vec<T>,
    pub metrics: Option<ErrorMetrics<T>>,
    /// ML only: final `max_k |‖m_k‖² − 1|`.
    pub constraint_violation: Option<T>,
}

impl<T: Real> MethodOutcome<T> {
    fn init_failure() -> Self {
        Self {
            status: RunStatus::InitFailure,
            iterations: 0,
            final_objective: T::nan(),
            objective_history: Vec::new(),
            metrics: None,
            constraint_violation: None,
        }
    }

    pub fn is_converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    /// Solver errors and objectives above `threshold` count as divergence.
    pub fn diverged(&self, threshold: T) -> bool {
        match self.status {
            RunStatus::Converged | RunStatus::NotConverged => {
                !(self.final_objective <= threshold)
            }
            _ => true,
        }
    }
}

fn status_from(kind: crate::solve::SolveErrorKind) -> RunStatus {
    match kind {
        crate::solve::SolveErrorKind::SingularHessian => RunStatus::SingularHessian,
        _ => RunStatus::NonFinite,
    }
}

/// Runs the norm-based solver from `init` and scores it against `truth`.
pub fn run_nm<T: Real>(
    data: &Dataset<T>,
    init: &CalibrationParams<T>,
    truth: &CalibrationParams<T>,
    opts: &SolveOptions<T>,
) -> MethodOutcome<T> {
    match solve_nm(data, init, opts) {
        Ok(rep) => MethodOutcome {
            status: if rep.converged {
                RunStatus::Converged
            } else {
                RunStatus::NotConverged
            },
            iterations: rep.iterations,
            final_objective: rep.final_objective(),
            metrics: error_metrics(&rep.final_params, truth).ok(),
            objective_history: rep.objective_history,
            constraint_violation: None,
        },
        Err(e) => MethodOutcome {
            status: status_from(e.kind),
            iterations: e.report.iterations,
            final_objective: T::nan(),
            objective_history: e.report.objective_history,
            metrics: None,
            constraint_violation: None,
        },
    }
}

/// Runs the ML solver from the state induced by `init` and scores it.
pub fn run_ml<T: Real>(
    data: &Dataset<T>,
    init: &CalibrationParams<T>,
    truth: &CalibrationParams<T>,
    opts: &SolveOptions<T>,
    method: StepMethod,
) -> MethodOutcome<T> {
    let state = match initial_ml_state(init, data) {
        Ok(s) => s,
        Err(_) => return MethodOutcome::init_failure(),
    };
    match solve_ml_with(data, &state, opts, method) {
        Ok(rep) => MethodOutcome {
            status: if rep.converged {
                RunStatus::Converged
            } else {
                RunStatus::NotConverged
            },
            iterations: rep.iterations,
            final_objective: rep.final_misfit(),
            metrics: rep
                .final_state
                .params()
                .ok()
                .and_then(|p| error_metrics(&p, truth).ok()),
            constraint_violation: Some(rep.final_violation()),
            objective_history: rep.objective_history,
        },
        Err(e) => MethodOutcome {
            status: status_from(e.kind),
            iterations: e.report.iterations,
            final_objective: T::nan(),
            objective_history: e.report.objective_history,
            metrics: None,
            constraint_violation: None,
        },
    }
}

/// Both estimators on one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRun<T> {
    pub run: usize,
    pub min_eigenvalue: Option<T>,
    pub nm: MethodOutcome<T>,
    pub ml: MethodOutcome<T>,
}

/// Mean and sample standard deviation of each metric over runs that
/// produced metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary<T> {
    pub count: usize,
    pub mean: ErrorMetrics<T>,
    pub std: ErrorMetrics<T>,
}

impl<T: Real> MetricSummary<T> {
    pub fn from_metrics<'a>(items: impl IntoIterator<Item = &'a ErrorMetrics<T>>) -> Self
    where
        T: 'a,
    {
        let items: Vec<&ErrorMetrics<T>> = items.into_iter().collect();
        let cols: [Vec<T>; 3] = [
            items.iter().map(|m| m.scale_pct).collect(),
            items.iter().map(|m| m.ortho_deg).collect(),
            items.iter().map(|m| m.hard_iron_gauss).collect(),
        ];
        let stats = cols.map(|c| mean_std(&c));
        Self {
            count: items.len(),
            mean: ErrorMetrics {
                scale_pct: stats[0].0,
                ortho_deg: stats[1].0,
                hard_iron_gauss: stats[2].0,
            },
            std: ErrorMetrics {
                scale_pct: stats[0].1,
                ortho_deg: stats[1].1,
                hard_iron_gauss: stats[2].1,
            },
        }
    }
}

fn mean_std<T: Real>(xs: &[T]) -> (T, T) {
    if xs.is_empty() {
        return (T::nan(), T::nan());
    }
    let n = T::lit(xs.len() as f64);
    let mean = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    if xs.len() < 2 {
        return (mean, T::zero());
    }
    let var = xs.iter().fold(T::zero(), |a, &x| a + (x - mean) * (x - mean)) / (n - T::one());
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult<T> {
    pub seed: u64,
    pub runs: Vec<MonteCarloRun<T>>,
    pub nm_summary: MetricSummary<T>,
    pub ml_summary: MetricSummary<T>,
}

impl<T: Real> MonteCarloResult<T> {
    fn from_runs(seed: u64, runs: Vec<MonteCarloRun<T>>) -> Self {
        let nm_summary = MetricSummary::from_metrics(runs.iter().filter_map(|r| r.nm.metrics.as_ref()));
        let ml_summary = MetricSummary::from_metrics(runs.iter().filter_map(|r| r.ml.metrics.as_ref()));
        Self {
            seed,
            runs,
            nm_summary,
            ml_summary,
        }
    }
}

/// Repeats the scenario `runs` times with fresh noise on a fixed trajectory,
/// solving both estimators from the ellipsoid-fit initializer.
pub fn run_monte_carlo<T: Real>(
    config: &SimulationConfig,
    runs: usize,
    seed: u64,
    opts: &SolveOptions<T>,
) -> Result<MonteCarloResult<T>> {
    if runs == 0 {
        return Err(Error::InvalidInput("run count must be at least 1".into()));
    }
    let truth = config.truth::<T>()?;
    let traj = config.trajectory::<T>()?;
    let true_params = truth.calibration_params();

    let rows = (0..runs)
        .into_par_iter()
        .map(|run| {
            let data = simulate_with_rng(&truth, &traj, &mut stream_rng(seed, run as u64));
            match initial_estimate(&data) {
                Ok((init, fit)) => MonteCarloRun {
                    run,
                    min_eigenvalue: Some(fit.min_eigenvalue),
                    nm: run_nm(&data, &init, &true_params, opts),
                    ml: run_ml(&data, &init, &true_params, opts, StepMethod::BlockElimination),
                },
                Err(_) => MonteCarloRun {
                    run,
                    min_eigenvalue: None,
                    nm: MethodOutcome::init_failure(),
                    ml: MethodOutcome::init_failure(),
                },
            }
        })
        .collect();
    Ok(MonteCarloResult::from_runs(seed, rows))
}

/// One `(alpha, run)` cell of the sensitivity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow<T> {
    pub alpha: T,
    pub run: usize,
    pub nm_status: RunStatus,
    pub nm_final: T,
    pub nm_iterations: usize,
    pub nm_diverged: bool,
    pub ml_status: RunStatus,
    pub ml_final: T,
    pub ml_iterations: usize,
    pub ml_diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult<T> {
    pub seed: u64,
    pub runs: usize,
    pub alphas: Vec<T>,
    pub nm_threshold: T,
    pub ml_threshold: T,
    /// Divergence count per alpha, out of `runs`.
    pub nm_divergences: Vec<usize>,
    pub ml_divergences: Vec<usize>,
    pub rows: Vec<SensitivityRow<T>>,
}

/// Perturbs the initializer by each `alpha` and counts divergent solves.
///
/// Run `r` uses the same noise realization and the same sign pattern for
/// every alpha, so the sweep scales one perturbation direction per run.
pub fn run_sensitivity<T: Real>(
    config: &SimulationConfig,
    alphas: &[T],
    runs: usize,
    nm_threshold: T,
    ml_threshold: T,
    seed: u64,
    opts: &SolveOptions<T>,
) -> Result<SensitivityResult<T>> {
    if runs == 0 {
        return Err(Error::InvalidInput("run count must be at least 1".into()));
    }
    if !(nm_threshold > T::zero()) || !(ml_threshold > T::zero()) {
        return Err(Error::InvalidInput("divergence thresholds must be positive".into()));
    }
    if alphas.iter().any(|a| !(*a >= T::zero()) || !a.is_finite()) {
        return Err(Error::InvalidInput("perturbation fractions must be non-negative".into()));
    }
    let truth = config.truth::<T>()?;
    let traj = config.trajectory::<T>()?;
    let true_params = truth.calibration_params();

    let per_run: Vec<Vec<SensitivityRow<T>>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let data = simulate_with_rng(&truth, &traj, &mut stream_rng(seed, run as u64));
            let init = initial_estimate(&data).ok().map(|(p, _)| p);
            alphas
                .iter()
                .map(|&alpha| {
                    let (nm, ml) = match &init {
                        Some(p) => {
                            let mut signs = stream_rng(seed, SIGN_STREAM_OFFSET + run as u64);
                            let start = perturb_initial_with_rng(p, alpha, &mut signs);
                            (
                                run_nm(&data, &start, &true_params, opts),
                                run_ml(&data, &start, &true_params, opts, StepMethod::BlockElimination),
                            )
                        }
                        None => (MethodOutcome::init_failure(), MethodOutcome::init_failure()),
                    };
                    SensitivityRow {
                        alpha,
                        run,
                        nm_status: nm.status,
                        nm_final: nm.final_objective,
                        nm_iterations: nm.iterations,
                        nm_diverged: nm.diverged(nm_threshold),
                        ml_status: ml.status,
                        ml_final: ml.final_objective,
                        ml_iterations: ml.iterations,
                        ml_diverged: ml.diverged(ml_threshold),
                    }
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(runs * alphas.len());
    let mut nm_divergences = vec![0; alphas.len()];
    let mut ml_divergences = vec![0; alphas.len()];
    for (a, _) in alphas.iter().enumerate() {
        for run_rows in &per_run {
            let row = &run_rows[a];
            nm_divergences[a] += usize::from(row.nm_diverged);
            ml_divergences[a] += usize::from(row.ml_diverged);
            rows.push(row.clone());
        }
    }
    Ok(SensitivityResult {
        seed,
        runs,
        alphas: alphas.to_vec(),
        nm_threshold,
        ml_threshold,
        nm_divergences,
        ml_divergences,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimedMethod {
    Nm,
    MlBlock,
    MlDense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    pub method: TimedMethod,
    pub median_seconds: f64,
    pub iterations: usize,
    pub per_iteration_seconds: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn time_solve<F: FnMut() -> usize>(repeats: usize, mut solve: F) -> (f64, usize) {
    let iterations = solve(); // warm-up
    let times = (0..repeats.max(1))
        .map(|_| {
            let start = Instant::now();
            solve();
            start.elapsed().as_secs_f64()
        })
        .collect();
    (median(times), iterations)
}

/// Median wall-clock solve time per sample count and method, after one
/// warm-up solve. The dense ML path is timed only for `n ≤ dense_max_n`.
///
/// Runs sequentially so that timings are not perturbed by sibling work.
pub fn run_timing(
    config: &SimulationConfig,
    n_values: &[usize],
    repeats: usize,
    dense_max_n: usize,
) -> Result<Vec<TimingRow>> {
    if n_values.is_empty() {
        return Err(Error::InvalidInput("at least one sample count is required".into()));
    }
    let opts = SolveOptions::<f64>::default();
    let mut rows = Vec::new();
    for &n in n_values {
        let cfg = SimulationConfig { n, ..config.clone() };
        let data = cfg.simulate::<f64>()?;
        let (init, _) = initial_estimate(&data)?;
        let state = initial_ml_state(&init, &data)?;

        let mut push = |method, (secs, iterations): (f64, usize)| {
            rows.push(TimingRow {
                n,
                method,
                median_seconds: secs,
                iterations,
                per_iteration_seconds: secs / iterations.max(1) as f64,
            })
        };
        push(
            TimedMethod::Nm,
            time_solve(repeats, || solve_nm(&data, &init, &opts).map_or_else(|e| e.report.iterations, |r| r.iterations)),
        );
        push(
            TimedMethod::MlBlock,
            time_solve(repeats, || {
                solve_ml_with(&data, &state, &opts, StepMethod::BlockElimination)
                    .map_or_else(|e| e.report.iterations, |r| r.iterations)
            }),
        );
        if n <= dense_max_n {
            push(
                TimedMethod::MlDense,
                time_solve(repeats, || {
                    solve_ml_with(&data, &state, &opts, StepMethod::Dense)
                        .map_or_else(|e| e.report.iterations, |r| r.iterations)
                }),
            );
        }
    }
    Ok(rows)
}
