use magcal::experiments::{run_monte_carlo, run_sensitivity};
use magcal::init_fit::initial_estimate;
use magcal::nm::solve_nm;
use magcal::simulator::{SensorTruth, SimulationConfig};
use magcal::{error_metrics, initial_ml_state, reference_trajectory, simulate, solve_ml, SolveOptions};

#[test]
fn both_solvers_converge_quickly_on_the_reference_scenario() {
    let truth = SensorTruth::<f64>::reference_default();
    let data = simulate(&truth, &reference_trajectory(300).unwrap(), 42);
    let (init, _) = initial_estimate(&data).unwrap();
    let opts = SolveOptions::default();

    let nm = solve_nm(&data, &init, &opts).unwrap();
    assert!(nm.converged);
    assert!(nm.iterations <= 5, "{}", nm.iterations);
    let h = &nm.objective_history;
    assert!(h[h.len() - 1] <= h[h.len() - 2] + 1e-15);
    assert!(nm.final_objective() < 0.018);

    let ml = solve_ml(&data, &initial_ml_state(&init, &data).unwrap(), &opts).unwrap();
    assert!(ml.converged);
    assert!(ml.iterations <= 5, "{}", ml.iterations);
    assert!(ml.final_misfit() < 0.004);
    assert!(ml.final_violation() <= 1e-8);
    assert!(ml.warnings.is_empty());
    // the initial misfit is zero by construction
    assert!(ml.objective_history[0] < 1e-20);
}

#[test]
fn estimators_agree_on_well_excited_data() {
    let truth = SensorTruth::<f64>::reference_default();
    let data = simulate(&truth, &reference_trajectory(300).unwrap(), 3);
    let (init, _) = initial_estimate(&data).unwrap();
    let opts = SolveOptions::default();
    let nm = solve_nm(&data, &init, &opts).unwrap().final_params;
    let ml = solve_ml(&data, &initial_ml_state(&init, &data).unwrap(), &opts)
        .unwrap()
        .final_state
        .params()
        .unwrap();
    let m = error_metrics(&nm, &ml).unwrap();
    assert!(m.scale_pct < 0.05 && m.ortho_deg < 0.05 && m.hard_iron_gauss < 1e-3, "{m:?}");
}

#[test]
fn exact_start_takes_no_steps() {
    let truth = SensorTruth::<f64>::reference_default().with_sigma(0.0);
    let data = simulate(&truth, &reference_trajectory(300).unwrap(), 0);
    let p = truth.calibration_params();
    let opts = SolveOptions::default();
    let nm = solve_nm(&data, &p, &opts).unwrap();
    assert!(nm.converged);
    assert_eq!(nm.iterations, 0);
    assert_eq!(nm.final_params, p);
    let ml = solve_ml(&data, &initial_ml_state(&p, &data).unwrap(), &opts).unwrap();
    assert!(ml.converged);
    assert!(ml.iterations <= 1);
    let m = error_metrics(&ml.final_state.params().unwrap(), &p).unwrap();
    assert!(m.max_component() < 1e-10);
}

#[test]
fn single_precision_smoke() {
    let truth = SensorTruth::<f32>::reference_default();
    let data = simulate(&truth, &reference_trajectory::<f32>(300).unwrap(), 1);
    let (init, _) = initial_estimate(&data).unwrap();
    let opts = SolveOptions::<f32>::default();
    let nm = solve_nm(&data, &init, &opts).unwrap();
    assert!(nm.iterations <= 10);
    let e = error_metrics(&nm.final_params, &truth.calibration_params()).unwrap();
    assert!(e.scale_pct < 0.5 && e.ortho_deg < 0.5 && e.hard_iron_gauss < 0.01, "{e:?}");

    let ml = solve_ml(&data, &initial_ml_state(&init, &data).unwrap(), &opts).unwrap();
    let e = error_metrics(&ml.final_state.params().unwrap(), &truth.calibration_params()).unwrap();
    assert!(e.scale_pct < 0.5 && e.ortho_deg < 0.5 && e.hard_iron_gauss < 0.01, "{e:?}");
    assert!(ml.final_violation() < 1e-4);
}

#[test]
fn monte_carlo_is_deterministic_across_thread_counts() {
    let cfg = SimulationConfig::default();
    let opts = SolveOptions::default();
    let a = run_monte_carlo::<f64>(&cfg, 6, 9, &opts).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| run_monte_carlo::<f64>(&cfg, 6, 9, &opts).unwrap());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = run_monte_carlo::<f64>(&cfg, 6, 10, &opts).unwrap();
    assert_ne!(a.runs[0].nm.final_objective, c.runs[0].nm.final_objective);
}

#[test]
fn sensitivity_is_deterministic_and_clean_at_zero() {
    let cfg = SimulationConfig::default();
    let opts = SolveOptions::default();
    let run = || run_sensitivity::<f64>(&cfg, &[0.0, 0.02], 4, 0.018, 0.004, 1, &opts).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.nm_divergences[0], 0);
    assert_eq!(a.ml_divergences[0], 0);
    assert_eq!(a.rows.len(), 8);
    assert!(a.nm_divergences.iter().chain(&a.ml_divergences).all(|&c| c <= 4));
}

#[test]
fn single_noise_free_run_is_exact() {
    let cfg = SimulationConfig { sigma: 0.0, ..Default::default() };
    let r = run_monte_carlo::<f64>(&cfg, 1, 0, &SolveOptions::default()).unwrap();
    for m in [r.runs[0].nm.metrics.unwrap(), r.runs[0].ml.metrics.unwrap()] {
        assert!(m.max_component() <= 1e-4, "{m:?}");
    }
}
