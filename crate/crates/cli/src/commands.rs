use std::fs;
use std::path::{Path, PathBuf};

use magcal::experiments::{
    run_monte_carlo, run_sensitivity, run_timing, MethodOutcome, RunStatus, TimedMethod,
};
use magcal::init_fit::{initial_estimate, EllipsoidFit};
use magcal::nm::solve_nm;
use magcal::simulator::SimulationConfig;
use magcal::{apply_calibration, error_metrics, initial_ml_state, solve_ml, ErrorMetrics, SolveOptions};
use serde::Serialize;

use crate::dataset::{read_json, read_samples, to_dataset, write_json, write_rows, write_samples};
use crate::error::{CliError, CliResult};
use crate::report::{CalibrationReportFile, Method, FORMAT_VERSION};
use crate::stats::{box_stats, histogram, mean_std, BoxStats};

/// Reports of the two estimators agree when no shape or offset entry
/// differs by more than this.
const AGREEMENT_TOLERANCE: f64 = 1e-4;

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn load_config(path: Option<&Path>) -> CliResult<SimulationConfig> {
    let config: SimulationConfig = match path {
        Some(p) => read_json(p)?,
        None => SimulationConfig::default(),
    };
    config
        .validate()
        .map_err(|e| CliError::Input(format!("invalid scenario: {e}")))?;
    Ok(config)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn simulate(config: Option<&Path>, out: &Path, seed: Option<u64>, n: Option<usize>) -> CliResult<()> {
    let mut cfg: SimulationConfig = match config {
        Some(p) => read_json(p)?,
        None => SimulationConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(n) = n {
        cfg.n = n;
    }
    cfg.validate()
        .map_err(|e| CliError::Input(format!("invalid scenario: {e}")))?;
    let data = cfg.simulate::<f64>()?;
    write_samples(out, &data.samples)?;
    let truth = cfg.truth::<f64>()?.calibration_params();
    let truth_path = sibling(out, "truth.json");
    write_json(&truth_path, &CalibrationReportFile::truth(&truth))?;
    log::info!("wrote {} samples to {} and truth to {}", data.len(), out.display(), truth_path.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Methods {
    Nm,
    Ml,
    Both,
}

/// Outcome of one estimator: the report to write and whether it failed.
struct Estimate {
    report: CalibrationReportFile,
    failure: Option<String>,
}

fn estimate_nm(data: &magcal::simulator::Dataset<f64>, fit: &EllipsoidFit<f64>, init: &magcal::CalibrationParams<f64>, digest: &str, opts: &SolveOptions<f64>) -> Estimate {
    match solve_nm(data, init, opts) {
        Ok(rep) => Estimate {
            failure: (!rep.converged).then(|| format!("NM did not converge in {} iterations", rep.iterations)),
            report: CalibrationReportFile::from_nm(&rep, fit, digest),
        },
        Err(e) => Estimate {
            failure: Some(format!("NM solver failed: {:?}", e.kind)),
            report: CalibrationReportFile::from_nm(&e.report, fit, digest),
        },
    }
}

fn estimate_ml(data: &magcal::simulator::Dataset<f64>, fit: &EllipsoidFit<f64>, init: &magcal::CalibrationParams<f64>, digest: &str, opts: &SolveOptions<f64>) -> CliResult<Estimate> {
    let state = initial_ml_state(init, data)?;
    Ok(match solve_ml(data, &state, opts) {
        Ok(rep) => Estimate {
            failure: (!rep.converged).then(|| format!("ML did not converge in {} iterations", rep.iterations)),
            report: CalibrationReportFile::from_ml(&rep, fit, digest),
        },
        Err(e) => Estimate {
            failure: Some(format!("ML solver failed: {:?}", e.kind)),
            report: CalibrationReportFile::from_ml(&e.report, fit, digest),
        },
    })
}

#[derive(Debug, Serialize)]
struct Comparison {
    format_version: u32,
    nm_ok: bool,
    ml_ok: bool,
    max_shape_difference: Option<f64>,
    max_offset_difference: Option<f64>,
    agree: bool,
    /// NM scored against ML.
    metrics: Option<ErrorMetrics<f64>>,
    preferred: Option<Method>,
}

fn compare(nm: &Estimate, ml: &Estimate) -> Comparison {
    let (nm_ok, ml_ok) = (nm.failure.is_none(), ml.failure.is_none());
    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let (shape, offset) = if nm_ok && ml_ok {
        (
            Some(max_diff(&nm.report.shape, &ml.report.shape)),
            Some(max_diff(&nm.report.offset, &ml.report.offset)),
        )
    } else {
        (None, None)
    };
    let agree = matches!((shape, offset), (Some(s), Some(o)) if s <= AGREEMENT_TOLERANCE && o <= AGREEMENT_TOLERANCE);
    let metrics = match (nm.report.params(), ml.report.params()) {
        (Ok(a), Ok(b)) if nm_ok && ml_ok => error_metrics(&a, &b).ok(),
        _ => None,
    };
    let preferred = match (nm_ok, ml_ok) {
        (_, true) if !agree => Some(Method::Ml),
        (true, false) => Some(Method::Nm),
        _ => None,
    };
    Comparison {
        format_version: FORMAT_VERSION,
        nm_ok,
        ml_ok,
        max_shape_difference: shape,
        max_offset_difference: offset,
        agree,
        metrics,
        preferred,
    }
}

pub fn calibrate(input: &Path, methods: Methods, out: &Path, opts: &SolveOptions<f64>) -> CliResult<()> {
    let loaded = read_samples(input)?;
    let data = to_dataset(loaded.samples)?;
    let (init, fit) = initial_estimate(&data)?;
    let digest = loaded.digest;

    let mut failures = Vec::new();
    match methods {
        Methods::Nm => {
            let est = estimate_nm(&data, &fit, &init, &digest, opts);
            write_json(out, &est.report)?;
            failures.extend(est.failure);
        }
        Methods::Ml => {
            let est = estimate_ml(&data, &fit, &init, &digest, opts)?;
            write_json(out, &est.report)?;
            failures.extend(est.failure);
        }
        Methods::Both => {
            let nm = estimate_nm(&data, &fit, &init, &digest, opts);
            let ml = estimate_ml(&data, &fit, &init, &digest, opts)?;
            write_json(&sibling(out, "nm.json"), &nm.report)?;
            write_json(&sibling(out, "ml.json"), &ml.report)?;
            let cmp = compare(&nm, &ml);
            write_json(&sibling(out, "comparison.json"), &cmp)?;
            if !cmp.agree {
                log::warn!("NM and ML estimates disagree; preferred: {:?}", cmp.preferred);
            }
            failures.extend(nm.failure);
            failures.extend(ml.failure);
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Solver(failures.join("; ")))
    }
}

pub fn apply(report: &Path, input: &Path, out: &Path, hist: Option<&Path>, bins: usize) -> CliResult<()> {
    let params = read_json::<CalibrationReportFile>(report)?.params()?;
    let samples = read_samples(input)?.samples;
    if samples.is_empty() {
        return Err(CliError::Input(format!("{}: no samples", input.display())));
    }
    let calibrated: Vec<[f64; 4]> = samples
        .iter()
        .map(|y| {
            let m = apply_calibration(&params, y);
            [m.x, m.y, m.z, m.norm()]
        })
        .collect();
    write_rows(out, ["mx", "my", "mz", "magnitude"], calibrated.iter().copied())?;

    let magnitudes: Vec<f64> = calibrated.iter().map(|r| r[3]).collect();
    if let Some(path) = hist {
        write_rows(
            path,
            ["bin_start", "bin_end", "count"],
            histogram(&magnitudes, bins).into_iter().map(|(a, b, c)| [a, b, c as f64]),
        )?;
    }
    let (mean, std) = mean_std(&magnitudes);
    println!("samples {}  magnitude mean {mean:.6}  std {std:.6}", magnitudes.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct MetricsFile {
    format_version: u32,
    #[serde(flatten)]
    metrics: ErrorMetrics<f64>,
}

pub fn metrics(estimate: &Path, reference: &Path, out: Option<&Path>) -> CliResult<()> {
    let est = read_json::<CalibrationReportFile>(estimate)?.params()?;
    let refp = read_json::<CalibrationReportFile>(reference)?.params()?;
    let m = error_metrics(&est, &refp).map_err(|e| CliError::Input(e.to_string()))?;
    let file = MetricsFile {
        format_version: FORMAT_VERSION,
        metrics: m,
    };
    println!("{}", serde_json::to_string_pretty(&file).expect("serializable"));
    if let Some(path) = out {
        write_json(path, &file)?;
    }
    Ok(())
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))
}

fn write_serialized<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Serialize)]
struct RunRow {
    run: usize,
    method: Method,
    status: RunStatus,
    iterations: usize,
    final_objective: f64,
    scale_pct: Option<f64>,
    ortho_deg: Option<f64>,
    hard_iron_gauss: Option<f64>,
    constraint_violation: Option<f64>,
}

fn run_row(run: usize, method: Method, o: &MethodOutcome<f64>) -> RunRow {
    RunRow {
        run,
        method,
        status: o.status,
        iterations: o.iterations,
        final_objective: o.final_objective,
        scale_pct: o.metrics.map(|m| m.scale_pct),
        ortho_deg: o.metrics.map(|m| m.ortho_deg),
        hard_iron_gauss: o.metrics.map(|m| m.hard_iron_gauss),
        constraint_violation: o.constraint_violation,
    }
}

#[derive(Debug, Serialize)]
struct QuartileRow {
    method: Method,
    metric: &'static str,
    count: usize,
    lower_whisker: f64,
    q1: f64,
    median: f64,
    q3: f64,
    upper_whisker: f64,
    outliers: usize,
}

impl QuartileRow {
    fn new(method: Method, metric: &'static str, b: BoxStats) -> Self {
        Self {
            method,
            metric,
            count: b.count,
            lower_whisker: b.lower_whisker,
            q1: b.q1,
            median: b.median,
            q3: b.q3,
            upper_whisker: b.upper_whisker,
            outliers: b.outliers,
        }
    }
}

#[derive(Debug, Serialize)]
struct MonteCarloSummary<'a> {
    format_version: u32,
    seed: u64,
    runs: usize,
    config: &'a SimulationConfig,
    nm: magcal::experiments::MetricSummary<f64>,
    ml: magcal::experiments::MetricSummary<f64>,
}

pub fn montecarlo(config: Option<&Path>, out_dir: &Path, runs: usize, seed: u64) -> CliResult<()> {
    let cfg = load_config(config)?;
    ensure_dir(out_dir)?;
    let result = run_monte_carlo::<f64>(&cfg, runs, seed, &SolveOptions::default())?;

    write_serialized(
        &out_dir.join("montecarlo_runs.csv"),
        result.runs.iter().flat_map(|r| [run_row(r.run, Method::Nm, &r.nm), run_row(r.run, Method::Ml, &r.ml)]),
    )?;

    let mut quartiles = Vec::new();
    for (method, pick) in [(Method::Nm, 0usize), (Method::Ml, 1)] {
        let metrics: Vec<ErrorMetrics<f64>> = result
            .runs
            .iter()
            .filter_map(|r| if pick == 0 { r.nm.metrics } else { r.ml.metrics })
            .collect();
        let columns: [(&'static str, Vec<f64>); 3] = [
            ("scale_pct", metrics.iter().map(|m| m.scale_pct).collect()),
            ("ortho_deg", metrics.iter().map(|m| m.ortho_deg).collect()),
            ("hard_iron_gauss", metrics.iter().map(|m| m.hard_iron_gauss).collect()),
        ];
        for (metric, values) in columns {
            quartiles.push(QuartileRow::new(method, metric, box_stats(&values)));
        }
    }
    write_serialized(&out_dir.join("montecarlo_quartiles.csv"), quartiles)?;

    let summary = MonteCarloSummary {
        format_version: FORMAT_VERSION,
        seed,
        runs,
        config: &cfg,
        nm: result.nm_summary,
        ml: result.ml_summary,
    };
    write_json(&out_dir.join("montecarlo_summary.json"), &summary)?;
    for (name, s) in [("NM", &result.nm_summary), ("ML", &result.ml_summary)] {
        println!(
            "{name}  e_s {:.4} ({:.4}) %  e_o {:.4} ({:.4}) deg  e_h {:.5} ({:.5}) G  [{} runs]",
            s.mean.scale_pct, s.std.scale_pct, s.mean.ortho_deg, s.std.ortho_deg,
            s.mean.hard_iron_gauss, s.std.hard_iron_gauss, s.count
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CountRow {
    alpha: f64,
    nm_divergences: usize,
    ml_divergences: usize,
}

#[derive(Debug, Serialize)]
struct SensitivitySummary<'a> {
    format_version: u32,
    seed: u64,
    runs: usize,
    nm_threshold: f64,
    ml_threshold: f64,
    config: &'a SimulationConfig,
    alphas: &'a [f64],
    nm_divergences: &'a [usize],
    ml_divergences: &'a [usize],
}

#[allow(clippy::too_many_arguments)]
pub fn sensitivity(
    config: Option<&Path>,
    out_dir: &Path,
    alphas: &[f64],
    runs: usize,
    seed: u64,
    nm_threshold: f64,
    ml_threshold: f64,
) -> CliResult<()> {
    let cfg = load_config(config)?;
    ensure_dir(out_dir)?;
    let s = run_sensitivity::<f64>(&cfg, alphas, runs, nm_threshold, ml_threshold, seed, &SolveOptions::default())?;
    write_serialized(&out_dir.join("sensitivity_rows.csv"), &s.rows)?;
    let counts: Vec<CountRow> = s
        .alphas
        .iter()
        .zip(s.nm_divergences.iter().zip(&s.ml_divergences))
        .map(|(&alpha, (&nm, &ml))| CountRow { alpha, nm_divergences: nm, ml_divergences: ml })
        .collect();
    write_serialized(&out_dir.join("sensitivity_counts.csv"), &counts)?;
    write_json(
        &out_dir.join("sensitivity_summary.json"),
        &SensitivitySummary {
            format_version: FORMAT_VERSION,
            seed,
            runs,
            nm_threshold,
            ml_threshold,
            config: &cfg,
            alphas: &s.alphas,
            nm_divergences: &s.nm_divergences,
            ml_divergences: &s.ml_divergences,
        },
    )?;
    println!("alpha    NM  ML   (of {runs})");
    for c in &counts {
        println!("{:<6.3} {:>4} {:>3}", c.alpha, c.nm_divergences, c.ml_divergences);
    }
    Ok(())
}

pub fn timing(config: Option<&Path>, out_dir: &Path, n_values: &[usize], repeats: usize, dense_max_n: usize) -> CliResult<()> {
    let cfg = load_config(config)?;
    ensure_dir(out_dir)?;
    let rows = run_timing(&cfg, n_values, repeats, dense_max_n)?;
    write_serialized(&out_dir.join("timing.csv"), &rows)?;
    write_json(&out_dir.join("timing.json"), &rows)?;
    for r in &rows {
        let name = match r.method {
            TimedMethod::Nm => "nm",
            TimedMethod::MlBlock => "ml-block",
            TimedMethod::MlDense => "ml-dense",
        };
        println!("N={:<6} {name:<9} {:>10.3} ms  ({} it)", r.n, r.median_seconds * 1e3, r.iterations);
    }
    Ok(())
}
