//! Accuracy statistics against analytic truth, pass/fail thresholds and
//! reproducible campaigns: noise sweeps, scaling and throughput.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{EstimateError, Result};
use crate::laplacian;
use crate::methods::{run_method, Method, MethodOutput};
use crate::spatial::SpatialIndex;
use crate::surfaces::{AnalyticSurface, GroundTruth, SampleOptions, SurfaceKind, SurfaceSample};
use crate::types::{CurvatureInfo, EstimatorConfig};

/// Median by linear interpolation; NaN for an empty slice. Reorders `v`.
pub fn median(v: &mut [f64]) -> f64 {
    percentile(v, 0.5)
}

/// `q`-quantile (`0 ≤ q ≤ 1`) by linear interpolation; NaN when empty.
pub fn percentile(v: &mut [f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Unsigned angle in degrees between two lines.
pub fn line_angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let c = a.dot(b).abs() / (a.norm() * b.norm());
    c.min(1.0).acos().to_degrees()
}

/// Mean over both principal curvatures of `| |τ_d| − |κ_d| |`.
pub fn curvature_error(est: &CurvatureInfo, truth: &CurvatureInfo) -> f64 {
    0.5 * ((est.tau1.abs() - truth.tau1.abs()).abs() + (est.tau2.abs() - truth.tau2.abs()).abs())
}

/// Points within this distance of a patch boundary are left out of error
/// statistics: twice the mean distance to the `k`-th neighbor.
pub fn boundary_margin(index: &SpatialIndex, k: usize, seed: u64) -> f64 {
    2.0 * laplacian::mean_kth_neighbor_distance(index, k, seed)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub evaluated: usize,
    pub median_normal_error_deg: f64,
    pub p90_normal_error_deg: f64,
    pub median_abs_curvature_error: Option<f64>,
    pub p90_abs_curvature_error: Option<f64>,
}

impl AccuracySummary {
    pub fn entries(&self) -> Vec<(String, f64)> {
        if self.evaluated == 0 {
            return Vec::new();
        }
        let mut out = vec![
            ("evaluated_points".to_string(), self.evaluated as f64),
            ("median_normal_error_deg".to_string(), self.median_normal_error_deg),
            ("p90_normal_error_deg".to_string(), self.p90_normal_error_deg),
        ];
        if let (Some(m), Some(p)) = (self.median_abs_curvature_error, self.p90_abs_curvature_error) {
            out.push(("median_abs_curvature_error".into(), m));
            out.push(("p90_abs_curvature_error".into(), p));
        }
        out
    }
}

/// Per-point errors (`None` where not evaluated) and their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Accuracy {
    pub normal_errors: Vec<Option<f64>>,
    pub curvature_errors: Vec<Option<f64>>,
    pub summary: AccuracySummary,
}

impl Accuracy {
    /// Evaluates unflagged points where `include` holds.
    pub fn evaluate(output: &MethodOutput, truth: &[GroundTruth], include: &[bool]) -> Self {
        let used = |i: usize| include[i] && output.flags[i].is_none();
        let normal_errors: Vec<Option<f64>> = (0..output.len())
            .map(|i| used(i).then(|| line_angle_deg(&output.frames[i].n, &truth[i].frame.n)))
            .collect();
        let curvature_errors: Vec<Option<f64>> = match &output.curvatures {
            Some(c) => (0..output.len())
                .map(|i| used(i).then(|| curvature_error(&c[i], &truth[i].curvature)))
                .collect(),
            None => vec![None; output.len()],
        };
        let mut ne: Vec<f64> = normal_errors.iter().flatten().copied().collect();
        let mut ce: Vec<f64> = curvature_errors.iter().flatten().copied().collect();
        let has_curv = output.curvatures.is_some() && !ce.is_empty();
        let summary = AccuracySummary {
            evaluated: ne.len(),
            median_normal_error_deg: median(&mut ne),
            p90_normal_error_deg: percentile(&mut ne, 0.9),
            median_abs_curvature_error: has_curv.then(|| median(&mut ce)),
            p90_abs_curvature_error: has_curv.then(|| percentile(&mut ce, 0.9)),
        };
        Self {
            normal_errors,
            curvature_errors,
            summary,
        }
    }
}

/// One named comparison against a limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            limit,
            passed: value < limit,
        }
    }
}

fn medians_where<F: Fn(usize) -> f64>(mask: &[bool], f: F) -> f64 {
    let mut v: Vec<f64> = (0..mask.len()).filter(|&i| mask[i]).map(f).collect();
    median(&mut v)
}

/// Pass/fail thresholds of a noise-free run. Noisy cells have no hard
/// thresholds and return an empty list.
pub fn threshold_checks(
    surface: &AnalyticSurface,
    sigma: f64,
    output: &MethodOutput,
    truth: &[GroundTruth],
    include: &[bool],
) -> Vec<Check> {
    if sigma > 0.0 {
        return Vec::new();
    }
    let mask: Vec<bool> = (0..output.len()).map(|i| include[i] && output.flags[i].is_none()).collect();
    let normal = medians_where(&mask, |i| line_angle_deg(&output.frames[i].n, &truth[i].frame.n));
    let mut checks = vec![Check::below("median_normal_error_deg", normal, 5.0)];
    let Some(curv) = &output.curvatures else {
        return checks;
    };
    let relative = if output.method == Method::Varifold { 0.2 } else { 0.15 };
    match surface.kind {
        SurfaceKind::Plane { .. } => {
            let tau = medians_where(&mask, |i| 0.5 * (curv[i].tau1.abs() + curv[i].tau2.abs()));
            checks.push(Check::below("median_abs_tau", tau, 0.05));
        }
        SurfaceKind::Sphere { radius } => {
            let k = 1.0 / radius;
            let err = medians_where(&mask, |i| 0.5 * ((curv[i].tau1.abs() - k).abs() + (curv[i].tau2.abs() - k).abs()));
            checks.push(Check::below("median_abs_curvature_error", err, relative * k));
        }
        SurfaceKind::Cylinder { radius, .. } => {
            let k = 1.0 / radius;
            let e1 = medians_where(&mask, |i| (curv[i].tau1.abs() - k).abs());
            let t2 = medians_where(&mask, |i| curv[i].tau2.abs());
            let dir = medians_where(&mask, |i| line_angle_deg(&curv[i].w1, &truth[i].curvature.w1));
            checks.push(Check::below("median_tau1_error", e1, relative * k));
            checks.push(Check::below("median_abs_tau2", t2, 0.1 * k));
            checks.push(Check::below("median_w1_error_deg", dir, 10.0));
        }
        SurfaceKind::Torus { .. } | SurfaceKind::Helicoid { .. } => {}
    }
    checks
}

/// One synthetic run: sample, estimate, evaluate.
#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub sample: SurfaceSample,
    pub output: MethodOutput,
    pub include: Vec<bool>,
    pub accuracy: Accuracy,
}

pub fn run_synthetic(
    surface: &AnalyticSurface,
    n: usize,
    sigma: f64,
    seed: u64,
    method: Method,
    config: &EstimatorConfig,
) -> Result<SyntheticRun> {
    let sample = surface.sample(&SampleOptions::new(n, seed).with_noise(sigma));
    let output = run_method(&sample.cloud, method, config)?;
    let index = SpatialIndex::build(&sample.cloud.positions)?;
    let include = sample.interior(boundary_margin(&index, config.k_neighbors, config.seed));
    let accuracy = Accuracy::evaluate(&output, &sample.truth, &include);
    Ok(SyntheticRun {
        sample,
        output,
        include,
        accuracy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub surface: String,
    pub n: usize,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub config: EstimatorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub cells: Vec<CellSpec>,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed_base: u64,
}

fn one() -> usize {
    1
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(EstimateError::invalid("repetitions", "must be at least 1"));
        }
        for cell in &self.cells {
            cell.surface.parse::<AnalyticSurface>()?;
            if cell.n < cell.config.k_neighbors + 1 {
                return Err(EstimateError::invalid(
                    "n",
                    format!("{} points cannot give {} neighbors each", cell.n, cell.config.k_neighbors),
                ));
            }
            if !(cell.sigma >= 0.0) {
                return Err(EstimateError::invalid("sigma", "must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub spec: CellSpec,
    pub seed: u64,
    pub accuracy: Option<AccuracySummary>,
    pub checks: Vec<Check>,
    /// Accuracy was bit-identical over all repetitions.
    pub deterministic: bool,
    /// Median wall clock per phase over repetitions.
    pub timings: BTreeMap<String, f64>,
    pub error: Option<String>,
}

impl CellReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.deterministic && self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub schema_version: u32,
    pub repetitions: usize,
    pub cells: Vec<CellReport>,
}

impl CampaignReport {
    pub fn passed(&self) -> bool {
        self.cells.iter().all(CellReport::passed)
    }
}

/// Runs cells one after another; cell `c` uses seed `seed_base + c` for every
/// repetition. A failing cell is recorded and the campaign goes on.
pub fn run_campaign(spec: &CampaignSpec) -> Result<CampaignReport> {
    spec.validate()?;
    let cells = spec
        .cells
        .iter()
        .enumerate()
        .map(|(c, cell)| run_cell(cell, spec.seed_base + c as u64, spec.repetitions))
        .collect();
    Ok(CampaignReport {
        schema_version: crate::io::SCHEMA_VERSION,
        repetitions: spec.repetitions,
        cells,
    })
}

fn run_cell(cell: &CellSpec, seed: u64, repetitions: usize) -> CellReport {
    let mut report = CellReport {
        spec: cell.clone(),
        seed,
        accuracy: None,
        checks: Vec::new(),
        deterministic: true,
        timings: BTreeMap::new(),
        error: None,
    };
    let surface = match cell.surface.parse::<AnalyticSurface>() {
        Ok(s) => s,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    let mut phase_times: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for _ in 0..repetitions {
        let run = match run_synthetic(&surface, cell.n, cell.sigma, seed, cell.method, &cell.config) {
            Ok(r) => r,
            Err(e) => {
                report.error = Some(e.to_string());
                return report;
            }
        };
        for (k, v) in &run.output.timings {
            phase_times.entry(k.clone()).or_default().push(*v);
        }
        match &report.accuracy {
            None => {
                report.checks =
                    threshold_checks(&surface, cell.sigma, &run.output, &run.sample.truth, &run.include);
                report.accuracy = Some(run.accuracy.summary);
            }
            Some(first) => {
                let same = serde_json::to_string(first).ok() == serde_json::to_string(&run.accuracy.summary).ok();
                report.deterministic &= same;
            }
        }
    }
    for (k, mut v) in phase_times {
        let total = median(&mut v);
        report.timings.insert(k, total);
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub surface: String,
    pub sigma: f64,
    pub method: Method,
    pub evaluated: usize,
    pub median_normal_error_deg: f64,
    pub p90_normal_error_deg: f64,
    pub median_abs_curvature_error: Option<f64>,
}

/// Every method at every noise level on the same samples.
pub fn noise_sweep(
    surface: &AnalyticSurface,
    n: usize,
    sigmas: &[f64],
    seed: u64,
    config: &EstimatorConfig,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &sigma in sigmas {
        for method in Method::ALL {
            let run = run_synthetic(surface, n, sigma, seed, method, config)?;
            let s = run.accuracy.summary;
            rows.push(SweepRow {
                surface: surface.to_string(),
                sigma,
                method,
                evaluated: s.evaluated,
                median_normal_error_deg: s.median_normal_error_deg,
                p90_normal_error_deg: s.p90_normal_error_deg,
                median_abs_curvature_error: s.median_abs_curvature_error,
            });
        }
    }
    Ok(rows)
}

/// Soft checks: at every noisy level, each estimator's median normal error
/// should not exceed the PCA baseline's.
pub fn sweep_warnings(rows: &[SweepRow]) -> Vec<String> {
    let mut out = Vec::new();
    for pca in rows.iter().filter(|r| r.method == Method::Pca && r.sigma > 0.0) {
        for r in rows
            .iter()
            .filter(|r| r.method != Method::Pca && r.sigma == pca.sigma && r.surface == pca.surface)
        {
            if r.median_normal_error_deg > pca.median_normal_error_deg {
                out.push(format!(
                    "{} at sigma {}: median normal error {:.3} deg exceeds pca {:.3} deg",
                    r.method, r.sigma, r.median_normal_error_deg, pca.median_normal_error_deg
                ));
            }
        }
    }
    out
}

pub const SWEEP_COLUMNS: [&str; 7] = [
    "surface",
    "sigma",
    "method",
    "evaluated",
    "median_normal_error_deg",
    "p90_normal_error_deg",
    "median_abs_curvature_error",
];

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(SWEEP_COLUMNS)?;
    let num = |x: f64| crate::io::round_sig(x).to_string();
    for r in rows {
        w.write_record([
            r.surface.clone(),
            num(r.sigma),
            r.method.to_string(),
            r.evaluated.to_string(),
            num(r.median_normal_error_deg),
            num(r.p90_normal_error_deg),
            r.median_abs_curvature_error.map(num).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Largest allowed growth of first-pass time when `n` doubles.
pub const SCALING_LIMIT: f64 = 2.6;
/// Soft wall-clock gate for a full estimate of one million points.
pub const THROUGHPUT_GATE_SECONDS: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub n: usize,
    pub pass1_n: f64,
    pub pass1_2n: f64,
    pub ratio: f64,
    pub passed: bool,
}

/// First-pass time on a sphere of `n` and `2n` points at fixed `k`; each the
/// best of `repetitions` runs.
pub fn scaling_check(n: usize, k: usize, seed: u64, repetitions: usize) -> Result<ScalingResult> {
    let config = EstimatorConfig::default().with_k(k);
    let time = |m: usize| -> Result<f64> {
        let cloud = AnalyticSurface::sphere(1.0).sample(&SampleOptions::new(m, seed)).cloud;
        let mut best = f64::INFINITY;
        for _ in 0..repetitions.max(1) {
            let out = run_method(&cloud, Method::Manifold, &config)?;
            best = best.min(out.timings["pass1"]);
        }
        Ok(best)
    };
    let pass1_n = time(n)?;
    let pass1_2n = time(2 * n)?;
    let ratio = pass1_2n / pass1_n;
    Ok(ScalingResult {
        n,
        pass1_n,
        pass1_2n,
        ratio,
        passed: ratio < SCALING_LIMIT,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputResult {
    pub n: usize,
    pub k: usize,
    pub threads: usize,
    pub timings: BTreeMap<String, f64>,
    pub total_seconds: f64,
    pub flagged: usize,
    pub within_gate: bool,
}

/// Full two-pass manifold estimate on a unit sphere of `n` points.
pub fn throughput(n: usize, k: usize, seed: u64) -> Result<ThroughputResult> {
    let cloud = AnalyticSurface::sphere(1.0).sample(&SampleOptions::new(n, seed)).cloud;
    let out = run_method(&cloud, Method::Manifold, &EstimatorConfig::default().with_k(k))?;
    let total_seconds: f64 = out.timings.values().sum();
    Ok(ThroughputResult {
        n,
        k,
        threads: worker_threads(),
        total_seconds,
        flagged: out.flagged_count(),
        timings: out.timings,
        within_gate: total_seconds < THROUGHPUT_GATE_SECONDS,
    })
}

/// Threads available to the parallel batch paths.
pub fn worker_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
