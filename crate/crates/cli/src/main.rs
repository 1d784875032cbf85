use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use curvsplat::bench::{self, CampaignSpec};
use curvsplat::io::{self, Report, ReportFormat, RunConfig};
use curvsplat::manifold::estimate_with_index;
use curvsplat::methods::{run_method, Method};
use curvsplat::splat::{self, neighbor_scale, upsample_flat_regions, warmup_primitive};
use curvsplat::surfaces::AnalyticSurface;
use curvsplat::types::Auto;
use curvsplat::{EstimatorConfig, PointCloud, SpatialIndex, Vector3};

#[derive(Parser)]
#[command(name = "curvsplat", version, about = "Normals, principal curvatures and Gaussian warm-up for point clouds")]
struct Cli {
    /// Worker threads (default: all cores; 1 runs the serial path).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Frames and curvatures of a PLY or CSV cloud.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "manifold")]
        method: MethodArg,
        /// Report path; `.csv` selects the CSV layout unless --format is given.
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },
    /// Gaussian primitives warmed up from estimated geometry.
    Init {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Neighbors averaged for the length scale.
        #[arg(long, default_value_t = splat::DEFAULT_SCALE_NEIGHBORS)]
        scale_neighbors: usize,
        #[arg(long, default_value_t = 0.1)]
        opacity: f64,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },
    /// Adds midpoints around flat points; new points carry `is_new = 1`.
    Upsample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Neighbors paired with each flat point.
        #[arg(long = "upsample-k", default_value_t = splat::DEFAULT_UPSAMPLE_NEIGHBORS)]
        upsample_k: usize,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },
    /// Synthetic benchmark against analytic truth; exit 1 when a threshold fails.
    Bench {
        #[arg(long, default_value = "sphere:1")]
        surface: String,
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, value_enum, default_value = "manifold")]
        method: MethodArg,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },
    /// Every method over a noise sweep, as CSV.
    Compare {
        #[arg(long, default_value = "sphere:1")]
        surface: String,
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,0.002,0.005,0.01")]
        sigma_sweep: Vec<f64>,
        /// CSV path; standard output when absent.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },
    /// Runs a campaign file; exit 1 when a cell fails.
    Campaign {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also time a full estimate of this many sphere points (soft gate).
        #[arg(long)]
        throughput: Option<usize>,
        /// Also check first-pass scaling from this many points to twice as many.
        #[arg(long)]
        scaling: Option<usize>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    Manifold,
    Varifold,
    Pca,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Manifold => Method::Manifold,
            MethodArg::Varifold => Method::Varifold,
            MethodArg::Pca => Method::Pca,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args)]
struct EstimatorArgs {
    /// Neighbors per point.
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Kernel bandwidth: `auto` or a squared length.
    #[arg(long, default_value = "auto", value_parser = parse_auto)]
    t: Auto<f64>,
    /// Varifold support radius: `auto` or a length.
    #[arg(long, default_value = "auto", value_parser = parse_auto)]
    eps: Auto<f64>,
    #[arg(long, default_value_t = 0.001)]
    xi_min: f64,
    /// Upper curvature clamp: `auto` or a value.
    #[arg(long, default_value = "auto", value_parser = parse_auto)]
    xi_max: Auto<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_auto(s: &str) -> Result<Auto<f64>, String> {
    if s == "auto" {
        return Ok(Auto::Auto);
    }
    s.parse().map(Auto::Fixed).map_err(|_| format!("expected `auto` or a number, got `{s}`"))
}

impl EstimatorArgs {
    fn config(&self) -> EstimatorConfig {
        EstimatorConfig {
            k_neighbors: self.k,
            bandwidth_t: self.t,
            varifold_eps: self.eps,
            xi_min: self.xi_min,
            xi_max: self.xi_max,
            seed: self.seed,
            ..EstimatorConfig::default()
        }
    }
}

/// Exit status of a completed command.
enum Outcome {
    Done,
    ThresholdFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::ThresholdFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Estimate {
            input,
            method,
            output,
            format,
            estimator,
        } => {
            let run = RunConfig {
                method: method.into(),
                format: resolve_format(format, &output),
                seed: estimator.seed,
                threads: cli.threads,
                estimator: estimator.config(),
                input: Some(input),
                output: Some(output),
                surface: None,
            };
            run.validate()?;
            let (input, output) = (run.input.as_deref().unwrap(), run.output.as_deref().unwrap());
            let cloud = read_nonempty(input)?;
            let out = run_method(&cloud, run.method, &run.estimator)?;
            let report = Report::build(&out, &cloud.positions, None).with_source(input.display().to_string());
            io::write_report(&report, run.format, output)?;
            eprintln!(
                "{} points, {} flagged, report written to {}",
                out.len(),
                out.flagged_count(),
                output.display()
            );
            Ok(Outcome::Done)
        }
        Command::Init {
            input,
            output,
            scale_neighbors,
            opacity,
            estimator,
        } => {
            let config = estimator.config();
            let cloud = read_nonempty(&input)?;
            let index = SpatialIndex::build(&cloud.positions)?;
            let est = estimate_with_index(&index, &cloud, &config)?;
            let xi_max = est.config.xi_max.fixed().unwrap_or(10.0 * config.xi_min);
            let mut records = Vec::with_capacity(cloud.len());
            for (i, p) in est.points.iter().enumerate() {
                let s = neighbor_scale(&index, i, scale_neighbors).unwrap_or(config.xi_min);
                let color = cloud.colors.as_ref().map_or(Vector3::repeat(0.5), |c| c[i]);
                let g = warmup_primitive(cloud.positions[i], &p.frame, &p.curvature, s, config.xi_min, xi_max, color, opacity);
                records.push(json!({
                    "position": [g.position.x, g.position.y, g.position.z],
                    "rotation_wxyz": g.quaternion_wxyz(),
                    "scales": [g.scales.x, g.scales.y, g.scales.z],
                    "opacity": g.opacity,
                    "color": [g.color.x, g.color.y, g.color.z],
                    "flag": p.diagnostics.flag,
                }));
            }
            let doc = json!({
                "schema_version": io::SCHEMA_VERSION,
                "source": input.display().to_string(),
                "config": est.config,
                "scale_neighbors": scale_neighbors,
                "primitives": records,
            });
            let text = io::to_canonical_json(&doc)?;
            io::write_atomic(&output, |w| Ok(std::io::Write::write_all(w, text.as_bytes())?))?;
            eprintln!("{} primitives written to {}", est.points.len(), output.display());
            Ok(Outcome::Done)
        }
        Command::Upsample {
            input,
            output,
            upsample_k,
            estimator,
        } => {
            let config = estimator.config();
            let cloud = read_nonempty(&input)?;
            let index = SpatialIndex::build(&cloud.positions)?;
            let est = estimate_with_index(&index, &cloud, &config)?;
            let added = upsample_flat_regions(&index, &cloud, &est.curvatures(), config.xi_min, upsample_k)?;
            let mut merged = PointCloud {
                positions: cloud.positions.clone(),
                colors: cloud.colors.clone(),
                normals: None,
                covariances: None,
            };
            merged.positions.extend(&added.positions);
            if let (Some(dst), Some(src)) = (merged.colors.as_mut(), added.colors.as_ref()) {
                dst.extend(src);
            }
            let mut is_new = vec![false; cloud.len()];
            is_new.resize(merged.len(), true);
            io::write_point_cloud(&output, &merged, Some(("is_new", &is_new)))?;
            eprintln!("{} points added to {}, written to {}", added.len(), cloud.len(), output.display());
            Ok(Outcome::Done)
        }
        Command::Bench {
            surface,
            n,
            sigma,
            method,
            output,
            format,
            estimator,
        } => {
            let run = RunConfig {
                method: method.into(),
                format: output.as_deref().map_or(ReportFormat::Json, |o| resolve_format(format, o)),
                seed: estimator.seed,
                threads: cli.threads,
                estimator: estimator.config(),
                input: None,
                output,
                surface: Some(surface),
            };
            run.validate()?;
            let spec = run.surface.as_deref().unwrap();
            let surface: AnalyticSurface = spec.parse()?;
            if n < run.estimator.k_neighbors + 1 {
                bail!("--n must exceed --k");
            }
            if !(sigma >= 0.0) {
                bail!("--sigma must be non-negative");
            }
            let result = bench::run_synthetic(&surface, n, sigma, run.seed, run.method, &run.estimator)?;
            let checks = bench::threshold_checks(&surface, sigma, &result.output, &result.sample.truth, &result.include);
            for (k, v) in result.accuracy.summary.entries() {
                println!("{k}: {v:.6}");
            }
            for c in &checks {
                println!("{} {}: {:.6} (limit {})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.limit);
            }
            if let Some(path) = &run.output {
                let report = Report::build(&result.output, &result.sample.cloud.positions, Some((&result.sample.truth, &result.include)))
                    .with_source(surface.to_string());
                io::write_report(&report, run.format, path)?;
            }
            Ok(if checks.iter().all(|c| c.passed) {
                Outcome::Done
            } else {
                Outcome::ThresholdFailed
            })
        }
        Command::Compare {
            surface,
            n,
            sigma_sweep,
            output,
            estimator,
        } => {
            let config = estimator.config();
            let surface: AnalyticSurface = surface.parse()?;
            if sigma_sweep.iter().any(|s| !(*s >= 0.0)) {
                bail!("sigma values must be non-negative");
            }
            let rows = bench::noise_sweep(&surface, n, &sigma_sweep, config.seed, &config)?;
            match &output {
                Some(path) => io::write_atomic(path, |w| Ok(bench::write_sweep_csv(w, &rows)?))?,
                None => bench::write_sweep_csv(std::io::stdout().lock(), &rows)?,
            }
            for w in bench::sweep_warnings(&rows) {
                eprintln!("warning: {w}");
            }
            Ok(Outcome::Done)
        }
        Command::Campaign {
            spec,
            output,
            throughput,
            scaling,
        } => {
            let text = std::fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec: CampaignSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", spec.display()))?;
            let report = bench::run_campaign(&spec)?;
            let mut doc = serde_json::to_value(&report)?;
            for cell in &report.cells {
                let status = if cell.passed() { "PASS" } else { "FAIL" };
                let median = cell.accuracy.as_ref().map_or(f64::NAN, |a| a.median_normal_error_deg);
                println!(
                    "{status} {} n={} sigma={} {}: median normal error {median:.3} deg{}",
                    cell.spec.surface,
                    cell.spec.n,
                    cell.spec.sigma,
                    cell.spec.method,
                    cell.error.as_deref().map(|e| format!(" ({e})")).unwrap_or_default()
                );
            }
            if let Some(n) = throughput {
                let t = bench::throughput(n, 16, spec.seed_base)?;
                let tag = if t.within_gate { "PASS" } else { "WARN" };
                println!("{tag} throughput: {n} points in {:.2} s on {} thread(s)", t.total_seconds, t.threads);
                doc["throughput"] = serde_json::to_value(&t)?;
            }
            if let Some(n) = scaling {
                let s = bench::scaling_check(n, 16, spec.seed_base, 3)?;
                let tag = if s.passed { "PASS" } else { "WARN" };
                println!("{tag} scaling: pass 1 grows {:.2}x from {n} to {} points", s.ratio, 2 * n);
                doc["scaling"] = serde_json::to_value(&s)?;
            }
            if let Some(path) = &output {
                let text = io::to_canonical_json(&doc)?;
                io::write_atomic(path, |w| Ok(std::io::Write::write_all(w, text.as_bytes())?))?;
            }
            Ok(if report.passed() {
                Outcome::Done
            } else {
                Outcome::ThresholdFailed
            })
        }
    }
}

fn resolve_format(explicit: Option<FormatArg>, path: &Path) -> ReportFormat {
    match explicit {
        Some(FormatArg::Json) => ReportFormat::Json,
        Some(FormatArg::Csv) => ReportFormat::Csv,
        None => ReportFormat::from_path(path),
    }
}

fn read_nonempty(path: &Path) -> Result<PointCloud> {
    let cloud = io::read_point_cloud(path)?;
    if cloud.is_empty() {
        bail!("{} contains no points", path.display());
    }
    Ok(cloud)
}
