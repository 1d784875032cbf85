//! Run reports: resolved config, per-point records, aggregates and timings.
//!
//! JSON keys are sorted, numbers keep 9 significant digits and non-finite
//! values become `null`. Timings live in their own block so that two runs
//! with the same input and config differ only there.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::IoError;
use crate::bench::{self, Accuracy};
use crate::manifold::PointFlag;
use crate::methods::{Method, MethodOutput};
use crate::surfaces::GroundTruth;
use crate::types::EstimatorConfig;
use crate::Vector3;

pub const SCHEMA_VERSION: u32 = 1;

/// CSV report columns, in order.
pub const CSV_COLUMNS: [&str; 32] = [
    "id", "x", "y", "z", "nx", "ny", "nz", "u1x", "u1y", "u1z", "u2x", "u2y", "u2z", "tau1", "tau2",
    "w1x", "w1y", "w1z", "w2x", "w2y", "w2z", "mac", "mean_curvature", "dimension", "calibration",
    "lambda1", "lambda2", "lambda3", "eigen_gap", "flag", "normal_error_deg", "curvature_error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub id: usize,
    pub position: [f64; 3],
    pub normal: [f64; 3],
    pub u1: [f64; 3],
    pub u2: [f64; 3],
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub w1: Option<[f64; 3]>,
    pub w2: Option<[f64; 3]>,
    pub mac: Option<f64>,
    pub mean_curvature: Option<f64>,
    pub dimension: Option<usize>,
    pub calibration: Option<f64>,
    /// Calibrated kernel eigenvalues, descending.
    pub eigenvalues: Option<[f64; 3]>,
    pub eigen_gap: Option<f64>,
    pub flag: Option<PointFlag>,
    pub normal_error_deg: Option<f64>,
    pub curvature_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub method: Method,
    /// Input path or surface description.
    pub source: Option<String>,
    pub seed: u64,
    pub config: EstimatorConfig,
    pub points: Vec<PointRecord>,
    pub aggregates: BTreeMap<String, f64>,
    pub timings: BTreeMap<String, f64>,
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl Report {
    /// Builds records for every point. With ground truth, errors are recorded
    /// per point and summarized over unflagged points where `include` holds.
    pub fn build(
        output: &MethodOutput,
        positions: &[Vector3<f64>],
        truth: Option<(&[GroundTruth], &[bool])>,
    ) -> Self {
        let accuracy = truth.map(|(t, include)| Accuracy::evaluate(output, t, include));
        let points = (0..output.len())
            .map(|i| {
                let frame = &output.frames[i];
                let curv = output.curvatures.as_ref().map(|c| c[i]);
                let diag = output.diagnostics.as_ref().map(|d| d[i]);
                PointRecord {
                    id: i,
                    position: arr(&positions[i]),
                    normal: arr(&frame.n),
                    u1: arr(&frame.u1),
                    u2: arr(&frame.u2),
                    tau1: curv.map(|c| c.tau1),
                    tau2: curv.map(|c| c.tau2),
                    w1: curv.map(|c| arr(&c.w1)),
                    w2: curv.map(|c| arr(&c.w2)),
                    mac: curv.map(|c| c.mac),
                    mean_curvature: curv.map(|c| c.mean_curvature()),
                    dimension: diag.map(|d| d.dimension),
                    calibration: diag.map(|d| d.calibration),
                    eigenvalues: diag.map(|d| d.eigenvalues),
                    eigen_gap: diag.map(|d| d.eigen_gap),
                    flag: output.flags[i],
                    normal_error_deg: accuracy.as_ref().and_then(|a| a.normal_errors[i]),
                    curvature_error: accuracy.as_ref().and_then(|a| a.curvature_errors[i]),
                }
            })
            .collect();
        let mut aggregates = BTreeMap::new();
        if output.len() > 0 {
            aggregates.insert("points".into(), output.len() as f64);
            aggregates.insert("flagged_points".into(), output.flagged_count() as f64);
            if let Some(c) = &output.curvatures {
                let mut mac: Vec<f64> = c
                    .iter()
                    .zip(&output.flags)
                    .filter(|(_, f)| f.is_none())
                    .map(|(c, _)| c.mac)
                    .collect();
                if !mac.is_empty() {
                    aggregates.insert("median_mac".into(), bench::median(&mut mac));
                }
            }
        }
        if let Some(a) = &accuracy {
            aggregates.extend(a.summary.entries());
        }
        aggregates.retain(|_, v| v.is_finite());
        Self {
            schema_version: SCHEMA_VERSION,
            method: output.method,
            source: None,
            seed: output.config.seed,
            config: output.config.clone(),
            points,
            aggregates,
            timings: output.timings.clone(),
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn to_json(&self) -> Result<String, IoError> {
        to_canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), IoError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(CSV_COLUMNS)?;
        for p in &self.points {
            let mut row: Vec<String> = vec![p.id.to_string()];
            let mut push = |v: Option<f64>| row.push(v.map(format_number).unwrap_or_default());
            for v in p.position.iter().chain(&p.normal).chain(&p.u1).chain(&p.u2) {
                push(Some(*v));
            }
            push(p.tau1);
            push(p.tau2);
            for k in 0..3 {
                push(p.w1.map(|w| w[k]));
            }
            for k in 0..3 {
                push(p.w2.map(|w| w[k]));
            }
            push(p.mac);
            push(p.mean_curvature);
            push(p.dimension.map(|d| d as f64));
            push(p.calibration);
            for k in 0..3 {
                push(p.eigenvalues.map(|e| e[k]));
            }
            push(p.eigen_gap);
            row.push(p.flag.map(flag_name).unwrap_or_default());
            let mut push = |v: Option<f64>| row.push(v.map(format_number).unwrap_or_default());
            push(p.normal_error_deg);
            push(p.curvature_error);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn flag_name(f: PointFlag) -> String {
    match serde_json::to_value(f) {
        Ok(Value::String(s)) => s,
        _ => format!("{f:?}"),
    }
}

/// Rounds to 9 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn format_number(x: f64) -> String {
    if x.is_finite() {
        serde_json::Number::from_f64(round_sig(x)).map_or_else(String::new, |n| n.to_string())
    } else {
        String::new()
    }
}

fn canonicalize(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            *v = serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(canonicalize),
        Value::Object(map) => map.values_mut().for_each(canonicalize),
        _ => {}
    }
}

/// Pretty JSON with sorted keys and 9 significant digits, newline-terminated.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, IoError> {
    let mut v = serde_json::to_value(value)?;
    canonicalize(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::run_method;
    use crate::surfaces::{AnalyticSurface, SampleOptions};

    #[test]
    fn rounding_keeps_nine_digits() {
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333);
        assert_eq!(round_sig(123456789012.0), 123456789000.0);
        assert_eq!(round_sig(-2.5e-300), -2.5e-300);
        assert_eq!(format_number(f64::NAN), "");
        assert_eq!(format_number(0.1), "0.1");
    }

    #[test]
    fn non_finite_becomes_null_and_keys_sort() {
        #[derive(Serialize)]
        struct S {
            zeta: f64,
            alpha: f64,
        }
        let s = to_canonical_json(&S { zeta: f64::INFINITY, alpha: 2.0 / 3.0 }).unwrap();
        assert_eq!(s, "{\n  \"alpha\": 0.666666667,\n  \"zeta\": null\n}\n");
    }

    #[test]
    fn sphere_report_has_accuracy_aggregates_and_round_trips() {
        let sample = AnalyticSurface::sphere(1.0).sample(&SampleOptions::new(500, 1));
        let out = run_method(&sample.cloud, Method::Manifold, &EstimatorConfig::default()).unwrap();
        let include = vec![true; sample.len()];
        let report = Report::build(&out, &sample.cloud.positions, Some((&sample.truth, &include)));
        for key in ["median_normal_error_deg", "median_abs_curvature_error", "p90_normal_error_deg"] {
            assert!(report.aggregates.contains_key(key), "{key}");
        }
        let json = report.to_json().unwrap();
        let again = Report::from_json(&json).unwrap().to_json().unwrap();
        assert_eq!(json, again);
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 501);
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    }

    #[test]
    fn pca_report_leaves_curvature_columns_empty() {
        let sample = AnalyticSurface::plane().sample(&SampleOptions::new(200, 1));
        let out = run_method(&sample.cloud, Method::Pca, &EstimatorConfig::default()).unwrap();
        let report = Report::build(&out, &sample.cloud.positions, None);
        assert!(report.points.iter().all(|p| p.tau1.is_none() && p.normal_error_deg.is_none()));
        assert!(!report.aggregates.contains_key("median_mac"));
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let row = String::from_utf8(csv).unwrap().lines().nth(1).unwrap().to_string();
        assert_eq!(row.split(',').count(), CSV_COLUMNS.len());
    }
}
