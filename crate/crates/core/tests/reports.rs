use std::collections::BTreeMap;

use curvsplat::io::{write_report, Report, ReportFormat};
use curvsplat::methods::{run_method, Method, MethodOutput};
use curvsplat::surfaces::{AnalyticSurface, SampleOptions};
use curvsplat::EstimatorConfig;

fn report_bytes(method: Method, format: ReportFormat, seed: u64) -> Vec<u8> {
    let sample = AnalyticSurface::cylinder(0.5).sample(&SampleOptions::new(800, seed));
    let out = run_method(&sample.cloud, method, &EstimatorConfig::default()).unwrap();
    let include = sample.interior(0.2);
    let mut report = Report::build(&out, &sample.cloud.positions, Some((&sample.truth, &include)));
    report.timings.clear();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report");
    write_report(&report, format, &path).unwrap();
    std::fs::read(&path).unwrap()
}

#[test]
fn same_seed_and_config_give_identical_reports() {
    for method in Method::ALL {
        for format in [ReportFormat::Json, ReportFormat::Csv] {
            assert_eq!(report_bytes(method, format, 9), report_bytes(method, format, 9));
        }
    }
    assert_ne!(report_bytes(Method::Manifold, ReportFormat::Json, 9), report_bytes(Method::Manifold, ReportFormat::Json, 10));
}

#[test]
fn json_reparses_and_reserializes_identically() {
    let text = String::from_utf8(report_bytes(Method::Varifold, ReportFormat::Json, 3)).unwrap();
    let report = Report::from_json(&text).unwrap();
    assert_eq!(report.to_json().unwrap(), text);
    assert_eq!(report.schema_version, 1);
    assert!(report.config.bandwidth_t.fixed().is_some());
    assert!(report.config.varifold_eps.fixed().is_some());
    assert!(report.config.xi_max.fixed().is_some());
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(value["aggregates"]["median_normal_error_deg"].is_number());
    assert!(value["timings"].is_object());
}

#[test]
fn empty_result_set_gives_zero_rows_and_no_aggregates() {
    let out = MethodOutput {
        method: Method::Manifold,
        config: EstimatorConfig::default(),
        frames: Vec::new(),
        curvatures: Some(Vec::new()),
        flags: Vec::new(),
        diagnostics: Some(Vec::new()),
        timings: BTreeMap::new(),
    };
    let report = Report::build(&out, &[], Some((&[], &[])));
    assert!(report.points.is_empty());
    assert!(report.aggregates.is_empty());
    let text = report.to_json().unwrap();
    assert_eq!(Report::from_json(&text).unwrap(), report);
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1);
}
