use curvsplat::bench::{median, run_synthetic};
use curvsplat::methods::Method;
use curvsplat::surfaces::AnalyticSurface;
use curvsplat::EstimatorConfig;

#[test]
fn manifold_and_varifold_agree_on_a_clean_sphere() {
    let surface = AnalyticSurface::sphere(1.0);
    let config = EstimatorConfig::default();
    let m = run_synthetic(&surface, 3000, 0.0, 8, Method::Manifold, &config).unwrap();
    let v = run_synthetic(&surface, 3000, 0.0, 8, Method::Varifold, &config).unwrap();
    assert_eq!(m.output.frames, v.output.frames);
    let (cm, cv) = (m.output.curvatures.unwrap(), v.output.curvatures.unwrap());
    let mut rel: Vec<f64> = cm.iter().zip(&cv).map(|(a, b)| (a.mac - b.mac).abs() / a.mac).collect();
    assert!(median(&mut rel) < 0.2);
}

#[test]
fn both_estimators_track_torus_curvature() {
    let surface = AnalyticSurface::torus(2.0, 0.5);
    for method in [Method::Manifold, Method::Varifold] {
        let run = run_synthetic(&surface, 12_000, 0.0, 2, method, &EstimatorConfig::default()).unwrap();
        let s = run.accuracy.summary;
        assert!(s.median_normal_error_deg < 3.0, "{method}: {s:?}");
        assert!(s.median_abs_curvature_error.unwrap() < 0.3, "{method}: {s:?}");
    }
}
