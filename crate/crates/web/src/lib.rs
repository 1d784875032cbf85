//! Browser bindings: curvature of a sampled surface, warm-up scales and
//! split offsets. Arrays cross the boundary flattened as `Float64Array`s.

use curvsplat::bench::{line_angle_deg, median};
use curvsplat::methods::{run_method, Method, MethodOutput};
use curvsplat::splat::{clamp_curvature, sample_split, warmup_covariance};
use curvsplat::surfaces::{AnalyticSurface, SampleOptions, SurfaceSample};
use curvsplat::{CurvatureInfo, EstimatorConfig, LocalFrame, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

const MAX_POINTS: usize = 50_000;

/// A sampled surface with estimated and analytic curvature.
#[wasm_bindgen]
pub struct CurvatureDemo {
    sample: SurfaceSample,
    output: MethodOutput,
}

impl CurvatureDemo {
    fn build(surface: &str, n: usize, sigma: f64, method: &str, seed: u64) -> Result<Self, String> {
        let surface: AnalyticSurface = surface.parse().map_err(|e| format!("{e}"))?;
        let method: Method = method.parse().map_err(|e| format!("{e}"))?;
        if !(21..=MAX_POINTS).contains(&n) {
            return Err(format!("point count must lie in 21..={MAX_POINTS}"));
        }
        if !(sigma >= 0.0) {
            return Err("noise must be non-negative".into());
        }
        let sample = surface.sample(&SampleOptions::new(n, seed).with_noise(sigma));
        let output = run_method(&sample.cloud, method, &EstimatorConfig::default()).map_err(|e| e.to_string())?;
        Ok(Self { sample, output })
    }

    fn curvature(&self) -> Option<&[CurvatureInfo]> {
        self.output.curvatures.as_deref()
    }
}

fn flatten(v: &[Vector3<f64>]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

#[wasm_bindgen]
impl CurvatureDemo {
    /// `surface` as in `sphere:1`, `torus:2,0.5`; `method` manifold, varifold or pca.
    #[wasm_bindgen(constructor)]
    pub fn new(surface: &str, n: usize, sigma: f64, method: &str, seed: u64) -> Result<CurvatureDemo, JsError> {
        Self::build(surface, n, sigma, method, seed).map_err(|e| JsError::new(&e))
    }

    pub fn len(&self) -> usize {
        self.output.len()
    }

    pub fn is_empty(&self) -> bool {
        self.output.is_empty()
    }

    /// `x y z` per point.
    pub fn positions(&self) -> Vec<f64> {
        flatten(&self.sample.cloud.positions)
    }

    /// Estimated unit normal per point.
    pub fn normals(&self) -> Vec<f64> {
        let n: Vec<Vector3<f64>> = self.output.frames.iter().map(|f| f.n).collect();
        flatten(&n)
    }

    /// Estimated mean absolute curvature; empty for frame-only methods.
    pub fn mac(&self) -> Vec<f64> {
        self.curvature().map_or_else(Vec::new, |c| c.iter().map(|c| c.mac).collect())
    }

    /// Estimated mean curvature; empty for frame-only methods.
    pub fn mean_curvature(&self) -> Vec<f64> {
        self.curvature()
            .map_or_else(Vec::new, |c| c.iter().map(CurvatureInfo::mean_curvature).collect())
    }

    pub fn truth_mac(&self) -> Vec<f64> {
        self.sample.truth.iter().map(|t| t.curvature.mac).collect()
    }

    /// Angle between estimated and analytic normal lines, in degrees.
    pub fn normal_errors(&self) -> Vec<f64> {
        self.output
            .frames
            .iter()
            .zip(&self.sample.truth)
            .map(|(f, t)| line_angle_deg(&f.n, &t.frame.n))
            .collect()
    }

    /// Median normal error, median estimated MAC (NaN without curvature)
    /// and flagged point count.
    pub fn summary(&self) -> Vec<f64> {
        let mut errors = self.normal_errors();
        let mut mac = self.mac();
        vec![median(&mut errors), median(&mut mac), self.output.flagged_count() as f64]
    }
}

/// Warm-up scales `(s1, s2, s3)` for neighbor scale `s_nbr` and curvatures
/// `tau1, tau2` clamped to `[xi_min, xi_max]`.
#[wasm_bindgen]
pub fn warmup_scales(s_nbr: f64, tau1: f64, tau2: f64, xi_min: f64, xi_max: f64) -> Vec<f64> {
    let frame = LocalFrame::identity();
    let curv = CurvatureInfo::new(tau1, frame.u1, tau2, frame.u2);
    let (_, s) = warmup_covariance(&frame, &curv, s_nbr, xi_min, xi_max.max(xi_min));
    vec![s.x, s.y, s.z]
}

/// `count` split offsets around the origin, as `(along w1, along w2, along n)`
/// triples, for principal curvatures `tau1, tau2`.
#[wasm_bindgen]
pub fn split_offsets(tau1: f64, tau2: f64, xi_min: f64, count: usize, seed: u64) -> Vec<f64> {
    let frame = LocalFrame::identity();
    let curv = CurvatureInfo::new(tau1, frame.u1, tau2, frame.u2);
    let clamped = clamp_curvature(curv.tau1, curv.tau2, xi_min, f64::INFINITY);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(3 * count);
    for _ in 0..count {
        let d = sample_split(&Vector3::zeros(), &frame, &curv, &clamped, xi_min, &mut rng);
        out.extend([d.dot(&curv.w1), d.dot(&curv.w2), d.dot(&frame.n)]);
    }
    out
}
