//! Analytic surfaces with exact frames and curvatures, area-uniform samplers
//! and the local-PCA normal baseline.
//!
//! Curvature signs follow the height function: `τ` is the Hessian of
//! `⟨n, q' − q⟩` along the principal direction, so a sphere with outward
//! normal has `τ = −1/R`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{EstimateError, Result};
use crate::linalg;
use crate::spatial::SpatialIndex;
use crate::types::{CurvatureInfo, LocalFrame, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceKind {
    /// Square `[−h, h]²` in the xy-plane.
    Plane { half_extent: f64 },
    Sphere { radius: f64 },
    /// Around the z axis, `z ∈ [−h, h]`.
    Cylinder { radius: f64, half_height: f64 },
    /// Around the z axis.
    Torus { major: f64, minor: f64 },
    /// `(ρ cos θ, ρ sin θ, pitch·θ/2π)` for one turn `θ ∈ [0, 2π)`, `|ρ| ≤ radius`.
    Helicoid { pitch: f64, radius: f64 },
}

/// Rigid placement `x ↦ R x + t` of the canonical surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticSurface {
    pub kind: SurfaceKind,
    pub pose: Pose,
}

/// Exact geometry at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub frame: LocalFrame,
    pub curvature: CurvatureInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingScheme {
    /// Jittered rows equally spaced in arc length, with points per row
    /// proportional to row length.
    #[default]
    Stratified,
    /// Independent area-uniform draws.
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    pub n: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub scheme: SamplingScheme,
}

impl SampleOptions {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            noise_sigma: 0.0,
            scheme: SamplingScheme::Stratified,
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_scheme(mut self, scheme: SamplingScheme) -> Self {
        self.scheme = scheme;
        self
    }
}

/// A sampled cloud with the truth recorded before noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSample {
    /// Noisy positions (equal to `clean` when sigma is zero).
    pub cloud: PointCloud,
    pub clean: Vec<Vector3<f64>>,
    pub truth: Vec<GroundTruth>,
    /// Intrinsic distance to the patch boundary; infinite on closed surfaces.
    pub boundary_distance: Vec<f64>,
}

impl SurfaceSample {
    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }

    /// Points at least `margin` away from the boundary.
    pub fn interior(&self, margin: f64) -> Vec<bool> {
        self.boundary_distance.iter().map(|&d| d >= margin).collect()
    }
}

const TOL_ON_SURFACE: f64 = 1e-9;

impl AnalyticSurface {
    pub fn new(kind: SurfaceKind) -> Self {
        Self {
            kind,
            pose: Pose::default(),
        }
    }

    pub fn plane() -> Self {
        Self::new(SurfaceKind::Plane { half_extent: 1.0 })
    }

    pub fn sphere(radius: f64) -> Self {
        Self::new(SurfaceKind::Sphere { radius })
    }

    pub fn cylinder(radius: f64) -> Self {
        Self::new(SurfaceKind::Cylinder {
            radius,
            half_height: 1.0,
        })
    }

    pub fn torus(major: f64, minor: f64) -> Self {
        Self::new(SurfaceKind::Torus { major, minor })
    }

    pub fn helicoid(pitch: f64) -> Self {
        Self::new(SurfaceKind::Helicoid { pitch, radius: 1.0 })
    }

    pub fn with_pose(mut self, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        self.pose = Pose {
            rotation,
            translation,
        };
        self
    }

    /// Every length parameter positive and finite, pose rotation orthonormal.
    pub fn check(&self) -> Result<()> {
        let ok = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(EstimateError::invalid(name, format!("must be positive, got {v}")))
            }
        };
        match self.kind {
            SurfaceKind::Plane { half_extent } => ok("half_extent", half_extent)?,
            SurfaceKind::Sphere { radius } => ok("radius", radius)?,
            SurfaceKind::Cylinder {
                radius,
                half_height,
            } => {
                ok("radius", radius)?;
                ok("half_height", half_height)?;
            }
            SurfaceKind::Torus { major, minor } => {
                ok("major", major)?;
                ok("minor", minor)?;
                if minor >= major {
                    return Err(EstimateError::invalid("minor", "must be below the major radius"));
                }
            }
            SurfaceKind::Helicoid { pitch, radius } => {
                ok("pitch", pitch)?;
                ok("radius", radius)?;
            }
        }
        let r = self.pose.rotation;
        if (r.transpose() * r - Matrix3::identity()).abs().max() > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(EstimateError::invalid("pose", "rotation is not orthonormal"));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        match self.kind {
            SurfaceKind::Plane { half_extent } => 4.0 * half_extent * half_extent,
            SurfaceKind::Sphere { radius } => 4.0 * PI * radius * radius,
            SurfaceKind::Cylinder {
                radius,
                half_height,
            } => TAU * radius * 2.0 * half_height,
            SurfaceKind::Torus { major, minor } => 4.0 * PI * PI * major * minor,
            SurfaceKind::Helicoid { pitch, radius } => {
                let c = pitch / TAU;
                let prim = |r: f64| 0.5 * (r * (r * r + c * c).sqrt() + c * c * (r / c).asinh());
                TAU * (prim(radius) - prim(-radius))
            }
        }
    }

    /// Row layout: total arc length across rows and whether rows are closed loops.
    fn rows(&self) -> (f64, bool) {
        match self.kind {
            SurfaceKind::Plane { half_extent } => (2.0 * half_extent, false),
            SurfaceKind::Sphere { radius } => (PI * radius, true),
            SurfaceKind::Cylinder { half_height, .. } => (2.0 * half_height, true),
            SurfaceKind::Torus { minor, .. } => (TAU * minor, true),
            SurfaceKind::Helicoid { radius, .. } => (2.0 * radius, false),
        }
    }

    /// Length of the row at arc position `s` across rows.
    fn row_length(&self, s: f64) -> f64 {
        match self.kind {
            SurfaceKind::Plane { half_extent } => 2.0 * half_extent,
            SurfaceKind::Sphere { radius } => TAU * radius * (s / radius).sin(),
            SurfaceKind::Cylinder { radius, .. } => TAU * radius,
            SurfaceKind::Torus { major, minor } => TAU * (major + minor * (s / minor).cos()),
            SurfaceKind::Helicoid { pitch, radius } => {
                let c = pitch / TAU;
                let rho = s - radius;
                TAU * (rho * rho + c * c).sqrt()
            }
        }
    }

    /// Canonical-space geometry at row position `s` and along-row fraction `f ∈ [0,1)`,
    /// plus the intrinsic boundary distance.
    fn at(&self, s: f64, f: f64) -> (Vector3<f64>, GroundTruth, f64) {
        match self.kind {
            SurfaceKind::Plane { half_extent: h } => {
                let (x, y) = (2.0 * h * f - h, s - h);
                let frame = LocalFrame::identity();
                let gt = GroundTruth {
                    frame,
                    curvature: CurvatureInfo::flat(&frame),
                };
                (Vector3::new(x, y, 0.0), gt, (h - x.abs()).min(h - y.abs()))
            }
            SurfaceKind::Sphere { radius } => {
                let p = sphere_point(s / radius, TAU * f) * radius;
                (p, sphere_truth(&p, radius), f64::INFINITY)
            }
            SurfaceKind::Cylinder {
                radius,
                half_height,
            } => {
                let a = TAU * f;
                let z = s - half_height;
                let p = Vector3::new(radius * a.cos(), radius * a.sin(), z);
                (p, cylinder_truth(&p, radius), half_height - z.abs())
            }
            SurfaceKind::Torus { major, minor } => {
                let (u, v) = (TAU * f, s / minor);
                let p = torus_point(major, minor, u, v);
                (p, torus_truth(major, minor, u, v), f64::INFINITY)
            }
            SurfaceKind::Helicoid { pitch, radius } => {
                let c = pitch / TAU;
                let (rho, theta) = (s - radius, TAU * f);
                let p = Vector3::new(rho * theta.cos(), rho * theta.sin(), c * theta);
                let w = (rho * rho + c * c).sqrt();
                let along = theta.min(TAU - theta) * w;
                (p, helicoid_truth(c, rho, theta), (radius - rho.abs()).min(along))
            }
        }
    }

    fn place(&self, p: &Vector3<f64>, gt: &GroundTruth) -> (Vector3<f64>, GroundTruth) {
        let r = &self.pose.rotation;
        let frame = gt.frame.rotated(r);
        let c = gt.curvature;
        let curvature = CurvatureInfo {
            w1: r * c.w1,
            w2: r * c.w2,
            ..c
        };
        (r * p + self.pose.translation, GroundTruth { frame, curvature })
    }

    /// Area-uniform samples with exact truth, then isotropic Gaussian noise.
    pub fn sample(&self, opts: &SampleOptions) -> SurfaceSample {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let params = match opts.scheme {
            SamplingScheme::Stratified => self.stratified_params(opts.n, &mut rng),
            SamplingScheme::Iid => self.iid_params(opts.n, &mut rng),
        };
        let mut clean = Vec::with_capacity(opts.n);
        let mut truth = Vec::with_capacity(opts.n);
        let mut boundary_distance = Vec::with_capacity(opts.n);
        for (s, f) in params {
            let (p, gt, b) = self.at(s, f);
            let (p, gt) = self.place(&p, &gt);
            clean.push(p);
            truth.push(gt);
            boundary_distance.push(b);
        }
        let positions = if opts.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, opts.noise_sigma).expect("finite sigma");
            clean
                .iter()
                .map(|p| p + Vector3::from_fn(|_, _| normal.sample(&mut rng)))
                .collect()
        } else {
            clean.clone()
        };
        SurfaceSample {
            cloud: PointCloud::from_positions(positions),
            clean,
            truth,
            boundary_distance,
        }
    }

    fn stratified_params(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
        if n == 0 {
            return Vec::new();
        }
        let (span, closed) = self.rows();
        let spacing = (self.area() / n as f64 * 3f64.sqrt() / 2.0).sqrt();
        let rows = ((span / spacing).round() as usize).clamp(1, n);
        let row_gap = span / rows as f64;
        let centers: Vec<f64> = (0..rows).map(|k| (k as f64 + 0.5) * row_gap).collect();
        let lengths: Vec<f64> = centers.iter().map(|&s| self.row_length(s).max(0.0)).collect();
        let counts = largest_remainder(&lengths, n);
        let mut out = Vec::with_capacity(n);
        for ((&s0, &len), &count) in centers.iter().zip(&lengths).zip(&counts) {
            if count == 0 {
                continue;
            }
            let phase: f64 = if closed { rng.random() } else { 0.5 };
            let along_jitter = if len > 0.0 { 0.3 * spacing / len * count as f64 } else { 0.0 };
            for j in 0..count {
                let s = (s0 + 0.3 * spacing * rng.random_range(-1.0..1.0)).clamp(0.0, span);
                let mut f = (j as f64 + phase + along_jitter * rng.random_range(-1.0..1.0)) / count as f64;
                f = if closed { f.rem_euclid(1.0) } else { f.clamp(0.0, 1.0 - 1e-12) };
                out.push((s, f));
            }
        }
        out
    }

    fn iid_params(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
        let (span, _) = self.rows();
        let max_len = match self.kind {
            SurfaceKind::Sphere { radius } => TAU * radius,
            SurfaceKind::Torus { major, minor } => TAU * (major + minor),
            _ => self.row_length(0.0).max(self.row_length(span / 2.0)),
        };
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let s = rng.random::<f64>() * span;
            if rng.random::<f64>() * max_len <= self.row_length(s) {
                out.push((s, rng.random::<f64>()));
            }
        }
        out
    }
}

/// Splits `n` into integer shares proportional to `weights`, summing to `n`.
fn largest_remainder(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        let mut out = vec![0; weights.len()];
        if let Some(first) = out.first_mut() {
            *first = n;
        }
        return out;
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(n - assigned) {
        counts[k] += 1;
    }
    counts
}

fn sphere_point(polar: f64, azimuth: f64) -> Vector3<f64> {
    Vector3::new(polar.sin() * azimuth.cos(), polar.sin() * azimuth.sin(), polar.cos())
}

fn sphere_truth(p: &Vector3<f64>, radius: f64) -> GroundTruth {
    let frame = LocalFrame::from_normal(p);
    let k = -1.0 / radius;
    GroundTruth {
        frame,
        curvature: CurvatureInfo::new(k, frame.u1, k, frame.u2),
    }
}

fn cylinder_truth(p: &Vector3<f64>, radius: f64) -> GroundTruth {
    let n = Vector3::new(p.x, p.y, 0.0).normalize();
    let around = Vector3::z().cross(&n);
    let frame = LocalFrame::new(around, Vector3::z(), around.cross(&Vector3::z()));
    GroundTruth {
        frame,
        curvature: CurvatureInfo::new(-1.0 / radius, around, 0.0, Vector3::z()),
    }
}

fn torus_point(major: f64, minor: f64, u: f64, v: f64) -> Vector3<f64> {
    let w = major + minor * v.cos();
    Vector3::new(w * u.cos(), w * u.sin(), minor * v.sin())
}

fn torus_truth(major: f64, minor: f64, u: f64, v: f64) -> GroundTruth {
    let n = Vector3::new(v.cos() * u.cos(), v.cos() * u.sin(), v.sin());
    let parallel = Vector3::new(-u.sin(), u.cos(), 0.0);
    let meridian = Vector3::new(-v.sin() * u.cos(), -v.sin() * u.sin(), v.cos());
    let frame = LocalFrame::new(parallel, meridian, n);
    let k_parallel = -v.cos() / (major + minor * v.cos());
    GroundTruth {
        frame,
        curvature: CurvatureInfo::new(-1.0 / minor, meridian, k_parallel, parallel),
    }
}

fn helicoid_truth(c: f64, rho: f64, theta: f64) -> GroundTruth {
    let w = (rho * rho + c * c).sqrt();
    let e1 = Vector3::new(theta.cos(), theta.sin(), 0.0);
    let e2 = Vector3::new(-rho * theta.sin(), rho * theta.cos(), c) / w;
    let frame = LocalFrame::new(e1, e2, e1.cross(&e2));
    let k = c / (w * w);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    GroundTruth {
        frame,
        curvature: CurvatureInfo::new(-k, (e1 + e2) * s, k, (e1 - e2) * s),
    }
}

/// Exact frame and curvatures at a point within `1e-9` of the surface.
///
/// Boundaries are ignored: any point of the unbounded surface is accepted.
pub fn analytic_curvature(surface: &AnalyticSurface, point: &Vector3<f64>) -> Result<GroundTruth> {
    let local = surface.pose.rotation.transpose() * (point - surface.pose.translation);
    let off = |distance: f64| -> Result<()> {
        if distance.abs() <= TOL_ON_SURFACE {
            Ok(())
        } else {
            Err(EstimateError::OffSurface { distance })
        }
    };
    let gt = match surface.kind {
        SurfaceKind::Plane { .. } => {
            off(local.z)?;
            let frame = LocalFrame::identity();
            GroundTruth {
                frame,
                curvature: CurvatureInfo::flat(&frame),
            }
        }
        SurfaceKind::Sphere { radius } => {
            off(local.norm() - radius)?;
            sphere_truth(&local, radius)
        }
        SurfaceKind::Cylinder { radius, .. } => {
            let rxy = local.xy().norm();
            off(rxy - radius)?;
            cylinder_truth(&local, radius)
        }
        SurfaceKind::Torus { major, minor } => {
            let rxy = local.xy().norm();
            off((rxy - major).hypot(local.z) - minor)?;
            let u = local.y.atan2(local.x);
            let v = local.z.atan2(rxy - major);
            torus_truth(major, minor, u, v)
        }
        SurfaceKind::Helicoid { pitch, .. } => {
            let c = pitch / TAU;
            let theta = local.z / c;
            let dir = Vector3::new(theta.cos(), theta.sin(), 0.0);
            let rho = local.x * dir.x + local.y * dir.y;
            off((local.xy() - dir.xy() * rho).norm())?;
            helicoid_truth(c, rho, theta)
        }
    };
    let (_, placed) = surface.place(&local, &gt);
    Ok(placed)
}

impl fmt::Display for AnalyticSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SurfaceKind::Plane { half_extent } => write!(f, "plane:{half_extent}"),
            SurfaceKind::Sphere { radius } => write!(f, "sphere:{radius}"),
            SurfaceKind::Cylinder {
                radius,
                half_height,
            } => write!(f, "cylinder:{radius},{half_height}"),
            SurfaceKind::Torus { major, minor } => write!(f, "torus:{major},{minor}"),
            SurfaceKind::Helicoid { pitch, radius } => write!(f, "helicoid:{pitch},{radius}"),
        }
    }
}

/// Parses `plane`, `sphere:1.0`, `cylinder:0.5`, `torus:2,0.5`, `helicoid:12.566`;
/// an optional trailing number sets the plane half extent, cylinder half
/// height or helicoid radius.
impl FromStr for AnalyticSurface {
    type Err = EstimateError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let values: Vec<f64> = if args.trim().is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| EstimateError::invalid("surface", format!("bad number {v:?} in {s:?}")))
                })
                .collect::<Result<_>>()?
        };
        let arg = |i: usize, default: Option<f64>| {
            values
                .get(i)
                .copied()
                .or(default)
                .ok_or_else(|| EstimateError::invalid("surface", format!("{name} needs parameter #{}", i + 1)))
        };
        let (kind, max_args) = match name.trim().to_ascii_lowercase().as_str() {
            "plane" => (SurfaceKind::Plane { half_extent: arg(0, Some(1.0))? }, 1),
            "sphere" => (SurfaceKind::Sphere { radius: arg(0, Some(1.0))? }, 1),
            "cylinder" => (
                SurfaceKind::Cylinder {
                    radius: arg(0, Some(0.5))?,
                    half_height: arg(1, Some(1.0))?,
                },
                2,
            ),
            "torus" => (
                SurfaceKind::Torus {
                    major: arg(0, Some(2.0))?,
                    minor: arg(1, Some(0.5))?,
                },
                2,
            ),
            "helicoid" => (
                SurfaceKind::Helicoid {
                    pitch: arg(0, Some(4.0 * PI))?,
                    radius: arg(1, Some(1.0))?,
                },
                2,
            ),
            other => return Err(EstimateError::invalid("surface", format!("unknown surface {other:?}"))),
        };
        if values.len() > max_args {
            return Err(EstimateError::invalid("surface", format!("too many parameters in {s:?}")));
        }
        let surface = AnalyticSurface::new(kind);
        surface.check()?;
        Ok(surface)
    }
}

/// Local PCA: the least-variance direction of the centered neighborhood
/// (the point and its `k` neighbors) is the normal.
pub fn pca_baseline_frame(index: &SpatialIndex, i: usize, k: usize) -> Result<LocalFrame> {
    if k < 3 {
        return Err(EstimateError::invalid("k", "local PCA needs at least 3 neighbors"));
    }
    let list = index.knn(i, k)?;
    if list.len() < 3 {
        return Err(EstimateError::InsufficientNeighbors {
            required: 3,
            found: list.len(),
        });
    }
    let pts: Vec<Vector3<f64>> = std::iter::once(i)
        .chain(list.indices.iter().copied())
        .map(|j| index.position(j))
        .collect();
    let mean = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let cov = pts
        .iter()
        .map(|p| (p - mean) * (p - mean).transpose())
        .sum::<Matrix3<f64>>();
    let e = linalg::sym_eigen3(&cov);
    if !(e.values[1] > 1e-12 * e.values[0].max(f64::MIN_POSITIVE)) {
        return Err(EstimateError::DegenerateNeighborhood(
            "neighbors do not span a plane".into(),
        ));
    }
    LocalFrame::from_tangents(&e.vectors[0], &e.vectors[1])
        .ok_or_else(|| EstimateError::DegenerateNeighborhood("tangent basis collapsed".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Validate;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;

    fn all_kinds() -> Vec<AnalyticSurface> {
        vec![
            AnalyticSurface::plane(),
            AnalyticSurface::sphere(1.3),
            AnalyticSurface::cylinder(0.5),
            AnalyticSurface::torus(2.0, 0.5),
            AnalyticSurface::helicoid(4.0 * PI),
        ]
    }

    #[test]
    fn samples_lie_on_surface_with_valid_truth() {
        let pose = Rotation3::new(Vector3::new(0.4, -0.7, 0.2));
        for base in all_kinds() {
            let s = base.with_pose(*pose.matrix(), Vector3::new(1.0, -2.0, 0.5));
            for scheme in [SamplingScheme::Stratified, SamplingScheme::Iid] {
                let sample = s.sample(&SampleOptions::new(700, 3).with_scheme(scheme));
                assert_eq!(sample.len(), 700, "{s}");
                for (p, gt) in sample.clean.iter().zip(&sample.truth) {
                    let again = analytic_curvature(&s, p).unwrap();
                    assert!(gt.frame.is_valid());
                    assert!(gt.curvature.violations_in(&gt.frame).is_empty(), "{s}");
                    assert_relative_eq!(again.curvature.tau1, gt.curvature.tau1, epsilon = 1e-9);
                    assert_relative_eq!(again.curvature.tau2, gt.curvature.tau2, epsilon = 1e-9);
                    assert!(linalg::line_angle_deg(&again.frame.n, &gt.frame.n) < 1e-5);
                }
            }
        }
    }

    #[test]
    fn closed_form_values() {
        let sphere = AnalyticSurface::sphere(2.0);
        let gt = analytic_curvature(&sphere, &Vector3::new(0.0, 2.0, 0.0)).unwrap();
        assert_relative_eq!(gt.curvature.tau1.abs(), 0.5);
        assert_relative_eq!(gt.curvature.tau2.abs(), 0.5);
        let torus = AnalyticSurface::torus(2.0, 0.5);
        let gt = analytic_curvature(&torus, &Vector3::new(2.5, 0.0, 0.0)).unwrap();
        assert_relative_eq!(gt.curvature.tau1.abs(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(gt.curvature.tau2.abs(), 0.4, epsilon = 1e-12);
        let plane = AnalyticSurface::plane();
        let gt = analytic_curvature(&plane, &Vector3::new(0.3, 0.2, 0.0)).unwrap();
        assert_eq!((gt.curvature.tau1, gt.curvature.tau2), (0.0, 0.0));
        let cyl = AnalyticSurface::cylinder(0.5);
        let gt = analytic_curvature(&cyl, &Vector3::new(0.0, 0.5, 0.3)).unwrap();
        assert_relative_eq!(gt.curvature.tau1.abs(), 2.0);
        assert_eq!(gt.curvature.tau2, 0.0);
        assert!(gt.curvature.w1.z.abs() < 1e-15);
    }

    #[test]
    fn off_surface_points_are_rejected() {
        let sphere = AnalyticSurface::sphere(1.0);
        assert!(matches!(
            analytic_curvature(&sphere, &Vector3::new(0.0, 0.0, 1.1)),
            Err(EstimateError::OffSurface { .. })
        ));
        let heli = AnalyticSurface::helicoid(4.0 * PI);
        assert!(analytic_curvature(&heli, &Vector3::new(0.0, 0.5, 0.0)).is_err());
    }

    #[test]
    fn helicoid_is_minimal() {
        let s = AnalyticSurface::helicoid(4.0 * PI).sample(&SampleOptions::new(2000, 1));
        for gt in &s.truth {
            assert!(gt.curvature.mean_curvature().abs() < 1e-12);
            assert!((0.4 - 1e-9..=0.5 + 1e-9).contains(&gt.curvature.tau1.abs()));
        }
    }

    #[test]
    fn cylinder_truth_direction_is_around_axis() {
        let s = AnalyticSurface::cylinder(0.5).sample(&SampleOptions::new(500, 2));
        for gt in &s.truth {
            assert_relative_eq!(gt.curvature.tau1.abs(), 2.0);
            assert!(gt.curvature.w1.z.abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_noise_comes_after_truth() {
        let s = AnalyticSurface::sphere(1.0);
        let a = s.sample(&SampleOptions::new(1000, 5).with_noise(0.01));
        let b = s.sample(&SampleOptions::new(1000, 5).with_noise(0.01));
        assert_eq!(a, b);
        let clean = s.sample(&SampleOptions::new(1000, 5));
        assert_eq!(a.clean, clean.clean);
        assert_eq!(a.truth, clean.truth);
        assert_ne!(a.cloud.positions, a.clean);
        let rms = (a.cloud.positions.iter().zip(&a.clean).map(|(p, q)| (p - q).norm_squared()).sum::<f64>()
            / 3000.0)
            .sqrt();
        assert_relative_eq!(rms, 0.01, max_relative = 0.1);
    }

    fn octant_chi_square(points: &[Vector3<f64>]) -> f64 {
        let mut counts = [0usize; 8];
        for p in points {
            let k = (p.x > 0.0) as usize | ((p.y > 0.0) as usize) << 1 | ((p.z > 0.0) as usize) << 2;
            counts[k] += 1;
        }
        let expected = points.len() as f64 / 8.0;
        counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
    }

    #[test]
    fn sphere_samplers_are_octant_uniform() {
        // 1% upper quantile of chi-square with 7 degrees of freedom
        let critical = 18.475;
        for scheme in [SamplingScheme::Stratified, SamplingScheme::Iid] {
            let s = AnalyticSurface::sphere(1.0).sample(&SampleOptions::new(50_000, 11).with_scheme(scheme));
            assert!(octant_chi_square(&s.clean) < critical, "{scheme:?}");
        }
    }

    #[test]
    fn stratified_counts_are_exact() {
        assert_eq!(largest_remainder(&[1.0, 1.0, 1.0], 10), vec![4, 3, 3]);
        assert_eq!(largest_remainder(&[0.0, 0.0], 5), vec![5, 0]);
        for n in [1, 2, 7, 100] {
            for s in all_kinds() {
                assert_eq!(s.sample(&SampleOptions::new(n, 0)).len(), n);
            }
        }
    }

    #[test]
    fn area_matches_quadrature() {
        for s in all_kinds() {
            let (span, _) = s.rows();
            let m = 20_000;
            let quad: f64 = (0..m).map(|k| s.row_length((k as f64 + 0.5) * span / m as f64)).sum::<f64>() * span / m as f64;
            assert_relative_eq!(quad, s.area(), max_relative = 1e-6);
        }
    }

    #[test]
    fn surface_specs_parse() {
        assert_eq!("plane".parse::<AnalyticSurface>().unwrap(), AnalyticSurface::plane());
        assert_eq!("sphere:1.0".parse::<AnalyticSurface>().unwrap(), AnalyticSurface::sphere(1.0));
        assert_eq!("cylinder:0.5".parse::<AnalyticSurface>().unwrap(), AnalyticSurface::cylinder(0.5));
        assert_eq!("torus:2,0.5".parse::<AnalyticSurface>().unwrap(), AnalyticSurface::torus(2.0, 0.5));
        let h: AnalyticSurface = "helicoid:12.566".parse().unwrap();
        assert!(matches!(h.kind, SurfaceKind::Helicoid { pitch, .. } if pitch == 12.566));
        for bad in ["cube", "sphere:-1", "sphere:x", "torus:1,2", "sphere:1,2"] {
            assert!(bad.parse::<AnalyticSurface>().is_err(), "{bad}");
        }
        for s in all_kinds() {
            assert_eq!(s.to_string().parse::<AnalyticSurface>().unwrap(), s);
        }
    }

    #[test]
    fn pca_normal_of_planar_neighbors() {
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                pts.push(Vector3::new(i as f64 * 0.1 + 0.01 * j as f64, j as f64 * 0.1, 0.0));
            }
        }
        let r = Rotation3::new(Vector3::new(0.2, 0.9, -0.4));
        let cloud = PointCloud::from_positions(pts).transformed(r.matrix(), &Vector3::zeros());
        let idx = SpatialIndex::build(&cloud.positions).unwrap();
        let f = pca_baseline_frame(&idx, 14, 8).unwrap();
        assert!(f.n.cross(&(r * Vector3::z())).norm() < 1e-6);
        let line: Vec<Vector3<f64>> = (0..10).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let idx = SpatialIndex::build(&line).unwrap();
        assert!(pca_baseline_frame(&idx, 4, 5).is_err());
    }
}
