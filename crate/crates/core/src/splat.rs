//! Geometry-constrained operations on Gaussian primitives: covariance warm-up,
//! flat-region upsampling, normal-truncated updates, shape regularizers and
//! split/clone placement.
//!
//! Everything consumes curvature magnitudes clamped to `[xi_min, xi_max]`, so
//! flat regions never produce infinite ratios or offsets.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{EstimateError, Result};
use crate::spatial::SpatialIndex;
use crate::types::{CurvatureInfo, GaussianPrimitive, LocalFrame, PointCloud};

/// Neighbors averaged for the warm-up length scale.
pub const DEFAULT_SCALE_NEIGHBORS: usize = 3;
/// Neighbors paired with a flat point during upsampling.
pub const DEFAULT_UPSAMPLE_NEIGHBORS: usize = 10;

/// Mean distance to the `k` nearest neighbors of point `i`.
pub fn neighbor_scale(index: &SpatialIndex, i: usize, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(EstimateError::invalid("k", "must be at least 1"));
    }
    let list = index.knn(i, k)?;
    if list.is_empty() {
        return Err(EstimateError::InsufficientNeighbors {
            required: 1,
            found: 0,
        });
    }
    let mean = list.distances.iter().sum::<f64>() / list.len() as f64;
    if mean > 0.0 {
        Ok(mean)
    } else {
        Err(EstimateError::DuplicatePoints { center: i })
    }
}

/// Curvature magnitudes clamped to `[xi_min, xi_max]`, `t1 >= t2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampedCurvature {
    pub t1: f64,
    pub t2: f64,
}

impl ClampedCurvature {
    pub fn ratio(&self) -> f64 {
        self.t1 / self.t2
    }
}

pub fn clamp_curvature(tau1: f64, tau2: f64, xi_min: f64, xi_max: f64) -> ClampedCurvature {
    let c = |t: f64| t.abs().max(xi_min).min(xi_max);
    let (a, b) = (c(tau1), c(tau2));
    ClampedCurvature {
        t1: a.max(b),
        t2: a.min(b),
    }
}

/// `(|τ1| + |τ2|) / 2`.
pub fn mac(curv: &CurvatureInfo) -> f64 {
    (curv.tau1.abs() + curv.tau2.abs()) / 2.0
}

/// Upper clamp from a batch: mean + 3·std of all `|τ|`.
///
/// Falls back to `10·xi_min` when the batch is empty or too flat to exceed
/// `xi_min`.
pub fn resolve_xi_max(curvatures: &[CurvatureInfo], xi_min: f64) -> f64 {
    let values: Vec<f64> = curvatures
        .iter()
        .flat_map(|c| [c.tau1.abs(), c.tau2.abs()])
        .filter(|v| v.is_finite())
        .collect();
    if values.is_empty() {
        return 10.0 * xi_min;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let xi_max = mean + 3.0 * var.sqrt();
    if xi_max > xi_min {
        xi_max
    } else {
        10.0 * xi_min
    }
}

/// Rotation with columns `(w̃2, w̃1, n)` and scales
/// `((s/2)·√(t1/t2), (s/2)·√(t2/t1), xi_min)` for `s = s_nbr`.
///
/// The long axis follows the direction of least bending; the product of the
/// two tangent scales is always `(s_nbr/2)²`.
pub fn warmup_covariance(
    frame: &LocalFrame,
    curv: &CurvatureInfo,
    s_nbr: f64,
    xi_min: f64,
    xi_max: f64,
) -> (Matrix3<f64>, Vector3<f64>) {
    let clamped = clamp_curvature(curv.tau1, curv.tau2, xi_min, xi_max);
    let half = s_nbr / 2.0;
    let rho = (clamped.t1 / clamped.t2).sqrt();
    let scales = Vector3::new(half * rho, half / rho, xi_min);
    let rotation = match LocalFrame::from_tangents(&curv.w2, &curv.w1) {
        Some(f) => Matrix3::from_columns(&[f.u1, f.u2, f.n]),
        None => Matrix3::from_columns(&[frame.u2, frame.u1, -frame.n]),
    };
    (rotation, scales)
}

/// A full primitive warmed up from geometry, with caller-chosen appearance.
pub fn warmup_primitive(
    position: Vector3<f64>,
    frame: &LocalFrame,
    curv: &CurvatureInfo,
    s_nbr: f64,
    xi_min: f64,
    xi_max: f64,
    color: Vector3<f64>,
    opacity: f64,
) -> GaussianPrimitive {
    let (rotation, scales) = warmup_covariance(frame, curv, s_nbr, xi_min, xi_max);
    GaussianPrimitive {
        position,
        rotation,
        scales,
        opacity,
        color,
    }
}

/// Points added by [`upsample_flat_regions`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Upsampled {
    pub positions: Vec<Vector3<f64>>,
    pub colors: Option<Vec<Vector3<f64>>>,
    /// The two source points of every new midpoint.
    pub parents: Vec<(usize, usize)>,
}

impl Upsampled {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

const DEDUP_TOL: f64 = 1e-9;

/// Midpoints between every point with MAC below `xi_min` and each of its `k`
/// nearest neighbors; colors are averaged the same way. Midpoints within
/// `1e-9` of an earlier one are dropped.
pub fn upsample_flat_regions(
    index: &SpatialIndex,
    cloud: &PointCloud,
    curvatures: &[CurvatureInfo],
    xi_min: f64,
    k: usize,
) -> Result<Upsampled> {
    if curvatures.len() != cloud.len() || index.len() != cloud.len() {
        return Err(EstimateError::MissingInput("one curvature per point"));
    }
    let mut out = Upsampled {
        colors: cloud.colors.as_ref().map(|_| Vec::new()),
        ..Default::default()
    };
    let mut seen: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let cell = |p: &Vector3<f64>| p.map(|c| (c / DEDUP_TOL).floor() as i64);
    for (i, curv) in curvatures.iter().enumerate() {
        if !(mac(curv) < xi_min) {
            continue;
        }
        for &j in &index.knn(i, k)?.indices {
            let mid = (cloud.positions[i] + cloud.positions[j]) / 2.0;
            let c = cell(&mid);
            let duplicate = neighbor_cells(c).any(|key| {
                seen.get(&key).is_some_and(|ids| {
                    ids.iter().any(|&id| (out.positions[id] - mid).norm() <= DEDUP_TOL)
                })
            });
            if duplicate {
                continue;
            }
            seen.entry([c.x, c.y, c.z]).or_default().push(out.positions.len());
            out.positions.push(mid);
            out.parents.push((i, j));
            if let (Some(dst), Some(src)) = (out.colors.as_mut(), cloud.colors.as_ref()) {
                dst.push((src[i] + src[j]) / 2.0);
            }
        }
    }
    Ok(out)
}

fn neighbor_cells(c: Vector3<i64>) -> impl Iterator<Item = [i64; 3]> {
    (-1..=1).flat_map(move |dx| {
        (-1..=1).flat_map(move |dy| (-1..=1).map(move |dz| [c.x + dx, c.y + dy, c.z + dz]))
    })
}

/// `v⊤ + min(cap/‖v⊥‖, 1)·v⊥`; the factor is 1 when `v⊥ = 0`.
pub fn truncate_normal(v: &Vector3<f64>, frame: &LocalFrame, cap: f64) -> Vector3<f64> {
    let tangential = frame.tangential(v);
    let normal = frame.normal_part(v);
    let norm = normal.norm();
    let factor = if norm > 0.0 { (cap / norm).min(1.0) } else { 1.0 };
    tangential + normal * factor
}

/// Gradient step whose normal displacement is capped at `omega·xi_min`.
pub fn truncated_gradient_step(
    mu: &Vector3<f64>,
    grad: &Vector3<f64>,
    frame: &LocalFrame,
    omega: f64,
    xi_min: f64,
) -> Vector3<f64> {
    mu - truncate_normal(grad, frame, xi_min) * omega
}

/// Clone placement: the accumulated gradient with its normal part capped at `xi_min`.
pub fn clone_primitive(
    mu: &Vector3<f64>,
    accum_grad: &Vector3<f64>,
    frame: &LocalFrame,
    xi_min: f64,
) -> Vector3<f64> {
    mu + truncate_normal(accum_grad, frame, xi_min)
}

/// Split placement `μ + (ρ2/t2) w̃2 + (ρ1/t1) w̃1 + ρ3·xi_min·n`.
pub fn split_primitive(
    mu: &Vector3<f64>,
    frame: &LocalFrame,
    curv: &CurvatureInfo,
    clamped: &ClampedCurvature,
    rho: &Vector3<f64>,
    xi_min: f64,
) -> Vector3<f64> {
    mu + curv.w2 * (rho.y / clamped.t2) + curv.w1 * (rho.x / clamped.t1) + frame.n * (rho.z * xi_min)
}

/// [`split_primitive`] with `ρ` drawn from a standard normal.
pub fn sample_split<R: Rng + ?Sized>(
    mu: &Vector3<f64>,
    frame: &LocalFrame,
    curv: &CurvatureInfo,
    clamped: &ClampedCurvature,
    xi_min: f64,
    rng: &mut R,
) -> Vector3<f64> {
    let rho = Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    split_primitive(mu, frame, curv, clamped, &rho, xi_min)
}

/// Loss value with its gradient in whatever parameters apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerResult<G> {
    pub loss: f64,
    pub grad: G,
}

/// `max(0, s1/s2 − t1/t2 − xi_min) + s3²` with gradient in `(s1, s2, s3)`.
pub fn scale_regularizer(
    s1: f64,
    s2: f64,
    s3: f64,
    clamped: &ClampedCurvature,
    xi_min: f64,
) -> RegularizerResult<Vector3<f64>> {
    let hinge = s1 / s2 - clamped.ratio() - xi_min;
    let (active, d1, d2) = if hinge > 0.0 {
        (hinge, 1.0 / s2, -s1 / (s2 * s2))
    } else {
        (0.0, 0.0, 0.0)
    };
    RegularizerResult {
        loss: active + s3 * s3,
        grad: Vector3::new(d1, d2, 2.0 * s3),
    }
}

/// `Σ_k (1 − ⟨r_k, a_k⟩)²` for references `a = (w̃2, w̃1, n)`, each flipped to
/// face its column; gradient with respect to the entries of `R`.
pub fn rotation_regularizer(
    rotation: &Matrix3<f64>,
    frame: &LocalFrame,
    curv: &CurvatureInfo,
) -> RegularizerResult<Matrix3<f64>> {
    let refs = [curv.w2, curv.w1, frame.n];
    let mut loss = 0.0;
    let mut grad = Matrix3::zeros();
    for (k, a) in refs.iter().enumerate() {
        let r = rotation.column(k);
        let a = if r.dot(a) < 0.0 { -a } else { *a };
        let gap = 1.0 - r.dot(&a);
        loss += gap * gap;
        grad.set_column(k, &(a * (-2.0 * gap)));
    }
    RegularizerResult { loss, grad }
}
