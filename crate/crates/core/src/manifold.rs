//! Manifold-based estimator: tangent frames from the tangential kernel matrix
//! and principal curvatures from the nested Leibniz-defect shape operator.
//!
//! All metric quantities come out of the Laplacian with an unknown constant
//! factor `c`. The tangent eigenvalues of the kernel matrix are 1 in theory,
//! so `c` is read off the two leading eigenvalues; the shape operator nests
//! two Laplacians and is divided by `c²`.

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{EstimateError, Result};
use crate::laplacian::{self, KernelWeights, MIN_NEIGHBORS};
use crate::linalg::{self, SymEigen3};
use crate::par::{self, Stopwatch};
use crate::spatial::{NeighborList, SpatialIndex};
use crate::types::{Auto, CurvatureInfo, EstimatorConfig, LocalFrame, PointCloud, Validate};
use crate::varifold;

/// `𝒦 = ½ D` for the coordinate defect matrix `D`, with sorted eigenpairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentialKernelMatrix {
    pub m: Matrix3<f64>,
    pub eigen: SymEigen3,
}

impl TangentialKernelMatrix {
    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        let m = linalg::symmetrize3(&m);
        Self {
            m,
            eigen: linalg::sym_eigen3(&m),
        }
    }

    /// Builds the kernel matrix from a coordinate defect matrix.
    pub fn from_defect(defect: &Matrix3<f64>) -> Self {
        Self::from_matrix(defect * 0.5)
    }
}

/// Shape operator in ambient coordinates and restricted to the tangent plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeOperatorMatrix {
    pub s_full: Matrix3<f64>,
    pub s_tangent: Matrix2<f64>,
}

/// Kernel matrix at the center of `w`.
pub fn tangential_kernel_matrix(
    positions: &[Vector3<f64>],
    w: &KernelWeights,
    t: f64,
) -> Result<TangentialKernelMatrix> {
    if w.neighbors.len() < MIN_NEIGHBORS {
        return Err(EstimateError::InsufficientNeighbors {
            required: MIN_NEIGHBORS,
            found: w.neighbors.len(),
        });
    }
    Ok(TangentialKernelMatrix::from_defect(
        &laplacian::coordinate_defect_matrix(positions, w, t),
    ))
}

/// `c = (λ1 + λ2) / 2`.
pub fn calibration_scale(km: &TangentialKernelMatrix) -> Result<f64> {
    let [l1, l2, _] = km.eigen.values;
    let c = 0.5 * (l1 + l2);
    if l1 > 0.0 && c > 0.0 && c.is_finite() {
        Ok(c)
    } else {
        Err(EstimateError::DegenerateNeighborhood(format!(
            "leading kernel eigenvalue {l1} is not positive"
        )))
    }
}

/// Frame from the two leading eigenvectors, plus the number of calibrated
/// eigenvalues above `dim_threshold`.
pub fn local_frame_from_kernel(
    km: &TangentialKernelMatrix,
    c: f64,
    dim_threshold: f64,
) -> (LocalFrame, usize) {
    let dimension = km
        .eigen
        .values
        .iter()
        .filter(|&&l| l / c > dim_threshold)
        .count();
    let [a, b, _] = km.eigen.vectors;
    let frame = LocalFrame::from_tangents(&a, &b).unwrap_or_else(|| LocalFrame::from_normal(&km.eigen.vectors[2]));
    (frame, dimension)
}

/// `s(η, e_d1, e_d2)` for every coordinate pair, for the height function with
/// gradient `eta`, given the coordinate defect matrices `defects` of all points.
///
/// With `A[f1,f2,f3] = Lbnz[f1, Lbnz[f2,f3]]` and linear `f`, the inner defect
/// at a neighbor `j` is `f2ᵀ D_j f3`, so the outer sum only needs `D_j`.
pub fn shape_operator_for_height(
    positions: &[Vector3<f64>],
    w: &KernelWeights,
    eta: &Vector3<f64>,
    defects: &[Matrix3<f64>],
    t: f64,
) -> Matrix3<f64> {
    let q = positions[w.center];
    let d_center = defects[w.center];
    // m1[a][b] = A[e_a, η, e_b], m2[a][b] = A[η, e_a, e_b]
    let mut m1 = Matrix3::zeros();
    let mut m2 = Matrix3::zeros();
    for (&j, &wj) in w.neighbors.iter().zip(&w.weights) {
        let d = positions[j] - q;
        let delta = defects[j] - d_center;
        m1 += d * (delta * eta).transpose() * wj;
        m2 += delta * (wj * eta.dot(&d));
    }
    let s = (m1 + m1.transpose() - m2) / (8.0 * t);
    linalg::symmetrize3(&s)
}

/// Shape operator at the center of `w` along the frame normal.
pub fn shape_operator_full(
    positions: &[Vector3<f64>],
    w: &KernelWeights,
    frame: &LocalFrame,
    defects: &[Matrix3<f64>],
    t: f64,
) -> Result<ShapeOperatorMatrix> {
    if defects.len() != positions.len() {
        return Err(EstimateError::MissingInput("neighbor kernel matrices"));
    }
    let s_full = shape_operator_for_height(positions, w, &frame.n, defects, t);
    Ok(ShapeOperatorMatrix {
        s_full,
        s_tangent: project_tangent(&s_full, frame),
    })
}

fn project_tangent(s: &Matrix3<f64>, frame: &LocalFrame) -> Matrix2<f64> {
    let u = [frame.u1, frame.u2];
    let mut out = Matrix2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            out[(a, b)] = u[a].dot(&(s * u[b]));
        }
    }
    linalg::symmetrize2(&out)
}

/// Eigen-decomposes `s_tangent / c²` and lifts the eigenvectors to ambient space.
pub fn principal_curvatures(so: &ShapeOperatorMatrix, frame: &LocalFrame, c: f64) -> CurvatureInfo {
    curvatures_from_tangent_matrix(&(so.s_tangent / (c * c)), frame)
}

/// Curvatures and ambient principal directions of a 2×2 tangent-basis matrix.
pub fn curvatures_from_tangent_matrix(m: &Matrix2<f64>, frame: &LocalFrame) -> CurvatureInfo {
    let e = linalg::sym_eigen2(m);
    let lift = |v: &nalgebra::Vector2<f64>| (frame.u1 * v.x + frame.u2 * v.y).normalize();
    CurvatureInfo::new(e.values[0], lift(&e.vectors[0]), e.values[1], lift(&e.vectors[1]))
}

/// Why a point has no trustworthy estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointFlag {
    InsufficientNeighbors,
    DuplicatePoints,
    DegenerateNeighborhood,
    NonPositiveBandwidth,
    /// No neighbor finished the first pass, so no shape operator exists.
    MissingNeighborFrames,
    /// No other point inside the varifold kernel support.
    EmptySupport,
}

impl PointFlag {
    pub(crate) fn from_error(e: &EstimateError) -> Self {
        match e {
            EstimateError::InsufficientNeighbors { .. } => PointFlag::InsufficientNeighbors,
            EstimateError::DuplicatePoints { .. } => PointFlag::DuplicatePoints,
            EstimateError::NonPositiveBandwidth => PointFlag::NonPositiveBandwidth,
            EstimateError::EmptySupport { .. } => PointFlag::EmptySupport,
            _ => PointFlag::DegenerateNeighborhood,
        }
    }
}

/// Per-point side information of the manifold estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointDiagnostics {
    /// Kernel eigenvalues divided by the calibration scale, descending.
    pub eigenvalues: [f64; 3],
    pub calibration: f64,
    pub dimension: usize,
    /// Calibrated gap `(λ2 − λ3) / c` between tangent and normal eigenvalues.
    pub eigen_gap: f64,
    pub flag: Option<PointFlag>,
}

impl PointDiagnostics {
    fn flagged(flag: PointFlag) -> Self {
        Self {
            eigenvalues: [0.0; 3],
            calibration: 0.0,
            dimension: 0,
            eigen_gap: 0.0,
            flag: Some(flag),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.flag.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub frame: LocalFrame,
    pub curvature: CurvatureInfo,
    pub diagnostics: PointDiagnostics,
}

impl PointEstimate {
    fn fallback(flag: PointFlag) -> Self {
        let frame = LocalFrame::identity();
        Self {
            frame,
            curvature: CurvatureInfo::flat(&frame),
            diagnostics: PointDiagnostics::flagged(flag),
        }
    }
}

/// Wall-clock seconds per phase; zero where no clock is available.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub index_build: f64,
    pub pass1: f64,
    pub pass2: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.index_build + self.pass1 + self.pass2
    }
}

/// Output of [`estimate_all`]; `config` has every automatic value resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldEstimate {
    pub config: EstimatorConfig,
    pub points: Vec<PointEstimate>,
    pub timings: Timings,
}

impl ManifoldEstimate {
    pub fn frames(&self) -> Vec<LocalFrame> {
        self.points.iter().map(|p| p.frame).collect()
    }

    pub fn curvatures(&self) -> Vec<CurvatureInfo> {
        self.points.iter().map(|p| p.curvature).collect()
    }

    pub fn flagged_count(&self) -> usize {
        self.points.iter().filter(|p| !p.diagnostics.is_ok()).count()
    }
}

/// Replaces automatic bandwidth and varifold scale by concrete values.
pub fn resolve_config(index: &SpatialIndex, config: &EstimatorConfig) -> Result<EstimatorConfig> {
    let violations = config.violations();
    if let Some(v) = violations.first() {
        return Err(EstimateError::invalid("config", format!("{v:?}")));
    }
    let mut out = config.clone();
    let needs_scale = config.bandwidth_t == Auto::Auto || config.varifold_eps == Auto::Auto;
    if needs_scale {
        let d = laplacian::mean_kth_neighbor_distance(index, config.k_neighbors, config.seed);
        // a lone point or fully coincident cloud has no length scale; any
        // positive value works since every point gets flagged anyway
        let d = if d > 0.0 { d } else { 1.0 };
        if config.bandwidth_t == Auto::Auto {
            out.bandwidth_t = Auto::Fixed(laplacian::AUTO_BANDWIDTH_FACTOR * d * d);
        }
        if config.varifold_eps == Auto::Auto {
            out.varifold_eps = Auto::Fixed(varifold::AUTO_EPS_FACTOR * d);
        }
    }
    Ok(out)
}

struct FirstPass {
    weights: KernelWeights,
    defect: Matrix3<f64>,
    frame: LocalFrame,
    diagnostics: PointDiagnostics,
}

fn neighbor_list(index: &SpatialIndex, i: usize, k: usize) -> NeighborList {
    let mut buf = Vec::with_capacity(k + 1);
    index.knn_raw(&index.position(i), k, Some(i as u32), &mut buf);
    NeighborList::from_candidates(&buf)
}

fn first_pass(
    index: &SpatialIndex,
    i: usize,
    config: &EstimatorConfig,
    t: f64,
    covariances: Option<&[Matrix3<f64>]>,
) -> Result<FirstPass> {
    let positions = index.positions();
    let neighbors = neighbor_list(index, i, config.k_neighbors);
    let weights = match covariances {
        Some(covs) => laplacian::adaptive_weights_for(positions, i, &neighbors, t, covs, config.xi_min)?,
        None => laplacian::gaussian_weights_for(i, &neighbors, t)?,
    };
    let defect = laplacian::coordinate_defect_matrix(positions, &weights, t);
    let km = TangentialKernelMatrix::from_defect(&defect);
    let c = calibration_scale(&km)?;
    let (frame, dimension) = local_frame_from_kernel(&km, c, config.dim_threshold);
    let ev = km.eigen.values.map(|l| l / c);
    Ok(FirstPass {
        weights,
        defect,
        frame,
        diagnostics: PointDiagnostics {
            eigenvalues: ev,
            calibration: c,
            dimension,
            eigen_gap: ev[1] - ev[2],
            flag: None,
        },
    })
}

/// Two-pass batch estimate: frames for every point, then shape operators.
///
/// Per-point failures are flagged with an identity frame and zero curvature;
/// only an empty cloud or an invalid configuration is an error.
pub fn estimate_all(cloud: &PointCloud, config: &EstimatorConfig) -> Result<ManifoldEstimate> {
    if cloud.is_empty() {
        return Err(EstimateError::EmptyCloud);
    }
    let clock = Stopwatch::start();
    let index = SpatialIndex::build(&cloud.positions)?;
    let index_build = clock.seconds();
    let mut estimate = estimate_with_index(&index, cloud, config)?;
    estimate.timings.index_build = index_build;
    Ok(estimate)
}

/// [`estimate_all`] over a prebuilt index of `cloud.positions`.
pub fn estimate_with_index(
    index: &SpatialIndex,
    cloud: &PointCloud,
    config: &EstimatorConfig,
) -> Result<ManifoldEstimate> {
    if cloud.is_empty() {
        return Err(EstimateError::EmptyCloud);
    }
    let mut config = resolve_config(index, config)?;
    let t = config.bandwidth_t.fixed().expect("resolved");
    let boosted: Option<Vec<Matrix3<f64>>> = if config.adaptive_kernel {
        let covs = cloud
            .covariances
            .as_ref()
            .ok_or(EstimateError::MissingInput("per-point covariances for the adaptive kernel"))?;
        Some(covs.iter().map(|c| c + Matrix3::identity() * config.xi_min).collect())
    } else {
        None
    };

    let clock = Stopwatch::start();
    let first: Vec<Result<FirstPass>> =
        par::map_range(index.len(), |i| first_pass(index, i, &config, t, boosted.as_deref()));
    let pass1 = clock.seconds();

    let clock = Stopwatch::start();
    let positions = index.positions();
    let defects: Vec<Matrix3<f64>> = first
        .iter()
        .map(|r| r.as_ref().map(|f| f.defect).unwrap_or_else(|_| Matrix3::zeros()))
        .collect();
    let ok: Vec<bool> = first.iter().map(|r| r.is_ok()).collect();
    let points: Vec<PointEstimate> = par::map_range(index.len(), |i| {
        let f = match &first[i] {
            Ok(f) => f,
            Err(e) => return PointEstimate::fallback(PointFlag::from_error(e)),
        };
        let weights = usable_weights(&f.weights, &ok);
        if weights.neighbors.is_empty() {
            let mut p = PointEstimate::fallback(PointFlag::MissingNeighborFrames);
            p.frame = f.frame;
            p.curvature = CurvatureInfo::flat(&f.frame);
            return p;
        }
        let s_full = shape_operator_for_height(positions, &weights, &f.frame.n, &defects, t);
        let so = ShapeOperatorMatrix {
            s_full,
            s_tangent: project_tangent(&s_full, &f.frame),
        };
        PointEstimate {
            frame: f.frame,
            curvature: principal_curvatures(&so, &f.frame, f.diagnostics.calibration),
            diagnostics: f.diagnostics,
        }
    });
    let pass2 = clock.seconds();

    if config.xi_max == Auto::Auto {
        let curvatures: Vec<CurvatureInfo> = points
            .iter()
            .filter(|p| p.diagnostics.is_ok())
            .map(|p| p.curvature)
            .collect();
        config.xi_max = Auto::Fixed(crate::splat::resolve_xi_max(&curvatures, config.xi_min));
    }
    Ok(ManifoldEstimate {
        config,
        points,
        timings: Timings {
            index_build: 0.0,
            pass1,
            pass2,
        },
    })
}

/// Drops neighbors without a first-pass result and renormalizes.
fn usable_weights<'a>(w: &'a KernelWeights, ok: &[bool]) -> std::borrow::Cow<'a, KernelWeights> {
    if w.neighbors.iter().all(|&j| ok[j]) {
        return std::borrow::Cow::Borrowed(w);
    }
    let (neighbors, weights): (Vec<usize>, Vec<f64>) = w
        .neighbors
        .iter()
        .zip(&w.weights)
        .filter(|(&j, _)| ok[j])
        .map(|(&j, &x)| (j, x))
        .unzip();
    let total: f64 = weights.iter().sum();
    std::borrow::Cow::Owned(KernelWeights {
        center: w.center,
        neighbors,
        weights: weights.iter().map(|x| x / total).collect(),
    })
}
