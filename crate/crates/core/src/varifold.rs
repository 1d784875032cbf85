//! Approximate weak second fundamental form of a point-cloud varifold.
//!
//! Each point carries a tangent plane (from a frame) and a mass. Pairs of
//! points inside the kernel support contribute a 2×2 term in the tangent
//! basis of the center; the normalized, kernel-weighted sum is a matrix whose
//! eigenpairs approximate the principal curvatures and directions.

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{EstimateError, Result};
use crate::linalg;
use crate::manifold::{self, PointFlag};
use crate::par::{self, Stopwatch};
use crate::spatial::{NeighborList, SpatialIndex};
use crate::types::{CurvatureInfo, EstimatorConfig, LocalFrame, PointCloud, VarifoldNormalizer};

/// Automatic support radius as a multiple of the mean k-th neighbor distance.
pub const AUTO_EPS_FACTOR: f64 = 1.0;

/// Smooth bump `exp(−1/(1 − (r/ε)²))` on `[0, ε)`, zero outside.
pub fn kernel_upsilon(r: f64, eps: f64) -> f64 {
    let x = r / eps;
    if x < 1.0 {
        (-1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

/// Mass kernel `χ_ε`, equal to the bump.
pub fn kernel_chi(r: f64, eps: f64) -> f64 {
    kernel_upsilon(r, eps)
}

/// Exact derivative of [`kernel_upsilon`] in `r`.
pub fn kernel_upsilon_prime(r: f64, eps: f64) -> f64 {
    let x = r / eps;
    if x < 1.0 {
        let s = 1.0 - x * x;
        kernel_upsilon(r, eps) * (-2.0 * r / (eps * eps)) / (s * s)
    } else {
        0.0
    }
}

/// `−r Υ'_ε(r) / 3`; vanishes at `r = 0` and outside the support.
pub fn kernel_chi_paired(r: f64, eps: f64) -> f64 {
    -r * kernel_upsilon_prime(r, eps) / 3.0
}

/// Mass kernel selected by `normalizer`.
pub fn normalizer_kernel(normalizer: VarifoldNormalizer, r: f64, eps: f64) -> f64 {
    match normalizer {
        VarifoldNormalizer::Paired => kernel_chi_paired(r, eps),
        VarifoldNormalizer::Bump => kernel_chi(r, eps),
    }
}

/// WSFF in the tangent basis `[u1, u2]` of the center point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WsffMatrix {
    pub b: Matrix2<f64>,
}

fn tangent_projector(n: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::identity() - n * n.transpose()
}

/// Pair term for center `i` and neighbor `j`:
/// `2 (Ṽⱼ V)ᵀ sym(nᵢ dᵀ) Ṽⱼ V + (dᵀ Ṽⱼ nᵢ)(Vᵀ Ṽⱼ V − I)` with `d = μᵢ − μⱼ`,
/// `Ṽⱼ = I − nⱼ nⱼᵀ` and `V = [u1ᵢ, u2ᵢ]`.
pub fn wsff_pair_term(
    mu_i: &Vector3<f64>,
    frame_i: &LocalFrame,
    mu_j: &Vector3<f64>,
    frame_j: &LocalFrame,
) -> Matrix2<f64> {
    let d = mu_i - mu_j;
    let n = frame_i.n;
    let proj_j = tangent_projector(&frame_j.n);
    let pv = [proj_j * frame_i.u1, proj_j * frame_i.u2];
    let v = [frame_i.u1, frame_i.u2];
    let sym = (n * d.transpose() + d * n.transpose()) * 0.5;
    let height = d.dot(&(proj_j * n));
    let mut out = Matrix2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            let delta = if a == b { 1.0 } else { 0.0 };
            out[(a, b)] =
                2.0 * pv[a].dot(&(sym * pv[b])) + height * (v[a].dot(&pv[b]) - delta);
        }
    }
    out
}

/// Normalized kernel-weighted sum of pair terms over `neighbors` of `i`.
///
/// `neighbors` need not exclude `i` or points outside the support; both
/// contribute nothing to the numerator. The center's own mass enters the
/// normalizer.
pub fn wsff_matrix(
    i: usize,
    positions: &[Vector3<f64>],
    neighbors: &NeighborList,
    frames: &[LocalFrame],
    masses: Option<&[f64]>,
    eps: f64,
    normalizer: VarifoldNormalizer,
) -> Result<WsffMatrix> {
    if !(eps > 0.0) {
        return Err(EstimateError::invalid("varifold_eps", format!("must be positive, got {eps}")));
    }
    let mass = |j: usize| masses.map_or(1.0, |m| m[j]);
    let mu_i = positions[i];
    let mut denominator = mass(i) * normalizer_kernel(normalizer, 0.0, eps);
    let mut numerator = Matrix2::zeros();
    for &j in &neighbors.indices {
        if j == i {
            continue;
        }
        let r = (positions[j] - mu_i).norm();
        if r == 0.0 || r >= eps {
            continue;
        }
        let m = mass(j);
        denominator += m * normalizer_kernel(normalizer, r, eps);
        let pair = wsff_pair_term(&mu_i, &frames[i], &positions[j], &frames[j]);
        numerator += pair * (m * kernel_upsilon_prime(r, eps) / (3.0 * r));
    }
    if !(denominator > 0.0) {
        return Err(EstimateError::EmptySupport { center: i });
    }
    Ok(WsffMatrix {
        b: linalg::symmetrize2(&(numerator / denominator)),
    })
}

/// Eigenpairs of the WSFF lifted to ambient directions.
pub fn curvatures_from_wsff(w: &WsffMatrix, frame: &LocalFrame) -> CurvatureInfo {
    manifold::curvatures_from_tangent_matrix(&w.b, frame)
}

/// Output of [`estimate_all_varifold`].
#[derive(Debug, Clone, PartialEq)]
pub struct VarifoldEstimate {
    pub config: EstimatorConfig,
    pub curvatures: Vec<CurvatureInfo>,
    pub flags: Vec<Option<PointFlag>>,
    pub seconds: f64,
}

/// Curvatures of every point from precomputed frames.
pub fn estimate_all_varifold(
    cloud: &PointCloud,
    frames: &[LocalFrame],
    config: &EstimatorConfig,
) -> Result<VarifoldEstimate> {
    if cloud.is_empty() {
        return Err(EstimateError::EmptyCloud);
    }
    let index = SpatialIndex::build(&cloud.positions)?;
    estimate_varifold_with_index(&index, frames, config)
}

/// [`estimate_all_varifold`] over a prebuilt index.
pub fn estimate_varifold_with_index(
    index: &SpatialIndex,
    frames: &[LocalFrame],
    config: &EstimatorConfig,
) -> Result<VarifoldEstimate> {
    if frames.len() != index.len() {
        return Err(EstimateError::MissingInput("one frame per point"));
    }
    if let Some(m) = &config.masses {
        if m.len() != index.len() {
            return Err(EstimateError::MissingInput("one mass per point"));
        }
    }
    let config = manifold::resolve_config(index, config)?;
    let eps = config.varifold_eps.fixed().expect("resolved");
    let clock = Stopwatch::start();
    let results: Vec<Result<CurvatureInfo>> = par::map_range(index.len(), |i| {
        let neighbors = index.within_radius(i, eps)?;
        let w = wsff_matrix(
            i,
            index.positions(),
            &neighbors,
            frames,
            config.masses.as_deref(),
            eps,
            config.varifold_normalizer,
        )?;
        Ok(curvatures_from_wsff(&w, &frames[i]))
    });
    let seconds = clock.seconds();
    let (curvatures, flags) = results
        .into_iter()
        .zip(frames)
        .map(|(r, f)| match r {
            Ok(c) => (c, None),
            Err(e) => (CurvatureInfo::flat(f), Some(PointFlag::from_error(&e))),
        })
        .unzip();
    Ok(VarifoldEstimate {
        config,
        curvatures,
        flags,
        seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    #[test]
    fn bump_values() {
        assert_eq!(kernel_chi(0.0, 0.3), (-1.0f64).exp());
        assert_eq!(kernel_upsilon_prime(0.0, 0.3), 0.0);
        assert_eq!(kernel_chi(0.3, 0.3), 0.0);
        assert_eq!(kernel_upsilon_prime(0.5, 0.3), 0.0);
        assert_eq!(kernel_chi_paired(0.0, 0.3), 0.0);
        assert!(kernel_chi_paired(0.1, 0.3) > 0.0);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let eps = 0.7;
        let h = 1e-7;
        for k in 1..200 {
            let r = eps * k as f64 / 200.0;
            let fd = (kernel_upsilon(r + h, eps) - kernel_upsilon(r - h, eps)) / (2.0 * h);
            assert!((fd - kernel_upsilon_prime(r, eps)).abs() < 1e-6, "r = {r}");
        }
    }

    #[test]
    fn coplanar_and_coincident_pairs_vanish() {
        let f = LocalFrame::identity();
        let a = Vector3::new(0.1, 0.2, 0.0);
        let b = Vector3::new(-0.3, 0.05, 0.0);
        assert_eq!(wsff_pair_term(&a, &f, &b, &f), Matrix2::zeros());
        let g = LocalFrame::from_normal(&Vector3::new(0.3, -0.2, 1.0).normalize());
        assert_eq!(wsff_pair_term(&a, &f, &a, &g), Matrix2::zeros());
    }

    #[test]
    fn single_neighbor_reduces_to_one_term() {
        let eps = 1.0;
        let positions = vec![Vector3::zeros(), Vector3::new(0.3, 0.1, 0.05)];
        let frames = vec![
            LocalFrame::identity(),
            LocalFrame::from_normal(&Vector3::new(0.2, 0.1, 1.0).normalize()),
        ];
        let list = NeighborList {
            indices: vec![1],
            distances: vec![positions[1].norm()],
        };
        let w = wsff_matrix(0, &positions, &list, &frames, None, eps, VarifoldNormalizer::Paired).unwrap();
        let r = positions[1].norm();
        let pair = wsff_pair_term(&positions[0], &frames[0], &positions[1], &frames[1]);
        let expected = pair * (kernel_upsilon_prime(r, eps) / (3.0 * r * kernel_chi_paired(r, eps)));
        assert!((w.b - linalg::symmetrize2(&expected)).abs().max() < 1e-14);
    }

    #[test]
    fn empty_support_is_an_error() {
        let positions = vec![Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0)];
        let frames = vec![LocalFrame::identity(); 2];
        let list = NeighborList {
            indices: vec![1],
            distances: vec![2.0],
        };
        assert_eq!(
            wsff_matrix(0, &positions, &list, &frames, None, 1.0, VarifoldNormalizer::Paired).unwrap_err(),
            EstimateError::EmptySupport { center: 0 }
        );
        // the bump normalizer counts the center itself
        assert!(wsff_matrix(0, &positions, &list, &frames, None, 1.0, VarifoldNormalizer::Bump).is_ok());
    }

    #[test]
    fn diagonal_matrix_gives_axis_directions() {
        let frame = LocalFrame::identity();
        let c = curvatures_from_wsff(&WsffMatrix { b: Matrix2::new(2.0, 0.0, 0.0, 0.1) }, &frame);
        assert_eq!((c.tau1, c.tau2), (2.0, 0.1));
        assert_relative_eq!(c.w1.dot(&frame.u1).abs(), 1.0);
        let z = curvatures_from_wsff(&WsffMatrix { b: Matrix2::zeros() }, &frame);
        assert_eq!((z.tau1, z.tau2), (0.0, 0.0));
    }

    /// Pair term from the un-simplified contraction `Vᵀ t̄ V`, where `t̄`
    /// contracts the three-index tensor `t` with the center normal.
    fn pair_term_from_tensor(
        mu_i: &Vector3<f64>,
        frame_i: &LocalFrame,
        mu_j: &Vector3<f64>,
        frame_j: &LocalFrame,
    ) -> Matrix2<f64> {
        let vj = tangent_projector(&frame_j.n);
        let vi = tangent_projector(&frame_i.n);
        let dv = vj - vi;
        let p = vj * (mu_i - mu_j);
        let n = frame_i.n;
        let mut tbar = Matrix3::zeros();
        for d1 in 0..3 {
            for d2 in 0..3 {
                let mut s = 0.0;
                for d3 in 0..3 {
                    s += n[d3] * (dv[(d2, d3)] * p[d1] + dv[(d1, d3)] * p[d2] + dv[(d1, d2)] * p[d3]);
                }
                tbar[(d1, d2)] = s;
            }
        }
        let v = [frame_i.u1, frame_i.u2];
        Matrix2::from_fn(|a, b| v[a].dot(&(tbar * v[b])))
    }

    fn frame_strategy() -> impl Strategy<Value = LocalFrame> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -3.1f64..3.1).prop_map(|(x, y, z, a)| {
            let axis = Vector3::new(x, y, z + 1e-3);
            let r = Rotation3::new(axis.normalize() * a);
            LocalFrame::identity().rotated(r.matrix())
        })
    }

    fn offset() -> impl Strategy<Value = Vector3<f64>> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(x, y, z)| Vector3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn simplified_pair_term_matches_tensor_form(fi in frame_strategy(), fj in frame_strategy(), a in offset(), b in offset()) {
            let fast = wsff_pair_term(&a, &fi, &b, &fj);
            let slow = pair_term_from_tensor(&a, &fi, &b, &fj);
            prop_assert!((fast - slow).abs().max() < 1e-10);
        }
    }

    fn sphere(n: usize) -> (Vec<Vector3<f64>>, Vec<LocalFrame>) {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let pts: Vec<Vector3<f64>> = (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let rho = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                Vector3::new(rho * phi.cos(), rho * phi.sin(), z)
            })
            .collect();
        let frames = pts.iter().map(|p| LocalFrame::from_normal(p)).collect();
        (pts, frames)
    }

    #[test]
    fn sphere_with_exact_frames_is_umbilic_unit() {
        let (pts, frames) = sphere(4000);
        let cloud = PointCloud::from_positions(pts);
        let est = estimate_all_varifold(&cloud, &frames, &EstimatorConfig::default()).unwrap();
        let mut err: Vec<f64> = est
            .curvatures
            .iter()
            .flat_map(|c| [(c.tau1.abs() - 1.0).abs(), (c.tau2.abs() - 1.0).abs()])
            .collect();
        err.sort_by(f64::total_cmp);
        assert!(err[err.len() / 2] < 0.2, "median {}", err[err.len() / 2]);
        assert!(est.flags.iter().all(|f| f.is_none()));
    }

    #[test]
    fn doubling_masses_changes_nothing() {
        let (pts, frames) = sphere(600);
        let cloud = PointCloud::from_positions(pts);
        let base = estimate_all_varifold(&cloud, &frames, &EstimatorConfig::default()).unwrap();
        let cfg = EstimatorConfig {
            masses: Some(vec![2.0; 600]),
            ..Default::default()
        };
        let doubled = estimate_all_varifold(&cloud, &frames, &cfg).unwrap();
        for (a, b) in base.curvatures.iter().zip(&doubled.curvatures) {
            assert!((a.tau1 - b.tau1).abs() < 1e-12 && (a.tau2 - b.tau2).abs() < 1e-12);
        }
    }

    #[test]
    fn curvature_scales_inversely_with_length() {
        let (pts, frames) = sphere(600);
        let cfg = EstimatorConfig {
            varifold_eps: crate::types::Auto::Fixed(0.2),
            ..Default::default()
        };
        let base = estimate_all_varifold(&PointCloud::from_positions(pts.clone()), &frames, &cfg).unwrap();
        let lambda = 3.0;
        let scaled_cfg = EstimatorConfig {
            varifold_eps: crate::types::Auto::Fixed(0.2 * lambda),
            ..Default::default()
        };
        let scaled = PointCloud::from_positions(pts.iter().map(|p| p * lambda).collect());
        let big = estimate_all_varifold(&scaled, &frames, &scaled_cfg).unwrap();
        for (a, b) in base.curvatures.iter().zip(&big.curvatures) {
            assert!((a.tau1 / lambda - b.tau1).abs() < 1e-9);
            assert!((a.tau2 / lambda - b.tau2).abs() < 1e-9);
        }
    }

    #[test]
    fn points_outside_support_contribute_exactly_nothing() {
        let (pts, frames) = sphere(300);
        let eps = 0.3;
        let all = NeighborList {
            indices: (0..pts.len()).collect(),
            distances: pts.iter().map(|p| (p - pts[0]).norm()).collect(),
        };
        let inside = NeighborList {
            indices: (0..pts.len()).filter(|&j| (pts[j] - pts[0]).norm() < eps).collect(),
            distances: vec![],
        };
        let a = wsff_matrix(0, &pts, &all, &frames, None, eps, VarifoldNormalizer::Paired).unwrap();
        let b = wsff_matrix(0, &pts, &inside, &frames, None, eps, VarifoldNormalizer::Paired).unwrap();
        assert_eq!(a, b);
    }
}
