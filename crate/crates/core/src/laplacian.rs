//! Monte-Carlo Laplacian on sampled functions.
//!
//! For a point `q` with neighbors `c_j` and normalized Markov kernel weights
//! `w_j`, the (uncalibrated) Laplacian of `f` is
//! `L[f](q) = (1/t) Σ_j w_j (f(c_j) − f(q))`.
//! The unknown overall constant is absorbed later by the calibration scale
//! of the tangential kernel matrix, so everything here stays uncalibrated.

use nalgebra::{Cholesky, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{EstimateError, Result};
use crate::linalg;
use crate::spatial::{NeighborList, SpatialIndex};

/// Fewest neighbors that still give a stable 3×3 kernel matrix.
pub const MIN_NEIGHBORS: usize = 4;

/// Normalized transition weights from a center to its neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    pub center: usize,
    pub neighbors: Vec<usize>,
    pub weights: Vec<f64>,
}

/// A scalar function restricted to a center point and its neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFunction {
    pub center: f64,
    pub neighbors: Vec<f64>,
}

impl LocalFunction {
    pub fn new(center: f64, neighbors: Vec<f64>) -> Self {
        Self { center, neighbors }
    }

    /// Samples `f` at the center position and at every neighbor position.
    pub fn sample<F: Fn(&Vector3<f64>) -> f64>(
        positions: &[Vector3<f64>],
        weights: &KernelWeights,
        f: F,
    ) -> Self {
        Self {
            center: f(&positions[weights.center]),
            neighbors: weights.neighbors.iter().map(|&j| f(&positions[j])).collect(),
        }
    }

    /// The linear function `x ↦ ⟨a, x − origin⟩`.
    pub fn linear(
        positions: &[Vector3<f64>],
        weights: &KernelWeights,
        a: &Vector3<f64>,
        origin: &Vector3<f64>,
    ) -> Self {
        Self::sample(positions, weights, |p| a.dot(&(p - origin)))
    }

    /// Pointwise product.
    pub fn product(&self, other: &LocalFunction) -> LocalFunction {
        LocalFunction {
            center: self.center * other.center,
            neighbors: self
                .neighbors
                .iter()
                .zip(&other.neighbors)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> LocalFunction {
        LocalFunction {
            center: self.center * s,
            neighbors: self.neighbors.iter().map(|v| v * s).collect(),
        }
    }
}

fn check_neighbors(center: usize, neighbors: &NeighborList) -> Result<()> {
    if neighbors.len() < MIN_NEIGHBORS {
        return Err(EstimateError::InsufficientNeighbors {
            required: MIN_NEIGHBORS,
            found: neighbors.len(),
        });
    }
    if neighbors.distances.iter().all(|&d| d == 0.0) {
        return Err(EstimateError::DuplicatePoints { center });
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(EstimateError::invalid("bandwidth_t", format!("must be positive, got {t}")))
    }
}

/// Normalizes `exp(-e_j)` with the smallest exponent shifted to zero.
fn normalized_exp(center: usize, neighbors: &NeighborList, exponents: Vec<f64>) -> KernelWeights {
    let e_min = exponents.iter().copied().fold(f64::INFINITY, f64::min);
    let mut weights: Vec<f64> = exponents.iter().map(|e| (-(e - e_min)).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    KernelWeights {
        center,
        neighbors: neighbors.indices.clone(),
        weights,
    }
}

/// Gaussian weights `∝ exp(−‖q_i − q_j‖²/t)` over the k nearest neighbors of `i`.
pub fn gaussian_kernel_weights(index: &SpatialIndex, i: usize, k: usize, t: f64) -> Result<KernelWeights> {
    let neighbors = index.knn(i, k)?;
    gaussian_weights_for(i, &neighbors, t)
}

/// Gaussian weights for an already computed neighbor list.
pub fn gaussian_weights_for(center: usize, neighbors: &NeighborList, t: f64) -> Result<KernelWeights> {
    check_t(t)?;
    check_neighbors(center, neighbors)?;
    let exponents = neighbors.distances.iter().map(|d| d * d / t).collect();
    Ok(normalized_exp(center, neighbors, exponents))
}

/// Covariance-adaptive weights `∝ exp(−dᵀ Λ⁻¹ d)` with
/// `Λ = t·sym(Σ_i Σ_j) + xi_min·I`.
pub fn adaptive_kernel_weights(
    index: &SpatialIndex,
    i: usize,
    k: usize,
    t: f64,
    covariances: &[Matrix3<f64>],
    xi_min: f64,
) -> Result<KernelWeights> {
    let neighbors = index.knn(i, k)?;
    adaptive_weights_for(index.positions(), i, &neighbors, t, covariances, xi_min)
}

pub fn adaptive_weights_for(
    positions: &[Vector3<f64>],
    center: usize,
    neighbors: &NeighborList,
    t: f64,
    covariances: &[Matrix3<f64>],
    xi_min: f64,
) -> Result<KernelWeights> {
    check_t(t)?;
    check_neighbors(center, neighbors)?;
    if covariances.len() != positions.len() {
        return Err(EstimateError::MissingInput("per-point covariances"));
    }
    let q = positions[center];
    let sigma_i = covariances[center];
    let mut exponents = Vec::with_capacity(neighbors.len());
    for &j in &neighbors.indices {
        let lambda = linalg::symmetrize3(&(sigma_i * covariances[j])) * t
            + Matrix3::identity() * xi_min;
        let chol = Cholesky::new(lambda).ok_or(EstimateError::NonPositiveBandwidth)?;
        let d = positions[j] - q;
        exponents.push(d.dot(&chol.solve(&d)));
    }
    Ok(normalized_exp(center, neighbors, exponents))
}

/// Uncalibrated Laplacian `(1/t) Σ w_j (f_j − f(q))`.
pub fn apply_laplacian(f: &LocalFunction, w: &KernelWeights, t: f64) -> f64 {
    debug_assert_eq!(f.neighbors.len(), w.weights.len());
    let s: f64 = w
        .weights
        .iter()
        .zip(&f.neighbors)
        .map(|(wj, fj)| wj * (fj - f.center))
        .sum();
    s / t
}

/// Leibniz defect `L[fh] − f L[h] − h L[f]`, evaluated in its product form
/// `(1/t) Σ w_j (f_j − f(q))(h_j − h(q))`.
pub fn leibniz_defect(f: &LocalFunction, h: &LocalFunction, w: &KernelWeights, t: f64) -> f64 {
    debug_assert_eq!(f.neighbors.len(), w.weights.len());
    debug_assert_eq!(h.neighbors.len(), w.weights.len());
    let s: f64 = w
        .weights
        .iter()
        .zip(f.neighbors.iter().zip(&h.neighbors))
        .map(|(wj, (fj, hj))| wj * (fj - f.center) * (hj - h.center))
        .sum();
    s / t
}

/// Leibniz defects of all coordinate-function pairs at once:
/// `D[a][b] = (1/t) Σ w_j d_ja d_jb` with `d_j = c_j − q`.
///
/// For linear functions `f = ⟨a,·⟩`, `h = ⟨b,·⟩` the defect is `aᵀ D b`.
pub fn coordinate_defect_matrix(positions: &[Vector3<f64>], w: &KernelWeights, t: f64) -> Matrix3<f64> {
    let q = positions[w.center];
    let mut m = Matrix3::zeros();
    for (&j, &wj) in w.neighbors.iter().zip(&w.weights) {
        let d = positions[j] - q;
        m += d * d.transpose() * wj;
    }
    linalg::symmetrize3(&(m / t))
}

/// Mean distance to the k-th neighbor over a seeded 1% subsample
/// (at least `min(n, 100)` points). Returns 0 for clouds with one point.
pub fn mean_kth_neighbor_distance(index: &SpatialIndex, k: usize, seed: u64) -> f64 {
    let n = index.len();
    if n < 2 || k == 0 {
        return 0.0;
    }
    let amount = (n.div_ceil(100)).max(n.min(100));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = rand::seq::index::sample(&mut rng, n, amount).into_vec();
    ids.sort_unstable();
    let mut total = 0.0;
    let mut count = 0usize;
    let mut buf = Vec::with_capacity(k + 1);
    for id in ids {
        index.knn_raw(&index.position(id), k, Some(id as u32), &mut buf);
        if let Some(&(d2, _)) = buf.last() {
            total += d2.sqrt();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Fraction of the squared k-th neighbor distance used as the automatic bandwidth.
pub const AUTO_BANDWIDTH_FACTOR: f64 = 0.5;

/// Automatic bandwidth `t = ½ · (mean k-th neighbor distance)²`.
pub fn auto_bandwidth(index: &SpatialIndex, k: usize, seed: u64) -> f64 {
    let d = mean_kth_neighbor_distance(index, k, seed);
    AUTO_BANDWIDTH_FACTOR * d * d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn weights(center: usize, neighbors: Vec<usize>, weights: Vec<f64>) -> KernelWeights {
        KernelWeights {
            center,
            neighbors,
            weights,
        }
    }

    fn list(distances: &[f64]) -> NeighborList {
        NeighborList {
            indices: (1..=distances.len()).collect(),
            distances: distances.to_vec(),
        }
    }

    #[test]
    fn equal_distances_get_equal_weights() {
        let w = gaussian_weights_for(0, &list(&[1.0, 1.0, 1.0, 1.0]), 0.3).unwrap();
        w.weights.iter().for_each(|&x| assert_relative_eq!(x, 0.25, epsilon = 1e-15));
        let two = normalized_exp(0, &list(&[2.0, 2.0]), vec![4.0, 4.0]);
        assert_eq!(two.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn weight_ratio_follows_the_exponential() {
        let d = 0.7;
        let w = gaussian_weights_for(0, &list(&[d, 2.0 * d, 3.0 * d, 3.0 * d]), d * d).unwrap();
        assert_relative_eq!(w.weights[0] / w.weights[1], 3f64.exp(), max_relative = 1e-13);
    }

    #[test]
    fn huge_bandwidth_gives_uniform_weights() {
        let w = gaussian_weights_for(0, &list(&[0.1, 0.5, 1.0, 2.0, 3.0]), 1e12).unwrap();
        w.weights.iter().for_each(|&x| assert_relative_eq!(x, 0.2, epsilon = 1e-10));
    }

    #[test]
    fn duplicates_and_short_lists_fail() {
        assert_eq!(
            gaussian_weights_for(3, &list(&[0.0; 5]), 1.0).unwrap_err(),
            EstimateError::DuplicatePoints { center: 3 }
        );
        assert!(matches!(
            gaussian_weights_for(0, &list(&[1.0, 2.0]), 1.0),
            Err(EstimateError::InsufficientNeighbors { required: 4, found: 2 })
        ));
        assert!(gaussian_weights_for(0, &list(&[1.0; 4]), 0.0).is_err());
    }

    fn cross_stencil() -> Vec<Vector3<f64>> {
        let mut p = vec![Vector3::zeros()];
        for (x, y) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
            p.push(Vector3::new(x, y, 0.0));
        }
        p
    }

    #[test]
    fn isotropic_covariances_reduce_to_gaussian() {
        let pts = cross_stencil();
        let idx = SpatialIndex::build(&pts).unwrap();
        let covs = vec![Matrix3::identity(); pts.len()];
        let t = 0.8;
        let xi = 1e-3;
        let a = adaptive_kernel_weights(&idx, 0, 8, t, &covs, xi).unwrap();
        let g = gaussian_kernel_weights(&idx, 0, 8, t + xi).unwrap();
        for (x, y) in a.weights.iter().zip(&g.weights) {
            assert_relative_eq!(x, y, epsilon = 1e-14);
        }
        assert_relative_eq!(a.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn stretched_covariance_prefers_its_long_axis() {
        let pts = vec![
            Vector3::zeros(),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(-1.0, 0.0, 0.0),
            Vector3::new(0.0, -1.0, 0.0),
        ];
        let idx = SpatialIndex::build(&pts).unwrap();
        let cov = Matrix3::from_diagonal(&Vector3::new(9.0, 1.0, 1.0));
        let covs = vec![cov; pts.len()];
        let w = adaptive_kernel_weights(&idx, 0, 4, 1.0, &covs, 1e-3).unwrap();
        // independent evaluation of the two quadratic forms
        let lam = cov * cov + Matrix3::identity() * 1e-3;
        let qx = 1.0 / lam[(0, 0)];
        let qy = 1.0 / lam[(1, 1)];
        let pos_x = w.neighbors.iter().position(|&j| j == 1).unwrap();
        let pos_y = w.neighbors.iter().position(|&j| j == 2).unwrap();
        assert!(w.weights[pos_x] > w.weights[pos_y]);
        assert_relative_eq!(w.weights[pos_x] / w.weights[pos_y], (qy - qx).exp(), max_relative = 1e-12);
    }

    #[test]
    fn indefinite_bandwidth_is_an_error() {
        let pts = cross_stencil();
        let idx = SpatialIndex::build(&pts).unwrap();
        let bad = Matrix3::from_diagonal(&Vector3::new(-5.0, 1.0, 1.0));
        let mut covs = vec![Matrix3::identity(); pts.len()];
        covs[0] = bad;
        assert_eq!(
            adaptive_kernel_weights(&idx, 0, 8, 1.0, &covs, 1e-3).unwrap_err(),
            EstimateError::NonPositiveBandwidth
        );
    }

    #[test]
    fn constants_are_annihilated() {
        let w = weights(0, vec![1, 2, 3, 4], vec![0.1, 0.2, 0.3, 0.4]);
        let c = LocalFunction::new(2.5, vec![2.5; 4]);
        let h = LocalFunction::new(0.3, vec![1.0, -2.0, 0.5, 7.0]);
        assert_eq!(apply_laplacian(&c, &w, 0.1), 0.0);
        assert_eq!(leibniz_defect(&c, &h, &w, 0.1), 0.0);
        assert_eq!(leibniz_defect(&h, &c, &w, 0.1), 0.0);
    }

    #[test]
    fn odd_function_on_symmetric_stencil_vanishes() {
        let pts = cross_stencil();
        let idx = SpatialIndex::build(&pts).unwrap();
        let w = gaussian_kernel_weights(&idx, 0, 8, 1.0).unwrap();
        let f = LocalFunction::sample(&pts, &w, |p| p.x);
        assert!(apply_laplacian(&f, &w, 1.0).abs() < 1e-3);
    }

    #[test]
    fn coordinate_defect_matrix_matches_scalar_defects() {
        let pts = cross_stencil();
        let idx = SpatialIndex::build(&pts).unwrap();
        let w = gaussian_kernel_weights(&idx, 0, 8, 0.7).unwrap();
        let m = coordinate_defect_matrix(&pts, &w, 0.7);
        for a in 0..3 {
            for b in 0..3 {
                let fa = LocalFunction::linear(&pts, &w, &Vector3::ith(a, 1.0), &pts[0]);
                let fb = LocalFunction::linear(&pts, &w, &Vector3::ith(b, 1.0), &pts[0]);
                assert_relative_eq!(m[(a, b)], leibniz_defect(&fa, &fb, &w, 0.7), epsilon = 1e-14);
            }
        }
    }

    fn random_setup() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, f64, f64, f64)> {
        (4usize..24).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.01f64..1.0, n),
                proptest::collection::vec(-5.0f64..5.0, n + 1),
                proptest::collection::vec(-5.0f64..5.0, n + 1),
                0.05f64..3.0,
                -3.0f64..3.0,
                -3.0f64..3.0,
            )
        })
    }

    fn setup(raw: &[f64], fv: &[f64], hv: &[f64]) -> (KernelWeights, LocalFunction, LocalFunction) {
        let total: f64 = raw.iter().sum();
        let w = weights(0, (1..=raw.len()).collect(), raw.iter().map(|x| x / total).collect());
        let f = LocalFunction::new(fv[0], fv[1..].to_vec());
        let h = LocalFunction::new(hv[0], hv[1..].to_vec());
        (w, f, h)
    }

    proptest! {
        #[test]
        fn laplacian_is_linear((raw, fv, hv, t, a, b) in random_setup()) {
            let (w, f, h) = setup(&raw, &fv, &hv);
            let combo = LocalFunction::new(
                a * f.center + b * h.center,
                f.neighbors.iter().zip(&h.neighbors).map(|(x, y)| a * x + b * y).collect(),
            );
            let lhs = apply_laplacian(&combo, &w, t);
            let rhs = a * apply_laplacian(&f, &w, t) + b * apply_laplacian(&h, &w, t);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }

        #[test]
        fn defect_is_symmetric_and_psd((raw, fv, hv, t, _a, _b) in random_setup()) {
            let (w, f, h) = setup(&raw, &fv, &hv);
            prop_assert!((leibniz_defect(&f, &h, &w, t) - leibniz_defect(&h, &f, &w, t)).abs() <= 1e-12);
            prop_assert!(leibniz_defect(&f, &f, &w, t) >= 0.0);
        }

        #[test]
        fn product_form_equals_three_laplacian_form((raw, fv, hv, t, _a, _b) in random_setup()) {
            let (w, f, h) = setup(&raw, &fv, &hv);
            let three = apply_laplacian(&f.product(&h), &w, t)
                - f.center * apply_laplacian(&h, &w, t)
                - h.center * apply_laplacian(&f, &w, t);
            let product = leibniz_defect(&f, &h, &w, t);
            prop_assert!((three - product).abs() <= 1e-10 * (1.0 + product.abs()));
        }
    }
}
