//! Shared domain types.
//!
//! Everything here is an immutable value with cheap invariant checks; the
//! estimators live in their own modules.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::linalg;

const UNIT_TOL: f64 = 1e-9;
const DIRECTION_TOL: f64 = 1e-6;

/// A broken invariant, as reported by [`Validate::violations`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite(&'static str),
    NotUnit { field: &'static str, norm: f64 },
    NotOrthogonal { a: &'static str, b: &'static str, dot: f64 },
    NotRightHanded { det: f64 },
    ScaleOrder { s1: f64, s2: f64 },
    NonPositiveScale { index: usize, value: f64 },
    OpacityRange(f64),
    ColorRange(f64),
    CurvatureOrder { tau1: f64, tau2: f64 },
    DirectionOffTangent { field: &'static str, dot: f64 },
    MacMismatch { expected: f64, found: f64 },
    NotSymmetric { asymmetry: f64 },
    NotPsd { min_eigenvalue: f64 },
    TooFewNeighbors(usize),
    ClampBounds { xi_min: f64, xi_max: f64 },
    NonPositive(&'static str),
    MassCount { expected: usize, found: usize },
}

pub trait Validate {
    /// Every violated invariant; empty iff the value is valid.
    fn violations(&self) -> Vec<Violation>;

    fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }
}

fn check_unit(out: &mut Vec<Violation>, field: &'static str, v: &Vector3<f64>) {
    if !v.iter().all(|c| c.is_finite()) {
        out.push(Violation::NonFinite(field));
        return;
    }
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_TOL {
        out.push(Violation::NotUnit { field, norm });
    }
}

fn check_orthogonal(
    out: &mut Vec<Violation>,
    a: (&'static str, &Vector3<f64>),
    b: (&'static str, &Vector3<f64>),
    tol: f64,
) {
    let dot = a.1.dot(b.1);
    if dot.abs() > tol {
        out.push(Violation::NotOrthogonal { a: a.0, b: b.0, dot });
    }
}

/// Orthonormal tangent basis `u1, u2` and unit normal `n` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub u1: Vector3<f64>,
    pub u2: Vector3<f64>,
    pub n: Vector3<f64>,
}

impl LocalFrame {
    pub fn new(u1: Vector3<f64>, u2: Vector3<f64>, n: Vector3<f64>) -> Self {
        Self { u1, u2, n }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::x(), Vector3::y(), Vector3::z())
    }

    /// Orthonormalizes `(a, b)` and sets `n = u1 × u2`.
    pub fn from_tangents(a: &Vector3<f64>, b: &Vector3<f64>) -> Option<Self> {
        linalg::orthonormal_pair(a, b).map(|[u1, u2, n]| Self { u1, u2, n })
    }

    /// A frame with the given normal and an arbitrary tangent basis.
    pub fn from_normal(n: &Vector3<f64>) -> Self {
        let n = n.normalize();
        let u1 = linalg::any_orthogonal(&n);
        let u2 = n.cross(&u1);
        Self { u1, u2, n }
    }

    /// Projection of `v` on the tangent plane, `⟨u1,v⟩u1 + ⟨u2,v⟩u2`.
    pub fn tangential(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.u1 * self.u1.dot(v) + self.u2 * self.u2.dot(v)
    }

    /// Projection of `v` on the normal line, `⟨n,v⟩n`.
    pub fn normal_part(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.n * self.n.dot(v)
    }

    /// Tangent projector `I − n nᵀ`.
    pub fn tangent_projector(&self) -> Matrix3<f64> {
        Matrix3::identity() - self.n * self.n.transpose()
    }

    /// Applies a rotation to every axis.
    pub fn rotated(&self, r: &Matrix3<f64>) -> Self {
        Self::new(r * self.u1, r * self.u2, r * self.n)
    }
}

impl Validate for LocalFrame {
    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_unit(&mut out, "u1", &self.u1);
        check_unit(&mut out, "u2", &self.u2);
        check_unit(&mut out, "n", &self.n);
        check_orthogonal(&mut out, ("u1", &self.u1), ("u2", &self.u2), UNIT_TOL);
        check_orthogonal(&mut out, ("u1", &self.u1), ("n", &self.n), UNIT_TOL);
        check_orthogonal(&mut out, ("u2", &self.u2), ("n", &self.n), UNIT_TOL);
        out
    }
}

/// Principal curvatures with their ambient principal directions.
///
/// Signs are relative to the normal of the frame they were computed in.
/// `|tau1| >= |tau2|` always holds for values built with [`CurvatureInfo::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureInfo {
    pub tau1: f64,
    pub tau2: f64,
    pub w1: Vector3<f64>,
    pub w2: Vector3<f64>,
    /// Mean absolute curvature `(|tau1| + |tau2|) / 2`.
    pub mac: f64,
}

impl CurvatureInfo {
    /// Orders the pairs by curvature magnitude, swapping directions with them.
    pub fn new(tau_a: f64, w_a: Vector3<f64>, tau_b: f64, w_b: Vector3<f64>) -> Self {
        let ((tau1, w1), (tau2, w2)) = if tau_b.abs() > tau_a.abs() {
            ((tau_b, w_b), (tau_a, w_a))
        } else {
            ((tau_a, w_a), (tau_b, w_b))
        };
        Self {
            tau1,
            tau2,
            w1,
            w2,
            mac: 0.5 * (tau1.abs() + tau2.abs()),
        }
    }

    /// Zero curvature with directions taken from the frame's tangents.
    pub fn flat(frame: &LocalFrame) -> Self {
        Self::new(0.0, frame.u1, 0.0, frame.u2)
    }

    pub fn mean_curvature(&self) -> f64 {
        0.5 * (self.tau1 + self.tau2)
    }

    pub fn gaussian_curvature(&self) -> f64 {
        self.tau1 * self.tau2
    }

    /// Invariant check including tangency of the directions to `frame`.
    pub fn violations_in(&self, frame: &LocalFrame) -> Vec<Violation> {
        let mut out = self.violations();
        for (field, w) in [("w1", &self.w1), ("w2", &self.w2)] {
            let dot = w.dot(&frame.n);
            if dot.abs() >= DIRECTION_TOL {
                out.push(Violation::DirectionOffTangent { field, dot });
            }
        }
        out
    }
}

impl Validate for CurvatureInfo {
    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.tau1.is_finite() && self.tau2.is_finite()) {
            out.push(Violation::NonFinite("tau"));
        }
        if self.tau2.abs() > self.tau1.abs() {
            out.push(Violation::CurvatureOrder {
                tau1: self.tau1,
                tau2: self.tau2,
            });
        }
        check_unit(&mut out, "w1", &self.w1);
        check_unit(&mut out, "w2", &self.w2);
        check_orthogonal(&mut out, ("w1", &self.w1), ("w2", &self.w2), DIRECTION_TOL);
        let expected = 0.5 * (self.tau1.abs() + self.tau2.abs());
        if self.mac != expected {
            out.push(Violation::MacMismatch {
                expected,
                found: self.mac,
            });
        }
        out
    }
}

/// One splat: position, rotation (columns `r1, r2, r3`), scales, opacity, color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrimitive {
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub scales: Vector3<f64>,
    pub opacity: f64,
    pub color: Vector3<f64>,
}

impl GaussianPrimitive {
    /// `Σ = R · diag(s²) · Rᵀ`.
    pub fn covariance(&self) -> Matrix3<f64> {
        primitive_covariance(&self.rotation, &self.scales)
    }

    /// Rotation as a normalized quaternion `[w, x, y, z]` with `w >= 0`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_matrix(&self.rotation);
        let mut c = [q.w, q.i, q.j, q.k];
        if c[0] < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        c
    }
}

/// `R · diag(s1², s2², s3²) · Rᵀ`, exactly symmetrized.
pub fn primitive_covariance(rotation: &Matrix3<f64>, scales: &Vector3<f64>) -> Matrix3<f64> {
    let rs = rotation * Matrix3::from_diagonal(scales);
    let sigma = rs * rs.transpose();
    linalg::symmetrize3(&sigma)
}

impl Validate for GaussianPrimitive {
    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let r = &self.rotation;
        let cols = [r.column(0).into_owned(), r.column(1).into_owned(), r.column(2).into_owned()];
        check_unit(&mut out, "r1", &cols[0]);
        check_unit(&mut out, "r2", &cols[1]);
        check_unit(&mut out, "r3", &cols[2]);
        check_orthogonal(&mut out, ("r1", &cols[0]), ("r2", &cols[1]), UNIT_TOL);
        check_orthogonal(&mut out, ("r1", &cols[0]), ("r3", &cols[2]), UNIT_TOL);
        check_orthogonal(&mut out, ("r2", &cols[1]), ("r3", &cols[2]), UNIT_TOL);
        let det = r.determinant();
        if (det - 1.0).abs() > UNIT_TOL {
            out.push(Violation::NotRightHanded { det });
        }
        for (index, &value) in self.scales.iter().enumerate() {
            if !(value > 0.0) {
                out.push(Violation::NonPositiveScale { index, value });
            }
        }
        if self.scales[0] < self.scales[1] {
            out.push(Violation::ScaleOrder {
                s1: self.scales[0],
                s2: self.scales[1],
            });
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            out.push(Violation::OpacityRange(self.opacity));
        }
        if let Some(&c) = self.color.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            out.push(Violation::ColorRange(c));
        }
        if !self.position.iter().all(|c| c.is_finite()) {
            out.push(Violation::NonFinite("position"));
        }
        out
    }
}

/// A value that is either resolved from data or fixed by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Auto<T> {
    Auto,
    Fixed(T),
}

impl<T: Copy> Auto<T> {
    pub fn fixed(&self) -> Option<T> {
        match self {
            Auto::Auto => None,
            Auto::Fixed(v) => Some(*v),
        }
    }
}

/// Estimator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub k_neighbors: usize,
    /// Gaussian kernel bandwidth `t` (squared length).
    pub bandwidth_t: Auto<f64>,
    /// Varifold kernel support radius.
    pub varifold_eps: Auto<f64>,
    pub xi_min: f64,
    /// Upper curvature clamp; auto is mean + 3·std of estimated `|τ|`.
    pub xi_max: Auto<f64>,
    pub adaptive_kernel: bool,
    /// Per-point varifold masses; `None` means all ones.
    pub masses: Option<Vec<f64>>,
    /// Calibrated kernel eigenvalues above this count toward the dimension.
    pub dim_threshold: f64,
    /// Seeds the subsample used by the automatic bandwidth rule.
    pub seed: u64,
    /// Profile of the varifold mass normalizer.
    #[serde(default)]
    pub varifold_normalizer: VarifoldNormalizer,
}

/// Kernel used in the denominator of the varifold second fundamental form.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarifoldNormalizer {
    /// `χ = −r Υ'(r) / 3`, the pairing under which a smooth surface gives
    /// back its shape operator with unit scale.
    #[default]
    Paired,
    /// `χ = Υ`, the bump itself.
    Bump,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 20,
            bandwidth_t: Auto::Auto,
            varifold_eps: Auto::Auto,
            xi_min: 0.001,
            xi_max: Auto::Auto,
            adaptive_kernel: false,
            masses: None,
            dim_threshold: 0.5,
            seed: 0,
            varifold_normalizer: VarifoldNormalizer::Paired,
        }
    }
}

impl EstimatorConfig {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k_neighbors = k;
        self
    }
}

impl Validate for EstimatorConfig {
    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.k_neighbors < 4 {
            out.push(Violation::TooFewNeighbors(self.k_neighbors));
        }
        if !(self.xi_min > 0.0) {
            out.push(Violation::NonPositive("xi_min"));
        }
        if let Some(xi_max) = self.xi_max.fixed() {
            if !(self.xi_min < xi_max) {
                out.push(Violation::ClampBounds {
                    xi_min: self.xi_min,
                    xi_max,
                });
            }
        }
        if matches!(self.bandwidth_t.fixed(), Some(t) if !(t > 0.0)) {
            out.push(Violation::NonPositive("bandwidth_t"));
        }
        if matches!(self.varifold_eps.fixed(), Some(e) if !(e > 0.0)) {
            out.push(Violation::NonPositive("varifold_eps"));
        }
        if let Some(m) = &self.masses {
            if m.iter().any(|&v| !(v > 0.0)) {
                out.push(Violation::NonPositive("masses"));
            }
        }
        out
    }
}

/// Positions with optional per-point attributes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vector3<f64>>,
    /// RGB in `[0, 1]`.
    pub colors: Option<Vec<Vector3<f64>>>,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub covariances: Option<Vec<Matrix3<f64>>>,
}

impl PointCloud {
    pub fn from_positions(positions: Vec<Vector3<f64>>) -> Self {
        Self {
            positions,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Applies `x ↦ R x + t` to positions and rotates normals/covariances.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        Self {
            positions: self
                .positions
                .iter()
                .map(|p| rotation * p + translation)
                .collect(),
            colors: self.colors.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| rotation * n).collect()),
            covariances: self.covariances.as_ref().map(|cs| {
                cs.iter()
                    .map(|c| rotation * c * rotation.transpose())
                    .collect()
            }),
        }
    }
}

impl Validate for PointCloud {
    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self
            .positions
            .iter()
            .any(|p| !p.iter().all(|c| c.is_finite()))
        {
            out.push(Violation::NonFinite("positions"));
        }
        if let Some(covs) = &self.covariances {
            for c in covs {
                let asymmetry = (c - c.transpose()).abs().max();
                if asymmetry > 1e-9 {
                    out.push(Violation::NotSymmetric { asymmetry });
                    break;
                }
                let min_eigenvalue = linalg::sym_eigen3(c).values[2];
                if min_eigenvalue < -1e-9 {
                    out.push(Violation::NotPsd { min_eigenvalue });
                    break;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn primitive(rotation: Matrix3<f64>, scales: Vector3<f64>) -> GaussianPrimitive {
        GaussianPrimitive {
            position: Vector3::zeros(),
            rotation,
            scales,
            opacity: 0.5,
            color: Vector3::repeat(0.5),
        }
    }

    #[test]
    fn covariance_identity_and_diagonal() {
        let id = primitive_covariance(&Matrix3::identity(), &Vector3::repeat(1.0));
        assert_eq!(id, Matrix3::identity());
        let d = primitive_covariance(&Matrix3::identity(), &Vector3::new(2.0, 1.0, 0.5));
        assert_eq!(d, Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 0.25)));
    }

    #[test]
    fn identity_frame_is_valid() {
        assert!(LocalFrame::identity().violations().is_empty());
    }

    #[test]
    fn frame_with_normal_equal_to_tangent_is_reported() {
        let f = LocalFrame::new(Vector3::x(), Vector3::y(), Vector3::x());
        let v = f.violations();
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::NotOrthogonal { a: "u1", b: "n", .. })));
    }

    #[test]
    fn curvature_order_violation_is_reported() {
        let c = CurvatureInfo {
            tau1: 0.1,
            tau2: -2.0,
            w1: Vector3::x(),
            w2: Vector3::y(),
            mac: 1.05,
        };
        assert!(c
            .violations()
            .iter()
            .any(|x| matches!(x, Violation::CurvatureOrder { .. })));
    }

    #[test]
    fn curvature_constructor_reorders() {
        let c = CurvatureInfo::new(0.3, Vector3::x(), -1.5, Vector3::y());
        assert_eq!(c.tau1, -1.5);
        assert_eq!(c.w1, Vector3::y());
        assert_eq!(c.tau2, 0.3);
        assert_eq!(c.mac, 0.9);
        assert!(c.violations_in(&LocalFrame::identity()).is_empty());
    }

    #[test]
    fn quaternion_of_identity() {
        let p = primitive(Matrix3::identity(), Vector3::new(1.0, 1.0, 1.0));
        assert_eq!(p.quaternion_wxyz(), [1.0, 0.0, 0.0, 0.0]);
        assert!(p.is_valid());
    }

    #[test]
    fn config_rejects_small_k_and_inverted_clamp() {
        let mut c = EstimatorConfig::default().with_k(3);
        c.xi_max = Auto::Fixed(0.0001);
        let v = c.violations();
        assert!(v.contains(&Violation::TooFewNeighbors(3)));
        assert!(v.iter().any(|x| matches!(x, Violation::ClampBounds { .. })));
        assert!(EstimatorConfig::default().is_valid());
    }

    prop_compose! {
        fn rotation()(ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0, angle in -3.1f64..3.1) -> Matrix3<f64> {
            let axis = Vector3::new(ax, ay, az + 1e-3);
            Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
        }
    }

    proptest! {
        #[test]
        fn covariance_spectrum_is_squared_scales(r in rotation(), s1 in 0.01f64..5.0, s2 in 0.01f64..5.0, s3 in 0.01f64..5.0) {
            let sigma = primitive_covariance(&r, &Vector3::new(s1, s2, s3));
            prop_assert!((sigma - sigma.transpose()).abs().max() <= 1e-12);
            let eig = crate::linalg::sym_eigen3(&sigma);
            let mut expected = [s1 * s1, s2 * s2, s3 * s3];
            expected.sort_by(|a, b| b.total_cmp(a));
            for (got, want) in eig.values.iter().zip(expected.iter()) {
                prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0));
            }
            prop_assert!(eig.values[2] >= 0.0);
        }

        #[test]
        fn curvature_constructor_always_ordered(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let c = CurvatureInfo::new(a, Vector3::x(), b, Vector3::y());
            prop_assert!(c.tau1.abs() >= c.tau2.abs());
            prop_assert!(c.violations().is_empty());
            let swapped = c.w1 == Vector3::y();
            prop_assert_eq!(swapped, b.abs() > a.abs());
        }
    }
}
