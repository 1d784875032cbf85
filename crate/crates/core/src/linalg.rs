//! Small dense helpers: sorted symmetric eigendecompositions and frame utilities.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};

/// Eigen-pairs of a symmetric 3×3 matrix, eigenvalues descending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEigen3 {
    pub values: [f64; 3],
    pub vectors: [Vector3<f64>; 3],
}

/// Eigen-pairs of a symmetric 2×2 matrix, eigenvalues descending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEigen2 {
    pub values: [f64; 2],
    pub vectors: [Vector2<f64>; 2],
}

pub fn symmetrize3(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize2(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

/// Decomposes the symmetric part of `m`.
pub fn sym_eigen3(m: &Matrix3<f64>) -> SymEigen3 {
    let eig = SymmetricEigen::new(symmetrize3(m));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.map(|i| eig.eigenvalues[i]);
    let vectors = order.map(|i| eig.eigenvectors.column(i).normalize());
    SymEigen3 { values, vectors }
}

/// Closed-form decomposition of the symmetric part of `m`.
///
/// For a multiple of the identity the vectors are the coordinate axes.
pub fn sym_eigen2(m: &Matrix2<f64>) -> SymEigen2 {
    let a = m[(0, 0)];
    let c = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    if b == 0.0 {
        return if a >= c {
            SymEigen2 {
                values: [a, c],
                vectors: [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)],
            }
        } else {
            SymEigen2 {
                values: [c, a],
                vectors: [Vector2::new(0.0, 1.0), Vector2::new(-1.0, 0.0)],
            }
        };
    }
    let mean = 0.5 * (a + c);
    let radius = (0.5 * (a - c)).hypot(b);
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let (s, co) = theta.sin_cos();
    SymEigen2 {
        values: [mean + radius, mean - radius],
        vectors: [Vector2::new(co, s), Vector2::new(-s, co)],
    }
}

/// Gram-Schmidt on two vectors; the third axis is their cross product.
///
/// Returns `None` when the inputs are (numerically) parallel or zero.
pub fn orthonormal_pair(a: &Vector3<f64>, b: &Vector3<f64>) -> Option<[Vector3<f64>; 3]> {
    let na = a.norm();
    if !(na > 1e-300) {
        return None;
    }
    let e1 = a / na;
    let b_perp = b - e1 * e1.dot(b);
    let nb = b_perp.norm();
    if !(nb > 1e-12 * b.norm().max(1e-300)) {
        return None;
    }
    let e2 = b_perp / nb;
    let e3 = e1.cross(&e2);
    Some([e1, e2, e3])
}

/// Angle in degrees between two lines (sign of either vector ignored).
pub fn line_angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let c = (a.dot(b).abs() / (a.norm() * b.norm())).min(1.0);
    c.acos().to_degrees()
}

/// Any unit vector orthogonal to `v`.
pub fn any_orthogonal(v: &Vector3<f64>) -> Vector3<f64> {
    let axis = if v.x.abs() <= v.y.abs() && v.x.abs() <= v.z.abs() {
        Vector3::x()
    } else if v.y.abs() <= v.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    v.cross(&axis).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigen3_sorted_descending() {
        let m = Matrix3::from_diagonal(&Vector3::new(0.5, 3.0, -1.0));
        let e = sym_eigen3(&m);
        assert_eq!(e.values, [3.0, 0.5, -1.0]);
        assert_relative_eq!(e.vectors[0].y.abs(), 1.0);
        assert_relative_eq!(e.vectors[2].z.abs(), 1.0);
    }

    #[test]
    fn eigen2_matches_definition() {
        let m = Matrix2::new(1.5, -0.7, -0.7, 0.2);
        let e = sym_eigen2(&m);
        for (val, vec) in e.values.iter().zip(e.vectors.iter()) {
            let r = m * vec - vec * *val;
            assert!(r.norm() < 1e-14);
        }
        assert!(e.values[0] >= e.values[1]);
    }

    #[test]
    fn eigen2_diagonal_keeps_axes() {
        let e = sym_eigen2(&Matrix2::new(2.0, 0.0, 0.0, 0.1));
        assert_eq!(e.values, [2.0, 0.1]);
        assert_eq!(e.vectors[0], Vector2::new(1.0, 0.0));
        let z = sym_eigen2(&Matrix2::zeros());
        assert_eq!(z.vectors[0], Vector2::new(1.0, 0.0));
        assert_eq!(z.vectors[1], Vector2::new(0.0, 1.0));
    }

    #[test]
    fn orthonormal_pair_rejects_parallel() {
        let a = Vector3::new(1.0, 2.0, 3.0);
        assert!(orthonormal_pair(&a, &(a * 2.0)).is_none());
        let f = orthonormal_pair(&a, &Vector3::z()).unwrap();
        assert!(f[0].dot(&f[1]).abs() < 1e-15);
        assert_relative_eq!(f[2].norm(), 1.0, epsilon = 1e-15);
    }
}
