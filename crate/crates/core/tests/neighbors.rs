use curvsplat::{SpatialIndex, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_force(points: &[Vector3<f64>], id: usize, k: usize) -> Vec<f64> {
    let mut d: Vec<f64> = points
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != id)
        .map(|(_, p)| (p - points[id]).norm())
        .collect();
    d.sort_by(f64::total_cmp);
    d.truncate(k);
    d
}

#[test]
fn knn_matches_brute_force_on_ten_thousand_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let points: Vec<Vector3<f64>> = (0..10_000)
        .map(|_| Vector3::new(rng.random::<f64>(), rng.random::<f64>() * 2.0, rng.random::<f64>() * 0.1))
        .collect();
    let index = SpatialIndex::build(&points).unwrap();
    for id in (0..points.len()).step_by(97) {
        for k in [1, 8, 20] {
            let got = index.knn(id, k).unwrap();
            let want = brute_force(&points, id, k);
            assert_eq!(got.distances, want, "point {id}, k {k}");
            assert!(!got.indices.contains(&id));
            for (&j, &d) in got.indices.iter().zip(&got.distances) {
                assert_eq!((points[j] - points[id]).norm(), d);
            }
        }
    }
}

#[test]
fn radius_query_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let points: Vec<Vector3<f64>> = (0..3000)
        .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
        .collect();
    let index = SpatialIndex::build(&points).unwrap();
    for id in (0..points.len()).step_by(53) {
        let r = 0.08;
        let mut got = index.within_radius(id, r).unwrap().indices;
        got.sort();
        let want: Vec<usize> = (0..points.len())
            .filter(|&j| j != id && (points[j] - points[id]).norm() <= r)
            .collect();
        assert_eq!(got, want);
    }
}
