//! Exact Euclidean nearest-neighbor queries over a static point set.
//!
//! A bounding-box kd-tree. Results are ordered by `(distance, index)`, so
//! equal distances resolve to the smaller point index on every platform.

use nalgebra::Vector3;

use crate::error::{EstimateError, Result};
use crate::types::PointCloud;

const LEAF_SIZE: usize = 12;
const NO_CHILD: u32 = u32::MAX;

/// Neighbors of one query, ascending by distance (ties by index).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborList {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl NeighborList {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Distance to the farthest neighbor, if any.
    pub fn max_distance(&self) -> Option<f64> {
        self.distances.last().copied()
    }

    pub(crate) fn from_candidates(c: &[(f64, u32)]) -> Self {
        Self {
            indices: c.iter().map(|&(_, i)| i as usize).collect(),
            distances: c.iter().map(|&(d2, _)| d2.sqrt()).collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    lo: [f64; 3],
    hi: [f64; 3],
    start: u32,
    end: u32,
    left: u32,
    right: u32,
}

impl Node {
    fn box_dist2(&self, q: &[f64; 3]) -> f64 {
        let mut d2 = 0.0;
        for a in 0..3 {
            let d = if q[a] < self.lo[a] {
                self.lo[a] - q[a]
            } else if q[a] > self.hi[a] {
                q[a] - self.hi[a]
            } else {
                0.0
            };
            d2 += d * d;
        }
        d2
    }
}

/// Immutable kd-tree; safe to query from many threads at once.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    /// Points in tree order.
    points: Vec<[f64; 3]>,
    /// Original index of each tree-ordered point.
    ids: Vec<u32>,
    /// Original positions, indexed by point id.
    positions: Vec<Vector3<f64>>,
    nodes: Vec<Node>,
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
fn key_less(a: (f64, u32), b: (f64, u32)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// `build_index` over a cloud's positions.
pub fn build_index(cloud: &PointCloud) -> Result<SpatialIndex> {
    SpatialIndex::build(&cloud.positions)
}

impl SpatialIndex {
    pub fn build(positions: &[Vector3<f64>]) -> Result<Self> {
        if positions.is_empty() {
            return Err(EstimateError::EmptyCloud);
        }
        if positions.len() >= u32::MAX as usize {
            return Err(EstimateError::invalid("cloud", "too many points"));
        }
        let mut order: Vec<u32> = (0..positions.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * positions.len() / LEAF_SIZE + 1);
        build_node(positions, &mut order, 0, &mut nodes);
        let points = order
            .iter()
            .map(|&i| {
                let p = positions[i as usize];
                [p.x, p.y, p.z]
            })
            .collect();
        Ok(Self {
            points,
            ids: order,
            positions: positions.to_vec(),
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn position(&self, id: usize) -> Vector3<f64> {
        self.positions[id]
    }

    fn check_id(&self, id: usize) -> Result<()> {
        if id < self.len() {
            Ok(())
        } else {
            Err(EstimateError::InvalidPointId {
                id,
                len: self.len(),
            })
        }
    }

    /// The `k` nearest other points of point `id`.
    pub fn knn(&self, id: usize, k: usize) -> Result<NeighborList> {
        self.check_id(id)?;
        let mut buf = Vec::with_capacity(k + 1);
        self.knn_raw(&self.positions[id], k, Some(id as u32), &mut buf);
        Ok(NeighborList::from_candidates(&buf))
    }

    /// The `k` nearest points to an arbitrary location.
    pub fn knn_point(&self, query: &Vector3<f64>, k: usize) -> NeighborList {
        let mut buf = Vec::with_capacity(k + 1);
        self.knn_raw(query, k, None, &mut buf);
        NeighborList::from_candidates(&buf)
    }

    /// All other points within distance `radius` (inclusive) of point `id`.
    pub fn within_radius(&self, id: usize, radius: f64) -> Result<NeighborList> {
        self.check_id(id)?;
        let q = self.positions[id];
        let mut out = Vec::new();
        self.radius_raw(&[q.x, q.y, q.z], radius * radius, Some(id as u32), &mut out);
        out.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(NeighborList::from_candidates(&out))
    }

    /// Fills `out` with `(squared distance, id)` pairs of the k nearest points.
    pub(crate) fn knn_raw(
        &self,
        query: &Vector3<f64>,
        k: usize,
        exclude: Option<u32>,
        out: &mut Vec<(f64, u32)>,
    ) {
        out.clear();
        if k == 0 {
            return;
        }
        let q = [query.x, query.y, query.z];
        self.knn_node(0, &q, k, exclude, out);
    }

    fn knn_node(
        &self,
        node: usize,
        q: &[f64; 3],
        k: usize,
        exclude: Option<u32>,
        out: &mut Vec<(f64, u32)>,
    ) {
        let n = &self.nodes[node];
        if n.left == NO_CHILD {
            for slot in n.start as usize..n.end as usize {
                let id = self.ids[slot];
                if Some(id) == exclude {
                    continue;
                }
                let cand = (dist2(&self.points[slot], q), id);
                if out.len() < k {
                    let pos = out.partition_point(|&c| key_less(c, cand));
                    out.insert(pos, cand);
                } else if key_less(cand, out[k - 1]) {
                    out.pop();
                    let pos = out.partition_point(|&c| key_less(c, cand));
                    out.insert(pos, cand);
                }
            }
            return;
        }
        let (l, r) = (n.left as usize, n.right as usize);
        let dl = self.nodes[l].box_dist2(q);
        let dr = self.nodes[r].box_dist2(q);
        let (first, d_first, second, d_second) = if dl <= dr {
            (l, dl, r, dr)
        } else {
            (r, dr, l, dl)
        };
        // A box at exactly the current worst distance may still hold a tie with a smaller id.
        if out.len() < k || d_first <= out[k - 1].0 {
            self.knn_node(first, q, k, exclude, out);
        }
        if out.len() < k || d_second <= out[k - 1].0 {
            self.knn_node(second, q, k, exclude, out);
        }
    }

    fn radius_raw(&self, q: &[f64; 3], r2: f64, exclude: Option<u32>, out: &mut Vec<(f64, u32)>) {
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            let n = &self.nodes[node];
            if n.box_dist2(q) > r2 {
                continue;
            }
            if n.left == NO_CHILD {
                for slot in n.start as usize..n.end as usize {
                    let id = self.ids[slot];
                    if Some(id) == exclude {
                        continue;
                    }
                    let d2 = dist2(&self.points[slot], q);
                    if d2 <= r2 {
                        out.push((d2, id));
                    }
                }
            } else {
                stack.push(n.left as usize);
                stack.push(n.right as usize);
            }
        }
    }
}

fn build_node(positions: &[Vector3<f64>], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = positions[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let me = nodes.len();
    nodes.push(Node {
        lo,
        hi,
        start: offset as u32,
        end: (offset + order.len()) as u32,
        left: NO_CHILD,
        right: NO_CHILD,
    });
    if order.len() <= LEAF_SIZE {
        return me as u32;
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    if !(hi[axis] > lo[axis]) {
        // All points coincide; keep them in one leaf.
        return me as u32;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        positions[a as usize][axis]
            .total_cmp(&positions[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (left_part, right_part) = order.split_at_mut(mid);
    let left = build_node(positions, left_part, offset, nodes);
    let right = build_node(positions, right_part, offset + mid, nodes);
    nodes[me].left = left;
    nodes[me].right = right;
    me as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<Vector3<f64>> {
        xs.iter().map(|&x| Vector3::new(x, 0.0, 0.0)).collect()
    }

    #[test]
    fn empty_cloud_is_rejected() {
        assert_eq!(SpatialIndex::build(&[]).unwrap_err(), EstimateError::EmptyCloud);
    }

    #[test]
    fn single_point_has_no_neighbors() {
        let idx = SpatialIndex::build(&line(&[0.5])).unwrap();
        assert!(idx.knn(0, 5).unwrap().is_empty());
    }

    #[test]
    fn collinear_neighbors() {
        let idx = SpatialIndex::build(&line(&[0.0, 1.0, 3.0])).unwrap();
        let nl = idx.knn(1, 2).unwrap();
        assert_eq!(nl.indices, vec![0, 2]);
        assert_eq!(nl.distances, vec![1.0, 2.0]);
    }

    #[test]
    fn grid_center_gets_axis_neighbors() {
        let mut pts = Vec::new();
        for i in -1..=1 {
            for j in -1..=1 {
                pts.push(Vector3::new(i as f64, j as f64, 0.0));
            }
        }
        let idx = SpatialIndex::build(&pts).unwrap();
        let nl = idx.knn(4, 4).unwrap();
        // (−1,0), (0,−1), (0,1), (1,0), all at distance 1, ordered by id
        assert_eq!(nl.indices, vec![1, 3, 5, 7]);
        assert!(nl.distances.iter().all(|&d| d == 1.0));
    }

    #[test]
    fn k_larger_than_cloud_returns_everything_else() {
        let idx = SpatialIndex::build(&line(&[0.0, 1.0, 2.0, 5.0])).unwrap();
        let nl = idx.knn(0, 10).unwrap();
        assert_eq!(nl.indices, vec![1, 2, 3]);
    }

    #[test]
    fn invalid_id() {
        let idx = SpatialIndex::build(&line(&[0.0, 1.0])).unwrap();
        assert!(matches!(idx.knn(2, 1), Err(EstimateError::InvalidPointId { id: 2, len: 2 })));
    }

    #[test]
    fn duplicates_are_neighbors_at_zero_distance() {
        let idx = SpatialIndex::build(&line(&[1.0, 1.0, 1.0, 2.0])).unwrap();
        let nl = idx.knn(1, 2).unwrap();
        assert_eq!(nl.indices, vec![0, 2]);
        assert_eq!(nl.distances, vec![0.0, 0.0]);
    }

    #[test]
    fn radius_query_is_inclusive_and_sorted() {
        let idx = SpatialIndex::build(&line(&[0.0, 0.5, -0.5, 1.0, 2.0])).unwrap();
        let nl = idx.within_radius(0, 1.0).unwrap();
        assert_eq!(nl.indices, vec![1, 2, 3]);
    }
}
