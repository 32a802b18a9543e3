//! Static k-d tree over 3D points with exact, reproducible k-NN semantics.
//!
//! Queries order candidates by `(squared distance, point index)`, so results
//! are identical to a brute-force linear scan even in the presence of
//! distance ties — a property the labeling and registration stages rely on
//! for reproducibility. Subtrees are pruned only when the splitting plane is
//! *strictly* farther than the current k-th candidate; equal-distance
//! subtrees are still visited so index ties resolve the same way a linear
//! scan would.

use nalgebra::Point3;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::Real;

const NIL: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Node {
    /// Index into the original point array.
    point: u32,
    /// Splitting axis (0, 1, 2).
    axis: u8,
    left: u32,
    right: u32,
}

/// Balanced k-d tree; immutable after construction.
#[derive(Clone, Debug)]
pub struct KdTree<T: Real> {
    points: Vec<Point3<T>>,
    nodes: Vec<Node>,
    root: u32,
}

#[inline]
fn dist2<T: Real>(a: &Point3<T>, b: &Point3<T>) -> T {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

/// Max-heap entry; `Ord` is lexicographic on `(d2, index)`.
struct Candidate<T: Real> {
    d2: T,
    index: usize,
}

impl<T: Real> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.d2 == other.d2 && self.index == other.index
    }
}
impl<T: Real> Eq for Candidate<T> {}
impl<T: Real> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Finite coordinates are enforced at construction, so the distance
        // comparison is total.
        self.d2
            .partial_cmp(&other.d2)
            .expect("non-finite distance in k-d tree query")
            .then(self.index.cmp(&other.index))
    }
}

impl<T: Real> KdTree<T> {
    /// Build over a copy of `points`. Errors on an empty slice.
    pub fn new(points: &[Point3<T>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        for (i, p) in points.iter().enumerate() {
            if !p.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite(format!("k-d tree input point {i}")));
            }
        }
        let mut indices: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build(points, &mut indices, &mut nodes);
        Ok(KdTree {
            points: points.to_vec(),
            nodes,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    /// The `k` nearest indexed points to `query`, as `(index, distance)`
    /// sorted ascending by `(distance, index)`.
    ///
    /// Errors when `k == 0` or `k` exceeds the number of indexed points.
    pub fn knn(&self, query: &Point3<T>, k: usize) -> Result<Vec<(usize, T)>> {
        if k == 0 || k > self.points.len() {
            return Err(Error::InvalidK {
                requested: k,
                available: self.points.len(),
            });
        }
        let mut heap: BinaryHeap<Candidate<T>> = BinaryHeap::with_capacity(k + 1);
        self.search(self.root, query, k, &mut heap);
        let mut out: Vec<Candidate<T>> = heap.into_vec();
        out.sort_unstable();
        Ok(out
            .into_iter()
            .map(|c| (c.index, c.d2.sqrt()))
            .collect())
    }

    fn search(&self, node: u32, query: &Point3<T>, k: usize, heap: &mut BinaryHeap<Candidate<T>>) {
        if node == NIL {
            return;
        }
        let n = &self.nodes[node as usize];
        let idx = n.point as usize;
        let cand = Candidate {
            d2: dist2(query, &self.points[idx]),
            index: idx,
        };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().expect("heap non-empty") {
            heap.pop();
            heap.push(cand);
        }

        let diff = query[n.axis as usize] - self.points[n.point as usize][n.axis as usize];
        let (near, far) = if diff < T::zero() {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, query, k, heap);

        // Visit the far side unless the splitting plane is strictly farther
        // than the current worst candidate: equal distance may still improve
        // the result through a smaller index.
        let plane_d2 = diff * diff;
        let must_visit = heap.len() < k || plane_d2 <= heap.peek().expect("heap non-empty").d2;
        if must_visit {
            self.search(far, query, k, heap);
        }
    }
}

/// Recursively build nodes over `indices`; returns the subtree root.
fn build<T: Real>(points: &[Point3<T>], indices: &mut [u32], nodes: &mut Vec<Node>) -> u32 {
    if indices.is_empty() {
        return NIL;
    }
    // Split along the axis with largest spread; ties pick the lowest axis.
    let mut lo = points[indices[0] as usize].coords;
    let mut hi = lo;
    for &i in indices.iter() {
        let c = points[i as usize].coords;
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let mut axis = 0usize;
    let mut best_spread = hi[0] - lo[0];
    for a in 1..3 {
        let spread = hi[a] - lo[a];
        if spread > best_spread {
            best_spread = spread;
            axis = a;
        }
    }

    let median = indices.len() / 2;
    indices.select_nth_unstable_by(median, |&a, &b| {
        points[a as usize][axis]
            .partial_cmp(&points[b as usize][axis])
            .expect("non-finite coordinate")
            .then(a.cmp(&b))
    });
    let point = indices[median];

    let slot = nodes.len() as u32;
    nodes.push(Node {
        point,
        axis: axis as u8,
        left: NIL,
        right: NIL,
    });
    let (left_part, rest) = indices.split_at_mut(median);
    let right_part = &mut rest[1..];
    let left = build(points, left_part, nodes);
    let right = build(points, right_part, nodes);
    nodes[slot as usize].left = left;
    nodes[slot as usize].right = right;
    slot
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Brute-force oracle: order all points by `(squared distance, index)`.
    fn knn_oracle<T: Real>(points: &[Point3<T>], query: &Point3<T>, k: usize) -> Vec<(usize, T)> {
        let mut all: Vec<(usize, T)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let dx = p.x - query.x;
                let dy = p.y - query.y;
                let dz = p.z - query.z;
                (i, dx * dx + dy * dy + dz * dz)
            })
            .collect();
        all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(k);
        all.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect()
    }

    fn random_points(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = StdRng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                )
            })
            .collect()
    }

    #[test]
    fn single_point_is_its_own_neighbor() {
        let pts = vec![Point3::new(1.0, 2.0, 3.0)];
        let tree = KdTree::new(&pts).unwrap();
        let got = tree.knn(&Point3::new(1.0, 2.0, 3.0), 1).unwrap();
        assert_eq!(got, vec![(0, 0.0)]);
    }

    #[test]
    fn two_points_ordered_by_distance() {
        let pts = vec![Point3::new(0.0f64, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)];
        let tree = KdTree::new(&pts).unwrap();
        let got = tree.knn(&Point3::new(0.4, 0.0, 0.0), 2).unwrap();
        assert_eq!(got[0].0, 0);
        assert!((got[0].1 - 0.4).abs() < 1e-15);
        assert_eq!(got[1].0, 1);
        assert!((got[1].1 - 0.6).abs() < 1e-15);
    }

    #[test]
    fn coincident_query_returns_zero_distance() {
        let pts = random_points(64, 7);
        let tree = KdTree::new(&pts).unwrap();
        let got = tree.knn(&pts[17], 1).unwrap();
        assert_eq!(got, vec![(17, 0.0)]);
    }

    #[test]
    fn equidistant_ties_resolve_by_lowest_index() {
        // Eight cube corners, query at the center: all distances equal.
        let mut pts = Vec::new();
        for x in [-1.0, 1.0] {
            for y in [-1.0, 1.0] {
                for z in [-1.0, 1.0] {
                    pts.push(Point3::new(x, y, z));
                }
            }
        }
        let tree = KdTree::new(&pts).unwrap();
        let got = tree.knn(&Point3::origin(), 3).unwrap();
        let idx: Vec<usize> = got.iter().map(|g| g.0).collect();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn rejects_empty_input_and_bad_k() {
        assert!(matches!(
            KdTree::<f64>::new(&[]),
            Err(Error::EmptyPointSet)
        ));
        let pts = random_points(4, 1);
        let tree = KdTree::new(&pts).unwrap();
        assert!(matches!(
            tree.knn(&Point3::origin(), 0),
            Err(Error::InvalidK { .. })
        ));
        assert!(matches!(
            tree.knn(&Point3::origin(), 5),
            Err(Error::InvalidK { .. })
        ));
    }

    #[test]
    fn rejects_non_finite_points() {
        let pts = vec![Point3::new(f64::NAN, 0.0, 0.0)];
        assert!(matches!(KdTree::new(&pts), Err(Error::NonFinite(_))));
    }

    #[test]
    fn matches_oracle_on_random_clouds() {
        let pts = random_points(1000, 42);
        let tree = KdTree::new(&pts).unwrap();
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..100 {
            let q = Point3::new(
                rng.random_range(-12.0..12.0),
                rng.random_range(-12.0..12.0),
                rng.random_range(-12.0..12.0),
            );
            let got = tree.knn(&q, 5).unwrap();
            let want = knn_oracle(&pts, &q, 5);
            assert_eq!(got, want, "query {q:?}");
        }
    }

    #[test]
    fn matches_oracle_on_gridded_ties() {
        // Integer grid induces many exact distance ties.
        let mut pts = Vec::new();
        for x in 0..5 {
            for y in 0..5 {
                for z in 0..3 {
                    pts.push(Point3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        let tree = KdTree::new(&pts).unwrap();
        for q in [
            Point3::new(2.0, 2.0, 1.0),
            Point3::new(2.5, 2.5, 0.5),
            Point3::new(0.0, 0.0, 0.0),
        ] {
            for k in [1, 4, 9, pts.len()] {
                let got = tree.knn(&q, k).unwrap();
                let want = knn_oracle(&pts, &q, k);
                assert_eq!(got, want, "query {q:?} k={k}");
            }
        }
    }

    #[test]
    fn works_in_f32() {
        let pts: Vec<Point3<f32>> = random_points(128, 3)
            .into_iter()
            .map(|p| Point3::new(p.x as f32, p.y as f32, p.z as f32))
            .collect();
        let tree = KdTree::new(&pts).unwrap();
        let got = tree.knn(&Point3::origin(), 4).unwrap();
        let want = knn_oracle(&pts, &Point3::origin(), 4);
        assert_eq!(got, want);
    }

    mod proptest_tests {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn tree_equals_linear_scan(
                seed in 0u64..1000,
                n in 1usize..200,
                k in 1usize..20,
                qx in -15.0f64..15.0,
                qy in -15.0f64..15.0,
                qz in -15.0f64..15.0,
            ) {
                let k = k.min(n);
                let pts = random_points(n, seed);
                let tree = KdTree::new(&pts).unwrap();
                let q = Point3::new(qx, qy, qz);
                prop_assert_eq!(tree.knn(&q, k).unwrap(), knn_oracle(&pts, &q, k));
            }

            #[test]
            fn quantized_ties_still_match(seed in 0u64..500, n in 1usize..150, k in 1usize..10) {
                // Snap coordinates to a coarse grid to force ties.
                let k = k.min(n);
                let mut rng = StdRng::seed_from_u64(seed);
                let pts: Vec<Point3<f64>> = (0..n)
                    .map(|_| {
                        Point3::new(
                            rng.random_range(-3i32..4) as f64,
                            rng.random_range(-3i32..4) as f64,
                            rng.random_range(-3i32..4) as f64,
                        )
                    })
                    .collect();
                let tree = KdTree::new(&pts).unwrap();
                let q = Point3::new(
                    rng.random_range(-3i32..4) as f64 + 0.5,
                    rng.random_range(-3i32..4) as f64,
                    rng.random_range(-3i32..4) as f64 - 0.5,
                );
                prop_assert_eq!(tree.knn(&q, k).unwrap(), knn_oracle(&pts, &q, k));
            }
        }
    }
}
