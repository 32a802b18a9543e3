//! Point-to-plane ICP core: nearest-neighbor association, per-association
//! weight functions, and baseline geometric outlier filters.
//!
//! The solver lives in [`solver`]; everything here is the shared vocabulary
//! between the solver and the localizer pipeline. Weights are always computed
//! per scan point from its *first* (nearest) association; the remaining
//! `k - 1` neighbors feed the consistency labeling downstream.

mod solver;

pub use solver::{solve_icp, IcpResult};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{KdTree, Label, Pose, SemanticPointCloud};
use crate::scalar::Real;

/// Associations below this weight are dropped from the normal equations.
pub const WEIGHT_FLOOR: f64 = 1e-3;

/// How per-association weights are computed inside [`solve_icp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Baseline geometric filters: trimmed-distance x surface-normal, binary weights.
    Org,
    /// Distance-robust weight `w_rho` alone.
    Huber,
    /// Semantic consistency weight `w_c` alone.
    Semantic,
    /// Combined `w = w_c * w_rho`.
    SemanticHuber,
}

/// Parameters of the weight functions and baseline filters.
///
/// Plain-`f64` config; converted to the working scalar at the call site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    pub mode: WeightMode,
    /// Semantic agreement weight, in `[0.5, 1]`. `0.5` disables semantics.
    pub mu: f64,
    /// Point-to-plane distance threshold of the robust weight, meters.
    pub delta: f64,
    /// Fraction of associations kept by the trimmed-distance filter, in `(0, 1]`.
    pub trim_ratio: f64,
    /// Maximum scan/map normal angle kept by the surface-normal filter, radians.
    pub normal_angle_max: f64,
    /// Nearest neighbors per scan point; the first feeds the error term.
    pub k: usize,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            mode: WeightMode::Org,
            mu: 0.8,
            delta: 0.05,
            trim_ratio: 0.85,
            normal_angle_max: 50f64.to_radians(),
            k: 3,
        }
    }
}

impl WeightConfig {
    /// Check every field against its documented range.
    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.mu) || !self.mu.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "mu = {} outside [0.5, 1]",
                self.mu
            )));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "delta = {} must be a positive length",
                self.delta
            )));
        }
        if !(self.trim_ratio > 0.0 && self.trim_ratio <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "trim_ratio = {} outside (0, 1]",
                self.trim_ratio
            )));
        }
        if !(self.normal_angle_max > 0.0 && self.normal_angle_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "normal_angle_max = {} must be a positive angle",
                self.normal_angle_max
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        Ok(())
    }
}

/// One scan-point-to-map match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Association<T: Real> {
    pub map_index: usize,
    /// Euclidean distance between transformed scan point and map point, meters.
    pub distance: T,
    /// Absolute point-to-plane residual at the association pose, meters.
    /// Zero when the matched map point carries the invalid-normal sentinel
    /// (such rows are zero-weighted by the solver).
    pub residual: T,
}

/// Dense `S x K` record of each scan point's nearest map matches,
/// ascending by `(distance, map index)` within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMatrix<T: Real> {
    k: usize,
    indices: Vec<usize>,
    distances: Vec<T>,
    residuals: Vec<T>,
}

impl<T: Real> AssociationMatrix<T> {
    pub(crate) fn from_raw(
        k: usize,
        indices: Vec<usize>,
        distances: Vec<T>,
        residuals: Vec<T>,
    ) -> Self {
        debug_assert!(k > 0);
        debug_assert_eq!(indices.len() % k, 0);
        debug_assert_eq!(indices.len(), distances.len());
        debug_assert_eq!(indices.len(), residuals.len());
        AssociationMatrix {
            k,
            indices,
            distances,
            residuals,
        }
    }

    /// Number of scan points (rows).
    pub fn len(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Neighbors per row.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Map indices of row `s`, nearest first.
    pub fn row_indices(&self, s: usize) -> &[usize] {
        &self.indices[s * self.k..(s + 1) * self.k]
    }

    /// Euclidean distances of row `s`, ascending.
    pub fn row_distances(&self, s: usize) -> &[T] {
        &self.distances[s * self.k..(s + 1) * self.k]
    }

    /// Absolute point-to-plane residuals of row `s`, ordered as the indices.
    pub fn row_residuals(&self, s: usize) -> &[T] {
        &self.residuals[s * self.k..(s + 1) * self.k]
    }

    /// The nearest match of row `s` — the one the error term uses.
    pub fn first(&self, s: usize) -> Association<T> {
        Association {
            map_index: self.indices[s * self.k],
            distance: self.distances[s * self.k],
            residual: self.residuals[s * self.k],
        }
    }
}

/// Absolute point-to-plane residual `|(R p + t - m) . n|`.
///
/// `n` must be unit length. Insensitive to displacement tangential to the
/// matched plane.
pub fn point_to_plane_residual<T: Real>(
    p: &Point3<T>,
    m: &Point3<T>,
    n: &Vector3<T>,
    pose: &Pose<T>,
) -> T {
    (pose.transform_point(p) - m).dot(n).abs()
}

/// Match every scan point, transformed by `pose`, to its `k` nearest map
/// points.
///
/// `map_index` must be built over exactly `map.points`. The map must carry
/// normals (they define the residuals). Rows are ordered as the scan; matches
/// within a row ascend by `(distance, map index)`.
pub fn associate<T: Real>(
    scan: &SemanticPointCloud<T>,
    map: &SemanticPointCloud<T>,
    map_index: &KdTree<T>,
    pose: &Pose<T>,
    k: usize,
) -> Result<AssociationMatrix<T>> {
    if scan.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if !map.has_normals() {
        return Err(Error::MissingNormals);
    }
    debug_assert_eq!(map_index.len(), map.len());

    let normals = map.normals.as_ref().expect("checked above");
    let mut indices = Vec::with_capacity(scan.len() * k);
    let mut distances = Vec::with_capacity(scan.len() * k);
    let mut residuals = Vec::with_capacity(scan.len() * k);
    for p in &scan.points {
        let q = pose.transform_point(p);
        for (idx, dist) in map_index.knn(&q, k)? {
            let r = if map.normal_valid(idx) {
                (q - map.points[idx]).dot(&normals[idx]).abs()
            } else {
                T::zero()
            };
            indices.push(idx);
            distances.push(dist);
            residuals.push(r);
        }
    }
    Ok(AssociationMatrix::from_raw(k, indices, distances, residuals))
}

/// Semantic agreement weight: `mu` when the labels match, `1 - mu` otherwise.
pub fn weight_semantic<T: Real>(scan_label: Label, map_label: Label, mu: T) -> T {
    if scan_label == map_label {
        mu
    } else {
        T::one() - mu
    }
}

/// Distance-robust weight: `1` while `residual < delta`, `delta / residual`
/// beyond. At `residual == delta` both branches equal `1`.
pub fn weight_huber<T: Real>(residual: T, delta: T) -> T {
    debug_assert!(residual >= T::zero() && delta > T::zero());
    if residual < delta {
        T::one()
    } else {
        delta / residual
    }
}

/// Combined weight: plain product of the semantic and robust parts.
pub fn weight_combined<T: Real>(w_c: T, w_rho: T) -> T {
    w_c * w_rho
}

/// Binary weights keeping the `ceil(trim_ratio * S)` rows with the smallest
/// first-neighbor distance; ties at the cut break by row index.
pub fn trimmed_distance_filter<T: Real>(assoc: &AssociationMatrix<T>, trim_ratio: f64) -> Vec<T> {
    debug_assert!(trim_ratio > 0.0 && trim_ratio <= 1.0);
    let s = assoc.len();
    let keep = ((trim_ratio * s as f64).ceil() as usize).min(s);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_unstable_by(|&a, &b| {
        let (da, db) = (assoc.first(a).distance, assoc.first(b).distance);
        da.partial_cmp(&db)
            .expect("finite distances")
            .then(a.cmp(&b))
    });
    let mut weights = vec![T::zero(); s];
    for &row in &order[..keep] {
        weights[row] = T::one();
    }
    weights
}

/// Binary weights rejecting rows whose scan/map normal angle exceeds
/// `normal_angle_max` (the boundary angle itself is kept).
///
/// `scan_normals` must already be rotated into the map frame. The comparison
/// is orientation-agnostic (absolute cosine), so a flipped estimate does not
/// reject a coplanar pair. Rows with an invalid zero-normal sentinel on
/// either side are kept: the filter rejects only on positive evidence. With
/// `scan_normals = None` the filter is disabled with a warning and every row
/// is kept.
pub fn surface_normal_filter<T: Real>(
    assoc: &AssociationMatrix<T>,
    scan_normals: Option<&[Vector3<T>]>,
    map_normals: &[Vector3<T>],
    normal_angle_max: T,
) -> Vec<T> {
    let s = assoc.len();
    let Some(scan_normals) = scan_normals else {
        log::warn!("surface-normal filter disabled: scan has no normals");
        return vec![T::one(); s];
    };
    debug_assert_eq!(scan_normals.len(), s);
    (0..s)
        .map(|row| {
            let ns = &scan_normals[row];
            let nm = &map_normals[assoc.first(row).map_index];
            if *ns == Vector3::zeros() || *nm == Vector3::zeros() {
                return T::one();
            }
            let cos = ns.dot(nm).abs().min(T::one());
            if cos.acos() <= normal_angle_max {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect()
}
