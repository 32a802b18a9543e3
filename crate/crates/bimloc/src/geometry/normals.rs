//! PCA surface-normal estimation over k-nearest neighborhoods.

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{KdTree, SemanticPointCloud};
use crate::scalar::Real;

/// Rank test: the neighborhood is considered degenerate when the middle
/// eigenvalue falls below this fraction of the largest one.
const RANK_RATIO: f64 = 1e-10;

/// Relative threshold below which the orientation dot product counts as a tie.
const ORIENT_TIE_EPS: f64 = 1e-9;

/// Estimate one unit normal per point from the covariance of its `k` nearest
/// neighbors (the point itself included).
///
/// The normal is the eigenvector of the smallest covariance eigenvalue. Signs
/// are canonicalized against the cloud centroid: each normal is flipped so it
/// points *away* from the centroid (`dot(n, centroid - p) <= 0`); when that
/// dot product is a tie (point at the centroid, or normal orthogonal to the
/// centroid direction), the normal's largest-magnitude component is made
/// positive instead. Degenerate neighborhoods — coincident or collinear
/// points, where no plane is identifiable — yield the zero-vector sentinel,
/// which marks the normal invalid.
///
/// Errors when `k < 3` or `k` exceeds the cloud size.
pub fn estimate_normals<T: Real>(
    cloud: &SemanticPointCloud<T>,
    k: usize,
) -> Result<SemanticPointCloud<T>> {
    let n = cloud.len();
    if k < 3 || k > n {
        return Err(Error::InvalidNormalK { k, points: n });
    }
    let tree = KdTree::new(&cloud.points)?;

    let mut centroid = Vector3::zeros();
    for p in &cloud.points {
        centroid += p.coords;
    }
    centroid /= T::of_usize(n);
    let centroid = Point3::from(centroid);

    let mut normals = Vec::with_capacity(n);
    for p in &cloud.points {
        let neighbors = tree.knn(p, k)?;
        normals.push(neighborhood_normal(&cloud.points, &neighbors, p, &centroid));
    }

    let mut out = cloud.clone();
    out.normals = Some(normals);
    Ok(out)
}

fn neighborhood_normal<T: Real>(
    points: &[Point3<T>],
    neighbors: &[(usize, T)],
    p: &Point3<T>,
    centroid: &Point3<T>,
) -> Vector3<T> {
    let k = T::of_usize(neighbors.len());
    let mut mean = Vector3::zeros();
    for &(i, _) in neighbors {
        mean += points[i].coords;
    }
    mean /= k;

    let mut cov = Matrix3::zeros();
    for &(i, _) in neighbors {
        let d = points[i].coords - mean;
        cov += d * d.transpose();
    }
    cov /= k;

    // All-coincident neighborhood: zero covariance, no plane (and nalgebra's
    // eigensolver rejects the zero matrix outright).
    if cov.amax() <= T::zero() {
        return Vector3::zeros();
    }

    let eigen = cov.symmetric_eigen();
    // Locate smallest and largest eigenvalues (order is unspecified).
    let mut min_i = 0;
    let mut max_i = 0;
    for i in 1..3 {
        if eigen.eigenvalues[i] < eigen.eigenvalues[min_i] {
            min_i = i;
        }
        if eigen.eigenvalues[i] > eigen.eigenvalues[max_i] {
            max_i = i;
        }
    }
    let mid_i = 3 - min_i - max_i;
    let l_max = eigen.eigenvalues[max_i];
    let l_mid = eigen.eigenvalues[mid_i];

    // Coincident (l_max == 0) or collinear (l_mid ~ 0) neighborhoods carry no
    // plane; emit the invalid sentinel.
    if l_max <= T::zero() || l_mid <= T::of(RANK_RATIO) * l_max {
        return Vector3::zeros();
    }

    let v = eigen.eigenvectors.column(min_i).into_owned();
    let norm = v.norm();
    if norm <= T::zero() {
        return Vector3::zeros();
    }
    let mut normal = v / norm;

    // Orient away from the cloud centroid; break ties by component sign.
    let to_centroid = centroid - p;
    let dot = normal.dot(&to_centroid);
    let tie = T::of(ORIENT_TIE_EPS) * to_centroid.norm();
    if dot.abs() <= tie {
        let mut dom = 0;
        for i in 1..3 {
            if normal[i].abs() > normal[dom].abs() {
                dom = i;
            }
        }
        if normal[dom] < T::zero() {
            normal = -normal;
        }
    } else if dot > T::zero() {
        normal = -normal;
    }
    normal
}
