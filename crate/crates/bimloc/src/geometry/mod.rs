//! Core geometric types: rigid poses, semantically labeled point clouds, and
//! the planar (SE(2)) projection used by the evaluation pipeline.

mod kdtree;
mod normals;

pub use kdtree::KdTree;
pub use normals::estimate_normals;

use nalgebra::{Point3, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Semantic category id. `0` is reserved for [`UNLABELED`].
pub type Label = u16;

/// Points that no element box claimed (or that failed consistency checks).
pub const UNLABELED: Label = 0;

/// Pitch band (radians) around +/-90 deg where yaw extraction is refused.
const GIMBAL_EPS: f64 = 1e-6;

/// Norm tolerance for unit normals carried by a cloud.
const NORMAL_NORM_TOL: f64 = 1e-6;

// ── Rigid pose ──────────────────────────────────────────────────────────────

/// Rigid transform in SE(3): rotation followed by translation.
///
/// Kept as an explicit rotation matrix plus translation vector; quaternions
/// appear only at the trajectory-file boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<T: Real> {
    pub rotation: Rotation3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Pose<T> {
    /// Identity transform.
    pub fn identity() -> Self {
        Pose {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation3<T>, translation: Vector3<T>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    /// Planar pose: yaw about +z, translation in the xy-plane at height `z`.
    pub fn from_se2(x: T, y: T, z: T, yaw: T) -> Self {
        Pose {
            rotation: Rotation3::from_axis_angle(&Vector3::z_axis(), yaw),
            translation: Vector3::new(x, y, z),
        }
    }

    /// `self ∘ rhs`: apply `rhs` first, then `self`.
    pub fn compose(&self, rhs: &Pose<T>) -> Self {
        Pose {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }

    /// Inverse transform; `p.compose(&p.inverse())` is the identity.
    pub fn inverse(&self) -> Self {
        let rot_inv = self.rotation.inverse();
        Pose {
            rotation: rot_inv,
            translation: -(rot_inv * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Point3<T>) -> Point3<T> {
        self.rotation * p + self.translation
    }

    /// Rotate a direction (translation does not apply).
    pub fn rotate_vector(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation * v
    }

    /// Project onto the ground plane as `(x, y, yaw)`.
    ///
    /// Yaw follows the z-y-x (yaw-pitch-roll) convention. Fails when the pose
    /// pitch is within 1e-6 rad of +/-90 deg, where yaw is not identifiable.
    pub fn project_se2(&self) -> Result<(T, T, T)> {
        let m = self.rotation.matrix();
        // |cos(pitch)| for the z-y-x decomposition.
        let cos_pitch = (m[(0, 0)] * m[(0, 0)] + m[(1, 0)] * m[(1, 0)]).sqrt();
        if cos_pitch < T::of(GIMBAL_EPS) {
            return Err(Error::YawUndefined);
        }
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        Ok((self.translation.x, self.translation.y, yaw))
    }

    /// Geodesic rotation distance to `other`, in radians.
    pub fn rotation_angle_to(&self, other: &Pose<T>) -> T {
        (self.rotation.inverse() * other.rotation).angle()
    }

    /// Euclidean distance between the two translations.
    pub fn translation_distance_to(&self, other: &Pose<T>) -> T {
        (self.translation - other.translation).norm()
    }

    /// Largest absolute entry of `RᵀR − I`; zero for a perfect rotation.
    pub fn orthonormality_defect(&self) -> T {
        let m = self.rotation.matrix();
        let defect = m.transpose() * m - nalgebra::Matrix3::identity();
        defect.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
    }
}

impl<T: Real> std::ops::Mul for Pose<T> {
    type Output = Pose<T>;

    fn mul(self, rhs: Pose<T>) -> Pose<T> {
        self.compose(&rhs)
    }
}

// ── Semantic point cloud ────────────────────────────────────────────────────

/// Point cloud with optional per-point unit normals and semantic labels.
///
/// Invariants (checked by the builders and [`validate`](Self::validate)):
/// all coordinates finite; optional arrays parallel to `points`; each normal
/// is unit length within 1e-6 or exactly zero (the "no reliable normal"
/// sentinel).
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticPointCloud<T: Real> {
    pub points: Vec<Point3<T>>,
    pub normals: Option<Vec<Vector3<T>>>,
    pub labels: Option<Vec<Label>>,
    /// Acquisition time in seconds, if known.
    pub timestamp: Option<f64>,
}

impl<T: Real> SemanticPointCloud<T> {
    pub fn new(points: Vec<Point3<T>>) -> Self {
        SemanticPointCloud {
            points,
            normals: None,
            labels: None,
            timestamp: None,
        }
    }

    /// Attach unit (or zero-sentinel) normals; must parallel `points`.
    pub fn with_normals(mut self, normals: Vec<Vector3<T>>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::InvalidConfig(format!(
                "normal count {} does not match point count {}",
                normals.len(),
                self.points.len()
            )));
        }
        for (i, n) in normals.iter().enumerate() {
            let norm = n.norm();
            if norm != T::zero() && (norm - T::one()).abs() > T::of(NORMAL_NORM_TOL) {
                return Err(Error::InvalidConfig(format!(
                    "normal {i} has norm {}, expected 1 (or 0 for invalid)",
                    norm.as_f64()
                )));
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    /// Attach semantic labels; must parallel `points`.
    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::InvalidConfig(format!(
                "label count {} does not match point count {}",
                labels.len(),
                self.points.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_timestamp(mut self, seconds: f64) -> Self {
        self.timestamp = Some(seconds);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    /// Label of point `i`; [`UNLABELED`] when the cloud carries no labels.
    pub fn label(&self, i: usize) -> Label {
        self.labels.as_ref().map_or(UNLABELED, |l| l[i])
    }

    /// True when point `i` carries a usable (non-sentinel) normal.
    pub fn normal_valid(&self, i: usize) -> bool {
        self.normals
            .as_ref()
            .is_some_and(|n| n[i] != Vector3::zeros())
    }

    /// Check every stored invariant; used after file ingestion.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if !p.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite(format!("point {i}")));
            }
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.points.len() {
                return Err(Error::InvalidConfig(
                    "normal array does not parallel points".into(),
                ));
            }
            for (i, n) in normals.iter().enumerate() {
                if !n.iter().all(|c| c.is_finite()) {
                    return Err(Error::NonFinite(format!("normal {i}")));
                }
                let norm = n.norm();
                if norm != T::zero() && (norm - T::one()).abs() > T::of(NORMAL_NORM_TOL) {
                    return Err(Error::InvalidConfig(format!(
                        "normal {i} is neither unit nor the zero sentinel"
                    )));
                }
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.points.len() {
                return Err(Error::InvalidConfig(
                    "label array does not parallel points".into(),
                ));
            }
        }
        Ok(())
    }

    /// Apply a rigid transform: points move, normals rotate, labels and
    /// timestamp ride along. Zero-sentinel normals stay zero.
    pub fn transformed(&self, pose: &Pose<T>) -> Self {
        SemanticPointCloud {
            points: self
                .points
                .iter()
                .map(|p| pose.transform_point(p))
                .collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| pose.rotate_vector(n)).collect()),
            labels: self.labels.clone(),
            timestamp: self.timestamp,
        }
    }
}
