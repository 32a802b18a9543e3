//! Mapping-free LiDAR localization on building-model point clouds.
//!
//! The crate turns a building model (triangle mesh + semantically labeled
//! element boxes) into a labeled point-cloud map, tracks a 3D range sensor
//! against that map with semantically weighted point-to-plane ICP, and ships
//! a ray-casting scan simulator plus a trajectory-evaluation suite for
//! end-to-end validation.
//!
//! All geometry is generic over the scalar type through [`Real`]; concrete
//! `f32`/`f64` aliases live at the crate root.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod localizer;
pub mod map;
pub mod registration;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use geometry::{Label, Pose, SemanticPointCloud, UNLABELED};
pub use scalar::Real;

/// 3D point, `f32` precision.
pub type Point3f32 = nalgebra::Point3<f32>;
/// 3D point, `f64` precision.
pub type Point3f64 = nalgebra::Point3<f64>;
/// 3D vector, `f32` precision.
pub type Vector3f32 = nalgebra::Vector3<f32>;
/// 3D vector, `f64` precision.
pub type Vector3f64 = nalgebra::Vector3<f64>;
/// Rigid pose, `f32` precision.
pub type Posef32 = geometry::Pose<f32>;
/// Rigid pose, `f64` precision.
pub type Posef64 = geometry::Pose<f64>;
/// Semantic point cloud, `f32` precision.
pub type SemanticPointCloudf32 = geometry::SemanticPointCloud<f32>;
/// Semantic point cloud, `f64` precision.
pub type SemanticPointCloudf64 = geometry::SemanticPointCloud<f64>;
