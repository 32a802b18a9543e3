//! Weighted point-to-plane Gauss-Newton solver.
//!
//! Each outer iteration re-associates, recomputes weights per the configured
//! mode, solves the 6x6 normal equations of the small-angle linearization,
//! and applies the increment with a step-halving line search so the weighted
//! objective never increases on fixed associations.

use nalgebra::{Matrix6, Rotation3, Vector3, Vector6};

use super::{
    associate, surface_normal_filter, trimmed_distance_filter, weight_combined, weight_huber,
    weight_semantic, AssociationMatrix, WeightConfig, WeightMode, WEIGHT_FLOOR,
};
use crate::error::{Error, Result};
use crate::geometry::{KdTree, Pose, SemanticPointCloud};
use crate::scalar::Real;

/// Convergence thresholds on the applied increment.
const TRANSLATION_EPS: f64 = 1e-4;
const ROTATION_EPS: f64 = 1e-4;
/// Step-halving attempts before settling for a zero step.
const MAX_HALVINGS: u32 = 20;
/// Normal equations need at least this many usable associations.
const MIN_USABLE: usize = 6;

/// Output of [`solve_icp`].
#[derive(Debug, Clone)]
pub struct IcpResult<T: Real> {
    /// Estimated map-from-scan transform.
    pub pose: Pose<T>,
    /// Association matrix of the last executed iteration, the one consumed by
    /// downstream consistency labeling.
    pub final_association: AssociationMatrix<T>,
    /// Outer iterations executed (at most the configured maximum).
    pub iterations_used: usize,
    /// Whether the last increment fell below both convergence thresholds.
    pub converged: bool,
    /// Mean absolute first-neighbor point-to-plane residual over the usable
    /// rows, evaluated at the returned pose.
    pub mean_residual: T,
}

/// Iteratively re-associate, re-weight, and solve the weighted point-to-plane
/// least squares until the increment drops below 1e-4 m and 1e-4 rad or
/// `max_iterations` is exhausted.
///
/// `map_index` must be built over `map.points`, and the map must carry
/// normals. Semantic modes additionally need labels on both clouds. Every
/// iteration must retain at least 6 associations with weight >= 1e-3 and a
/// valid map normal, else the normal equations are rank deficient and the
/// solve fails with `DegenerateRegistration`. Deterministic: no randomness,
/// identical inputs give identical results.
pub fn solve_icp<T: Real>(
    scan: &SemanticPointCloud<T>,
    map: &SemanticPointCloud<T>,
    map_index: &KdTree<T>,
    init: &Pose<T>,
    config: &WeightConfig,
    max_iterations: usize,
) -> Result<IcpResult<T>> {
    config.validate()?;
    if max_iterations == 0 {
        return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
    }
    if !map.has_normals() {
        return Err(Error::MissingNormals);
    }
    if matches!(config.mode, WeightMode::Semantic | WeightMode::SemanticHuber)
        && !(scan.has_labels() && map.has_labels())
    {
        return Err(Error::MissingLabels);
    }
    let filter_normals = scan.has_normals();
    if config.mode == WeightMode::Org && !filter_normals {
        log::warn!("surface-normal filter disabled: scan has no normals");
    }

    let mut pose = *init;
    let mut converged = false;
    let mut iterations_used = 0;
    let mut last: Option<(AssociationMatrix<T>, Vec<T>)> = None;

    for _ in 0..max_iterations {
        iterations_used += 1;
        let assoc = associate(scan, map, map_index, &pose, config.k)?;
        let mut weights = compute_weights(scan, map, &assoc, &pose, config, filter_normals);

        // Drop sub-floor and invalid-normal rows; they cannot constrain the solve.
        let floor = T::of(WEIGHT_FLOOR);
        let mut usable = 0;
        for (s, w) in weights.iter_mut().enumerate() {
            if *w < floor || !map.normal_valid(assoc.first(s).map_index) {
                *w = T::zero();
            } else {
                usable += 1;
            }
        }
        if usable < MIN_USABLE {
            return Err(Error::DegenerateRegistration { kept: usable });
        }

        let (next, step) = weighted_step(scan, map, &assoc, &weights, &pose)?;
        pose = next;
        last = Some((assoc, weights));

        let dt = step.fixed_rows::<3>(3).norm();
        let dw = step.fixed_rows::<3>(0).norm();
        if dt < T::of(TRANSLATION_EPS) && dw < T::of(ROTATION_EPS) {
            converged = true;
            break;
        }
    }

    let (final_association, weights) = last.expect("at least one iteration ran");
    let mut sum = T::zero();
    let mut count = 0;
    for (s, w) in weights.iter().enumerate() {
        if *w > T::zero() {
            let a = final_association.first(s);
            let q = pose.transform_point(&scan.points[s]);
            let n = &map.normals.as_ref().expect("checked above")[a.map_index];
            sum += (q - map.points[a.map_index]).dot(n).abs();
            count += 1;
        }
    }
    Ok(IcpResult {
        pose,
        final_association,
        iterations_used,
        converged,
        mean_residual: sum / T::of_usize(count.max(1)),
    })
}

/// Per-row weights at the current associations, before the usability floor.
fn compute_weights<T: Real>(
    scan: &SemanticPointCloud<T>,
    map: &SemanticPointCloud<T>,
    assoc: &AssociationMatrix<T>,
    pose: &Pose<T>,
    config: &WeightConfig,
    filter_normals: bool,
) -> Vec<T> {
    match config.mode {
        WeightMode::Org => {
            let mut weights = trimmed_distance_filter(assoc, config.trim_ratio);
            if filter_normals {
                let rotated: Vec<Vector3<T>> = scan
                    .normals
                    .as_ref()
                    .expect("filter_normals implies normals")
                    .iter()
                    .map(|n| pose.rotate_vector(n))
                    .collect();
                let keep = surface_normal_filter(
                    assoc,
                    Some(&rotated),
                    map.normals.as_ref().expect("map has normals"),
                    T::of(config.normal_angle_max),
                );
                for (w, k) in weights.iter_mut().zip(keep) {
                    *w *= k;
                }
            }
            weights
        }
        WeightMode::Huber => (0..assoc.len())
            .map(|s| weight_huber(assoc.first(s).residual, T::of(config.delta)))
            .collect(),
        WeightMode::Semantic => (0..assoc.len())
            .map(|s| {
                weight_semantic(
                    scan.label(s),
                    map.label(assoc.first(s).map_index),
                    T::of(config.mu),
                )
            })
            .collect(),
        WeightMode::SemanticHuber => (0..assoc.len())
            .map(|s| {
                let a = assoc.first(s);
                weight_combined(
                    weight_semantic(scan.label(s), map.label(a.map_index), T::of(config.mu)),
                    weight_huber(a.residual, T::of(config.delta)),
                )
            })
            .collect(),
    }
}

/// One Gauss-Newton update on fixed associations and weights, line-searched
/// so the weighted objective does not increase. Returns the new pose and the
/// applied increment `[omega, dt]` (left perturbation).
fn weighted_step<T: Real>(
    scan: &SemanticPointCloud<T>,
    map: &SemanticPointCloud<T>,
    assoc: &AssociationMatrix<T>,
    weights: &[T],
    pose: &Pose<T>,
) -> Result<(Pose<T>, Vector6<T>)> {
    let normals = map.normals.as_ref().expect("map has normals");
    let mut h = Matrix6::<T>::zeros();
    let mut g = Vector6::<T>::zeros();
    let mut obj = T::zero();
    for (s, &w) in weights.iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        let a = assoc.first(s);
        let q = pose.transform_point(&scan.points[s]).coords;
        let n = &normals[a.map_index];
        let r = n.dot(&(q - map.points[a.map_index].coords));
        let c = q.cross(n);
        let row = Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z);
        h += row * row.transpose() * w;
        g += row * (r * w);
        obj += w * r * r;
    }

    let usable = weights.iter().filter(|&&w| w > T::zero()).count();
    let dx = h
        .cholesky()
        .ok_or(Error::DegenerateRegistration { kept: usable })?
        .solve(&(-g));
    // An exactly singular pivot can slip through Cholesky as inf/NaN.
    if !dx.iter().all(|v| v.as_f64().is_finite()) {
        return Err(Error::DegenerateRegistration { kept: usable });
    }

    // Halve the step until the objective stops increasing; a zero step is the
    // terminal fallback (the pose is then a fixed point of this iteration).
    let mut alpha = T::one();
    for _ in 0..=MAX_HALVINGS {
        let step = dx * alpha;
        let candidate = apply_increment(pose, &step);
        if objective(scan, map, assoc, weights, &candidate) <= obj {
            return Ok((candidate, step));
        }
        alpha = alpha / T::of(2.0);
    }
    Ok((*pose, Vector6::zeros()))
}

/// Left-multiply the pose by the small transform `exp([omega, dt])`.
fn apply_increment<T: Real>(pose: &Pose<T>, step: &Vector6<T>) -> Pose<T> {
    let omega: Vector3<T> = step.fixed_rows::<3>(0).into();
    let dt: Vector3<T> = step.fixed_rows::<3>(3).into();
    let delta = Rotation3::from_scaled_axis(omega);
    Pose::new(delta * pose.rotation, delta * pose.translation + dt)
}

/// Weighted objective `sum w * r^2` on fixed associations.
fn objective<T: Real>(
    scan: &SemanticPointCloud<T>,
    map: &SemanticPointCloud<T>,
    assoc: &AssociationMatrix<T>,
    weights: &[T],
    pose: &Pose<T>,
) -> T {
    let normals = map.normals.as_ref().expect("map has normals");
    let mut obj = T::zero();
    for (s, &w) in weights.iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        let a = assoc.first(s);
        let q = pose.transform_point(&scan.points[s]);
        let r = normals[a.map_index].dot(&(q - map.points[a.map_index]));
        obj += w * r * r;
    }
    obj
}
