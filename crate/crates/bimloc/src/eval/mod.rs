//! Trajectory evaluation: timestamp association, planar (SE(2)) alignment,
//! RMSE metrics, error curves, and z-drift analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::scalar::Real;

/// Default association tolerance between estimate and ground truth, seconds.
pub const DEFAULT_MAX_DT: f64 = 0.05;

/// Default window length (poses) for the z-drift statistic.
pub const DEFAULT_Z_WINDOW: usize = 50;

/// Spread below which planar alignment treats positions as coincident (m²).
const COINCIDENT_SPREAD: f64 = 1e-18;

// ── Trajectory ──────────────────────────────────────────────────────────────

/// Timestamped pose sequence with strictly increasing timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T: Real> {
    entries: Vec<(f64, Pose<T>)>,
}

impl<T: Real> Trajectory<T> {
    /// Validates that timestamps are finite and strictly increasing.
    pub fn new(entries: Vec<(f64, Pose<T>)>) -> Result<Self> {
        for (i, (t, _)) in entries.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("timestamp {i}")));
            }
            if i > 0 && *t <= entries[i - 1].0 {
                return Err(Error::UnorderedTimestamps { index: i });
            }
        }
        Ok(Trajectory { entries })
    }

    pub fn entries(&self) -> &[(f64, Pose<T>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(f64, Pose<T>)> {
        self.entries.iter()
    }

    pub fn last(&self) -> Option<&(f64, Pose<T>)> {
        self.entries.last()
    }
}

// ── Association ─────────────────────────────────────────────────────────────

/// One estimate pose matched to its nearest-in-time ground-truth pose.
#[derive(Clone, Copy, Debug)]
pub struct PosePair<T: Real> {
    /// Timestamp of the estimate pose, seconds.
    pub timestamp: f64,
    /// Signed time offset `est − gt`, seconds.
    pub dt: f64,
    pub est: Pose<T>,
    pub gt: Pose<T>,
}

/// Match each estimate pose to the nearest ground-truth timestamp within
/// `max_dt` seconds. Estimates without a match are dropped and counted.
/// Errors when nothing matches at all.
pub fn associate_by_timestamp<T: Real>(
    est: &Trajectory<T>,
    gt: &Trajectory<T>,
    max_dt: f64,
) -> Result<(Vec<PosePair<T>>, usize)> {
    if !(max_dt.is_finite() && max_dt >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "max_dt must be finite and non-negative, got {max_dt}"
        )));
    }
    let gt_times: Vec<f64> = gt.iter().map(|(t, _)| *t).collect();
    let mut pairs = Vec::new();
    let mut dropped = 0usize;
    for &(t, est_pose) in est.iter() {
        let nearest = match gt_times.binary_search_by(|g| g.partial_cmp(&t).unwrap()) {
            Ok(i) => Some(i),
            Err(ins) => {
                // Closest of the two straddling entries; earlier wins ties.
                let before = ins.checked_sub(1);
                let after = (ins < gt_times.len()).then_some(ins);
                match (before, after) {
                    (Some(b), Some(a)) => {
                        if (t - gt_times[b]) <= (gt_times[a] - t) {
                            Some(b)
                        } else {
                            Some(a)
                        }
                    }
                    (Some(b), None) => Some(b),
                    (None, Some(a)) => Some(a),
                    (None, None) => None,
                }
            }
        };
        match nearest {
            Some(i) if (t - gt_times[i]).abs() <= max_dt => pairs.push(PosePair {
                timestamp: t,
                dt: t - gt_times[i],
                est: est_pose,
                gt: gt.entries()[i].1,
            }),
            _ => dropped += 1,
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoTemporalOverlap { max_dt });
    }
    Ok((pairs, dropped))
}

// ── Planar alignment ────────────────────────────────────────────────────────

/// Closed-form SE(2) alignment: the rigid transform (yaw about +z plus xy
/// translation) that, applied to the *estimate* positions, minimizes the sum
/// of squared planar distances to the ground-truth positions.
///
/// Errors when fewer than two pairs are given or either position set is
/// coincident (no rotation is identifiable).
pub fn align_se2<T: Real>(pairs: &[PosePair<T>]) -> Result<Pose<T>> {
    if pairs.len() < 2 {
        return Err(Error::DegenerateAlignment(format!(
            "need at least two pose pairs, got {}",
            pairs.len()
        )));
    }
    let n = T::of_usize(pairs.len());
    let mut e_mean = [T::zero(); 2];
    let mut g_mean = [T::zero(); 2];
    for p in pairs {
        e_mean[0] += p.est.translation.x;
        e_mean[1] += p.est.translation.y;
        g_mean[0] += p.gt.translation.x;
        g_mean[1] += p.gt.translation.y;
    }
    for v in e_mean.iter_mut().chain(g_mean.iter_mut()) {
        *v /= n;
    }

    let mut sxx = T::zero(); // Σ ẽ·g̃   (planar dot)
    let mut sxy = T::zero(); // Σ ẽ×g̃   (planar cross)
    let mut e_spread = T::zero();
    let mut g_spread = T::zero();
    for p in pairs {
        let ex = p.est.translation.x - e_mean[0];
        let ey = p.est.translation.y - e_mean[1];
        let gx = p.gt.translation.x - g_mean[0];
        let gy = p.gt.translation.y - g_mean[1];
        sxx += ex * gx + ey * gy;
        sxy += ex * gy - ey * gx;
        e_spread += ex * ex + ey * ey;
        g_spread += gx * gx + gy * gy;
    }
    if e_spread <= T::of(COINCIDENT_SPREAD) || g_spread <= T::of(COINCIDENT_SPREAD) {
        return Err(Error::DegenerateAlignment(
            "positions are coincident".into(),
        ));
    }

    let theta = sxy.atan2(sxx);
    let (sin_t, cos_t) = (theta.sin(), theta.cos());
    let tx = g_mean[0] - (cos_t * e_mean[0] - sin_t * e_mean[1]);
    let ty = g_mean[1] - (sin_t * e_mean[0] + cos_t * e_mean[1]);
    Ok(Pose::from_se2(tx, ty, T::zero(), theta))
}

/// Left-apply `align` to every estimate pose of `pairs`.
pub fn apply_alignment<T: Real>(pairs: &[PosePair<T>], align: &Pose<T>) -> Vec<PosePair<T>> {
    pairs
        .iter()
        .map(|p| PosePair {
            est: align.compose(&p.est),
            ..*p
        })
        .collect()
}

// ── Metrics ─────────────────────────────────────────────────────────────────

/// Wrap an angle in degrees into `(-180, 180]`.
pub fn wrap_angle_deg<T: Real>(angle: T) -> T {
    let full = T::of(360.0);
    let half = T::of(180.0);
    let mut a = angle % full;
    if a > half {
        a -= full;
    }
    if a <= -half {
        a += full;
    }
    a
}

/// Planar translation error (m) and wrapped absolute yaw error (deg) of one
/// aligned pair.
fn pair_errors<T: Real>(pair: &PosePair<T>) -> Result<(T, T)> {
    let (ex, ey, eyaw) = pair.est.project_se2()?;
    let (gx, gy, gyaw) = pair.gt.project_se2()?;
    let dt = ((ex - gx) * (ex - gx) + (ey - gy) * (ey - gy)).sqrt();
    let dr = wrap_angle_deg((eyaw - gyaw) * T::of(180.0 / std::f64::consts::PI)).abs();
    Ok((dt, dr))
}

/// Root-mean-square planar translation (m) and yaw (deg) errors over aligned
/// pairs.
pub fn compute_rmse<T: Real>(pairs: &[PosePair<T>]) -> Result<(T, T)> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("no pose pairs to evaluate".into()));
    }
    let n = T::of_usize(pairs.len());
    let mut sum_t = T::zero();
    let mut sum_r = T::zero();
    for pair in pairs {
        let (dt, dr) = pair_errors(pair)?;
        sum_t += dt * dt;
        sum_r += dr * dr;
    }
    Ok(((sum_t / n).sqrt(), (sum_r / n).sqrt()))
}

/// Mean height of the last `window` poses minus the mean height of the first
/// `window` poses; measures vertical drift on planar trajectories.
///
/// Errors when the trajectory has fewer than `2 * window` poses (the windows
/// must not overlap) or `window` is zero.
pub fn compute_z_drift<T: Real>(traj: &Trajectory<T>, window: usize) -> Result<T> {
    if window == 0 {
        return Err(Error::InvalidConfig("z-drift window must be > 0".into()));
    }
    let len = traj.len();
    if len < 2 * window {
        return Err(Error::TrajectoryTooShort {
            len,
            window,
            needed: 2 * window,
        });
    }
    let w = T::of_usize(window);
    let head: T = traj.entries()[..window]
        .iter()
        .fold(T::zero(), |acc, (_, p)| acc + p.translation.z);
    let tail: T = traj.entries()[len - window..]
        .iter()
        .fold(T::zero(), |acc, (_, p)| acc + p.translation.z);
    Ok(tail / w - head / w)
}

/// One per-pose error sample, positioned along the ground-truth path.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ErrorRow {
    /// Cumulative planar ground-truth path length at this pose, meters.
    pub distance: f64,
    /// Planar translation error, meters.
    pub translation_error: f64,
    /// Wrapped absolute yaw error, degrees.
    pub rotation_error_deg: f64,
}

/// Per-pose errors against cumulative ground-truth path length.
pub fn error_curves<T: Real>(pairs: &[PosePair<T>]) -> Result<Vec<ErrorRow>> {
    let mut rows = Vec::with_capacity(pairs.len());
    let mut distance = 0.0f64;
    for (i, pair) in pairs.iter().enumerate() {
        if i > 0 {
            let prev = pairs[i - 1].gt.translation;
            let cur = pair.gt.translation;
            let dx = (cur.x - prev.x).as_f64();
            let dy = (cur.y - prev.y).as_f64();
            distance += dx.hypot(dy);
        }
        let (dt, dr) = pair_errors(pair)?;
        rows.push(ErrorRow {
            distance,
            translation_error: dt.as_f64(),
            rotation_error_deg: dr.as_f64(),
        });
    }
    Ok(rows)
}

/// Five-number summary using linear-interpolation quantiles.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quartiles of a non-empty sample. Quantile `p` interpolates linearly at
/// rank `(n - 1)·p` of the sorted values.
pub fn quartiles(values: &[f64]) -> Result<Quartiles> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("no values to summarize".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite error value"));
    let q = |p: f64| -> f64 {
        let h = (sorted.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (h - lo as f64)
    };
    Ok(Quartiles {
        min: sorted[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: sorted[sorted.len() - 1],
    })
}

// ── Report ──────────────────────────────────────────────────────────────────

/// Whether to align the estimate to the ground truth before scoring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMode {
    /// Closed-form planar alignment (recommended: removes the arbitrary
    /// choice of start frame).
    Se2,
    /// Score raw poses as-is.
    None,
}

/// Evaluation parameters.
#[derive(Clone, Copy, Debug)]
pub struct EvalConfig {
    pub mode: AlignMode,
    /// Association tolerance, seconds.
    pub max_dt: f64,
    /// Window length for the z-drift statistic, poses.
    pub z_window: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mode: AlignMode::Se2,
            max_dt: DEFAULT_MAX_DT,
            z_window: DEFAULT_Z_WINDOW,
        }
    }
}

/// Full evaluation output; serializable as JSON and flattenable to CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Pose pairs that entered the metrics.
    pub pairs: usize,
    /// Estimate poses dropped for lack of a close-enough ground-truth match.
    pub dropped: usize,
    pub rmse_translation: f64,
    pub rmse_rotation_deg: f64,
    /// Vertical drift of the estimate; `None` when the trajectory is shorter
    /// than two z-drift windows.
    pub delta_z: Option<f64>,
    pub translation_quartiles: Quartiles,
    pub rotation_quartiles_deg: Quartiles,
    /// Per-pose errors along the ground-truth path.
    pub per_pose: Vec<ErrorRow>,
}

/// Associate, optionally align, and score an estimated trajectory against
/// ground truth.
pub fn evaluate<T: Real>(
    est: &Trajectory<T>,
    gt: &Trajectory<T>,
    config: &EvalConfig,
) -> Result<ErrorReport> {
    let (pairs, dropped) = associate_by_timestamp(est, gt, config.max_dt)?;
    let pairs = match config.mode {
        AlignMode::Se2 => {
            let align = align_se2(&pairs)?;
            apply_alignment(&pairs, &align)
        }
        AlignMode::None => pairs,
    };
    let (rmse_t, rmse_r) = compute_rmse(&pairs)?;
    let rows = error_curves(&pairs)?;
    let delta_z = match compute_z_drift(est, config.z_window) {
        Ok(v) => Some(v.as_f64()),
        Err(Error::TrajectoryTooShort { .. }) => None,
        Err(e) => return Err(e),
    };
    let trans: Vec<f64> = rows.iter().map(|r| r.translation_error).collect();
    let rot: Vec<f64> = rows.iter().map(|r| r.rotation_error_deg).collect();
    Ok(ErrorReport {
        pairs: pairs.len(),
        dropped,
        rmse_translation: rmse_t.as_f64(),
        rmse_rotation_deg: rmse_r.as_f64(),
        delta_z,
        translation_quartiles: quartiles(&trans)?,
        rotation_quartiles_deg: quartiles(&rot)?,
        per_pose: rows,
    })
}
