//! Coarse-to-fine semantic pose tracking: filter the scan, register it with
//! baseline point-to-plane ICP, label scan points by map-neighbor consistency,
//! keep only informative categories, and refine with the variant's weighting.
//!
//! A tracking session is strictly sequential (each estimate seeds the next);
//! failures flag the step and carry the best available pose forward rather
//! than aborting the sequence.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::geometry::{KdTree, Label, Pose, SemanticPointCloud, UNLABELED};
use crate::map::CategoryTable;
use crate::registration::{
    solve_icp, AssociationMatrix, IcpResult, WeightConfig, WeightMode,
};
use crate::scalar::Real;

// ── Method variants ─────────────────────────────────────────────────────────

/// The six tracking methods: two single-stage baselines and four
/// coarse-to-fine semantic variants differing in the fine-stage weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    /// Single-stage baseline ICP.
    IcpOrg,
    /// Single-stage ICP with Huber residual weighting.
    IcpHuber,
    /// Coarse-to-fine with an unweighted fine stage (selection only).
    SemOrg,
    /// Fine stage weighted by category consistency.
    SemWc,
    /// Fine stage weighted by Huber residuals.
    SemWrho,
    /// Fine stage weighted by both (the full method).
    SemWcWrho,
}

impl Variant {
    /// Whether the variant runs the labeling/selection/fine pipeline.
    pub fn is_semantic(self) -> bool {
        !matches!(self, Variant::IcpOrg | Variant::IcpHuber)
    }

    /// Weight mode of the single stage (baselines only).
    fn single_stage_mode(self) -> WeightMode {
        match self {
            Variant::IcpOrg => WeightMode::Org,
            Variant::IcpHuber => WeightMode::Huber,
            _ => unreachable!("semantic variants have no single stage"),
        }
    }

    /// Weight mode of the fine stage (semantic variants only).
    fn fine_mode(self) -> WeightMode {
        match self {
            Variant::SemOrg => WeightMode::Org,
            Variant::SemWc => WeightMode::Semantic,
            Variant::SemWrho => WeightMode::Huber,
            Variant::SemWcWrho => WeightMode::SemanticHuber,
            _ => unreachable!("baseline variants have no fine stage"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::IcpOrg => "ICP_ORG",
            Variant::IcpHuber => "ICP_HUBER",
            Variant::SemOrg => "SEM_ORG",
            Variant::SemWc => "SEM_WC",
            Variant::SemWrho => "SEM_WRHO",
            Variant::SemWcWrho => "SEM_WC_WRHO",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ICP_ORG" => Ok(Variant::IcpOrg),
            "ICP_HUBER" => Ok(Variant::IcpHuber),
            "SEM_ORG" => Ok(Variant::SemOrg),
            "SEM_WC" => Ok(Variant::SemWc),
            "SEM_WRHO" => Ok(Variant::SemWrho),
            "SEM_WC_WRHO" => Ok(Variant::SemWcWrho),
            other => Err(Error::InvalidConfig(format!(
                "unknown variant {other:?}; expected one of ICP_ORG, ICP_HUBER, \
                 SEM_ORG, SEM_WC, SEM_WRHO, SEM_WC_WRHO"
            ))),
        }
    }
}

// ── Configuration ───────────────────────────────────────────────────────────

/// Scan pre-filter: voxel dedup then random down-sampling to a point budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrefilterConfig {
    /// Survivor budget after random down-sampling.
    pub target_count: usize,
    /// Voxel edge length, meters.
    pub voxel: f64,
    /// Seed of the down-sampling RNG.
    pub seed: u64,
}

impl Default for PrefilterConfig {
    fn default() -> Self {
        PrefilterConfig {
            target_count: 2000,
            voxel: 0.1,
            seed: 0,
        }
    }
}

impl PrefilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_count == 0 {
            return Err(Error::InvalidConfig("target_count must be >= 1".into()));
        }
        if !(self.voxel > 0.0 && self.voxel.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "voxel = {} must be a positive length",
                self.voxel
            )));
        }
        Ok(())
    }
}

/// Full tracker configuration.
///
/// Baseline (`ICP_*`) variants run a single stage with the combined
/// `coarse_max_it + fine_max_it` budget so every variant gets the same
/// iteration allowance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub variant: Variant,
    /// Category names kept by the fine stage.
    pub selection_whitelist: Vec<String>,
    pub coarse_max_it: usize,
    pub fine_max_it: usize,
    pub weight: WeightConfig,
    pub prefilter: PrefilterConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            variant: Variant::SemWcWrho,
            selection_whitelist: vec!["Floors".into(), "Walls".into(), "Columns".into()],
            coarse_max_it: 20,
            fine_max_it: 20,
            weight: WeightConfig::default(),
            prefilter: PrefilterConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.coarse_max_it == 0 || self.fine_max_it == 0 {
            return Err(Error::InvalidConfig(
                "coarse_max_it and fine_max_it must be >= 1".into(),
            ));
        }
        if self.variant.is_semantic() && self.selection_whitelist.is_empty() {
            return Err(Error::InvalidConfig(
                "selection_whitelist must not be empty for semantic variants".into(),
            ));
        }
        self.weight.validate()?;
        self.prefilter.validate()
    }
}

// ── Map wrapper ─────────────────────────────────────────────────────────────

/// Semantic map ready for tracking: cloud, nearest-neighbor index, and the
/// category table that resolves whitelist names.
///
/// Points with invalid (zero-sentinel) normals are dropped up front so every
/// association row carries a usable plane.
#[derive(Debug, Clone)]
pub struct IndexedMap<T: Real> {
    cloud: SemanticPointCloud<T>,
    index: KdTree<T>,
    categories: CategoryTable,
}

impl<T: Real> IndexedMap<T> {
    pub fn new(cloud: SemanticPointCloud<T>, categories: CategoryTable) -> Result<Self> {
        if !cloud.has_normals() {
            return Err(Error::MissingNormals);
        }
        let keep: Vec<usize> = (0..cloud.len()).filter(|&i| cloud.normal_valid(i)).collect();
        if keep.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let cloud = if keep.len() == cloud.len() {
            cloud
        } else {
            log::warn!(
                "map: dropped {} points with degenerate normals",
                cloud.len() - keep.len()
            );
            subset(&cloud, &keep)
        };
        let index = KdTree::new(&cloud.points)?;
        Ok(IndexedMap {
            cloud,
            index,
            categories,
        })
    }

    pub fn cloud(&self) -> &SemanticPointCloud<T> {
        &self.cloud
    }

    pub fn index(&self) -> &KdTree<T> {
        &self.index
    }

    pub fn categories(&self) -> &CategoryTable {
        &self.categories
    }

    /// Resolve whitelist names to label ids; unknown names are config errors.
    pub fn resolve_whitelist(&self, names: &[String]) -> Result<Vec<Label>> {
        let mut ids = Vec::with_capacity(names.len());
        for name in names {
            match self.categories.id_of(name) {
                Some(id) => ids.push(id),
                None => {
                    return Err(Error::InvalidConfig(format!(
                        "whitelist category {name:?} not present in the map"
                    )))
                }
            }
        }
        ids.sort_unstable();
        ids.dedup();
        Ok(ids)
    }
}

/// Clone the cloud rows at `keep` (ascending), preserving order.
fn subset<T: Real>(cloud: &SemanticPointCloud<T>, keep: &[usize]) -> SemanticPointCloud<T> {
    let pick = |i: &usize| cloud.points[*i];
    let mut out = SemanticPointCloud::new(keep.iter().map(pick).collect());
    // Attribute rows come from an already-validated cloud in matching count.
    if let Some(normals) = &cloud.normals {
        out = out
            .with_normals(keep.iter().map(|&i| normals[i]).collect())
            .expect("subset normals parallel points");
    }
    if let Some(labels) = &cloud.labels {
        out = out
            .with_labels(keep.iter().map(|&i| labels[i]).collect())
            .expect("subset labels parallel points");
    }
    out.timestamp = cloud.timestamp;
    out
}

// ── Pipeline steps ──────────────────────────────────────────────────────────

/// Voxel-grid subsampling (one survivor per occupied voxel, the point nearest
/// the voxel's point centroid, earliest index on ties) followed by uniform
/// random down-sampling to `target_count`. Input order is preserved.
pub fn datafilter<T: Real>(
    scan: &SemanticPointCloud<T>,
    config: &PrefilterConfig,
) -> SemanticPointCloud<T> {
    if scan.is_empty() {
        return scan.clone();
    }
    let voxel = T::of(config.voxel);
    let key = |i: usize| {
        let p = &scan.points[i];
        [
            (p.x / voxel).floor().as_f64() as i64,
            (p.y / voxel).floor().as_f64() as i64,
            (p.z / voxel).floor().as_f64() as i64,
        ]
    };

    // Pass 1: per-voxel point centroid.
    let mut cells: HashMap<[i64; 3], (nalgebra::Vector3<T>, usize)> = HashMap::new();
    for i in 0..scan.len() {
        let e = cells
            .entry(key(i))
            .or_insert((nalgebra::Vector3::zeros(), 0));
        e.0 += scan.points[i].coords;
        e.1 += 1;
    }
    // Pass 2: per-voxel argmin distance-to-centroid; first index wins ties.
    let mut best: HashMap<[i64; 3], (T, usize)> = HashMap::with_capacity(cells.len());
    for i in 0..scan.len() {
        let k = key(i);
        let (sum, n) = cells[&k];
        let centroid = sum / T::of_usize(n);
        let d = (scan.points[i].coords - centroid).norm_squared();
        match best.get(&k) {
            Some(&(bd, _)) if bd <= d => {}
            _ => {
                best.insert(k, (d, i));
            }
        }
    }
    let mut keep: Vec<usize> = best.values().map(|&(_, i)| i).collect();
    keep.sort_unstable();

    if keep.len() > config.target_count {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut chosen =
            rand::seq::index::sample(&mut rng, keep.len(), config.target_count).into_vec();
        chosen.sort_unstable();
        keep = chosen.into_iter().map(|j| keep[j]).collect();
    }
    subset(scan, &keep)
}

/// Consistency labeling: scan point `s` inherits its first neighbor's label
/// iff all K matched map labels agree and none is `UNLABELED`; otherwise it
/// stays `UNLABELED`.
pub fn label_scan<T: Real>(
    scan: &SemanticPointCloud<T>,
    assoc: &AssociationMatrix<T>,
    map: &SemanticPointCloud<T>,
) -> SemanticPointCloud<T> {
    debug_assert_eq!(assoc.len(), scan.len());
    let labels = (0..scan.len())
        .map(|s| {
            let mut rows = assoc.row_indices(s).iter().map(|&m| map.label(m));
            match rows.next() {
                Some(first) if first != UNLABELED && rows.all(|l| l == first) => first,
                _ => UNLABELED,
            }
        })
        .collect();
    scan.clone()
        .with_labels(labels)
        .expect("one label per scan point")
}

/// Keep only points whose label is in `whitelist`; `UNLABELED` never
/// survives. Point identity and order are preserved.
pub fn select_categories<T: Real>(
    scan: &SemanticPointCloud<T>,
    whitelist: &[Label],
) -> Result<SemanticPointCloud<T>> {
    let Some(labels) = &scan.labels else {
        return Err(Error::MissingLabels);
    };
    let keep: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != UNLABELED && whitelist.contains(&l))
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(subset(scan, &keep))
}

// ── Tracking ────────────────────────────────────────────────────────────────

/// Mutable tracking session: the latest estimate seeds the next step.
#[derive(Debug, Clone)]
pub struct TrackState<T: Real> {
    pub last_pose: Pose<T>,
    pub timestamp: f64,
    /// `(timestamp, pose)` per step, strictly increasing, seeded with the
    /// initial pose.
    pub history: Vec<(f64, Pose<T>)>,
}

/// Seed a session at `initial_pose`.
pub fn init_tracker<T: Real>(initial_pose: Pose<T>, t0: f64) -> TrackState<T> {
    TrackState {
        last_pose: initial_pose,
        timestamp: t0,
        history: vec![(t0, initial_pose)],
    }
}

/// Per-step record: point-count funnel, solver telemetry, wall time, and the
/// failure flag of the fallback path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub timestamp: f64,
    pub raw_points: usize,
    pub filtered_points: usize,
    /// Points that received a non-`UNLABELED` label (semantic variants only).
    pub labeled_points: Option<usize>,
    /// Points surviving category selection (semantic variants only).
    pub selected_points: Option<usize>,
    pub coarse_iterations: usize,
    pub fine_iterations: Option<usize>,
    pub coarse_converged: bool,
    pub fine_converged: Option<bool>,
    /// Mean |residual| at the returned pose, from the stage that produced it.
    pub mean_residual: f64,
    pub duration_ms: f64,
    /// True when this step fell back instead of completing its pipeline.
    pub failure: bool,
    pub failure_reason: Option<String>,
}

/// Errors that flag the step and fall back rather than aborting the session.
fn is_tracking_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateRegistration { .. } | Error::EmptySelection | Error::EmptyPointSet
    )
}

/// One tracking step: pre-filter, coarse registration, and — for semantic
/// variants — consistency labeling, category selection, and the weighted
/// fine stage. The previous pose is the initial guess; the new pose is
/// appended to the session history.
///
/// Degenerate registration or an empty selection does not error: the step
/// returns the best pose reached (coarse result, else previous pose) with
/// `failure` set.
pub fn track_step<T: Real>(
    state: &mut TrackState<T>,
    scan: &SemanticPointCloud<T>,
    map: &IndexedMap<T>,
    config: &TrackerConfig,
) -> Result<(Pose<T>, StepDiagnostics)> {
    let started = Instant::now();
    config.validate()?;
    let Some(timestamp) = scan.timestamp else {
        return Err(Error::MissingTimestamp {
            index: state.history.len(),
        });
    };
    if timestamp <= state.timestamp {
        return Err(Error::UnorderedTimestamps {
            index: state.history.len(),
        });
    }
    if config.variant.is_semantic() && !map.cloud().has_labels() {
        return Err(Error::MissingLabels);
    }

    let filtered = datafilter(scan, &config.prefilter);
    let init = state.last_pose;
    let mut diag = StepDiagnostics {
        timestamp,
        raw_points: scan.len(),
        filtered_points: filtered.len(),
        labeled_points: None,
        selected_points: None,
        coarse_iterations: 0,
        fine_iterations: None,
        coarse_converged: false,
        fine_converged: None,
        mean_residual: f64::NAN,
        duration_ms: 0.0,
        failure: false,
        failure_reason: None,
    };

    let pose = if !config.variant.is_semantic() {
        let cfg = WeightConfig {
            mode: config.variant.single_stage_mode(),
            ..config.weight.clone()
        };
        let budget = config.coarse_max_it + config.fine_max_it;
        match solve_icp(&filtered, map.cloud(), map.index(), &init, &cfg, budget) {
            Ok(res) => {
                diag.coarse_iterations = res.iterations_used;
                diag.coarse_converged = res.converged;
                diag.mean_residual = res.mean_residual.as_f64();
                res.pose
            }
            Err(e) if is_tracking_failure(&e) => {
                diag.failure = true;
                diag.failure_reason = Some(e.to_string());
                init
            }
            Err(e) => return Err(e),
        }
    } else {
        let whitelist = map.resolve_whitelist(&config.selection_whitelist)?;
        let coarse_cfg = WeightConfig {
            mode: WeightMode::Org,
            ..config.weight.clone()
        };
        match solve_icp(
            &filtered,
            map.cloud(),
            map.index(),
            &init,
            &coarse_cfg,
            config.coarse_max_it,
        ) {
            Ok(coarse) => {
                diag.coarse_iterations = coarse.iterations_used;
                diag.coarse_converged = coarse.converged;
                diag.mean_residual = coarse.mean_residual.as_f64();
                semantic_fine_stage(&filtered, map, config, &whitelist, &coarse, &mut diag)
            }
            Err(e) if is_tracking_failure(&e) => {
                diag.failure = true;
                diag.failure_reason = Some(e.to_string());
                init
            }
            Err(e) => return Err(e),
        }
    };

    state.last_pose = pose;
    state.timestamp = timestamp;
    state.history.push((timestamp, pose));
    diag.duration_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok((pose, diag))
}

/// Label, select, refine. Falls back to the coarse pose (with the failure
/// flag) when selection empties or the fine solve degenerates.
fn semantic_fine_stage<T: Real>(
    filtered: &SemanticPointCloud<T>,
    map: &IndexedMap<T>,
    config: &TrackerConfig,
    whitelist: &[Label],
    coarse: &IcpResult<T>,
    diag: &mut StepDiagnostics,
) -> Pose<T> {
    let labeled = label_scan(filtered, &coarse.final_association, map.cloud());
    diag.labeled_points = Some(
        labeled
            .labels
            .as_ref()
            .map_or(0, |ls| ls.iter().filter(|&&l| l != UNLABELED).count()),
    );
    let selected = match select_categories(&labeled, whitelist) {
        Ok(s) => s,
        Err(e) => {
            diag.failure = true;
            diag.failure_reason = Some(e.to_string());
            return coarse.pose;
        }
    };
    diag.selected_points = Some(selected.len());

    let fine_cfg = WeightConfig {
        mode: config.variant.fine_mode(),
        ..config.weight.clone()
    };
    match solve_icp(
        &selected,
        map.cloud(),
        map.index(),
        &coarse.pose,
        &fine_cfg,
        config.fine_max_it,
    ) {
        Ok(fine) => {
            diag.fine_iterations = Some(fine.iterations_used);
            diag.fine_converged = Some(fine.converged);
            diag.mean_residual = fine.mean_residual.as_f64();
            fine.pose
        }
        Err(e) if is_tracking_failure(&e) => {
            diag.failure = true;
            diag.failure_reason = Some(e.to_string());
            coarse.pose
        }
        // Config and precondition errors were screened before the loop;
        // anything else here still must not abort the session.
        Err(e) => {
            diag.failure = true;
            diag.failure_reason = Some(e.to_string());
            coarse.pose
        }
    }
}

/// Trajectory plus per-step diagnostics of a full tracking run.
#[derive(Debug, Clone)]
pub struct TrackingOutput<T: Real> {
    pub trajectory: Trajectory<T>,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Gap placed before the first scan's timestamp for the seeded initial pose.
const INIT_TIME_MARGIN: f64 = 0.1;

/// Fold [`track_step`] over a time-ordered scan list.
///
/// All timestamps are validated before any tracking; per-step failures flag
/// the diagnostics and the session continues. The returned trajectory has
/// `scans.len() + 1` entries — the initial pose is seeded `0.1 s` before the
/// first scan (at `t = 0` for an empty list).
pub fn run_sequence<T: Real>(
    scans: &[SemanticPointCloud<T>],
    map: &IndexedMap<T>,
    config: &TrackerConfig,
    initial_pose: &Pose<T>,
) -> Result<TrackingOutput<T>> {
    config.validate()?;
    if config.variant.is_semantic() {
        if !map.cloud().has_labels() {
            return Err(Error::MissingLabels);
        }
        map.resolve_whitelist(&config.selection_whitelist)?;
    }
    let mut last = f64::NEG_INFINITY;
    for (index, scan) in scans.iter().enumerate() {
        let Some(t) = scan.timestamp else {
            return Err(Error::MissingTimestamp { index });
        };
        if t <= last {
            return Err(Error::UnorderedTimestamps { index });
        }
        last = t;
    }

    let t0 = scans
        .first()
        .and_then(|s| s.timestamp)
        .map_or(0.0, |t| t - INIT_TIME_MARGIN);
    let mut state = init_tracker(*initial_pose, t0);
    let mut diagnostics = Vec::with_capacity(scans.len());
    for scan in scans {
        let (_, diag) = track_step(&mut state, scan, map, config)?;
        diagnostics.push(diag);
    }
    Ok(TrackingOutput {
        trajectory: Trajectory::new(state.history)?,
        diagnostics,
    })
}
