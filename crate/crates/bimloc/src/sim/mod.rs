//! Ray-casting scan simulator: builds a triangle-soup scene from a mesh plus
//! as-built deviations, then casts spinning-sensor scans with range noise and
//! dynamic returns, producing ground-truth-annotated synthetic sequences.
//!
//! Geometry is exact up to the per-ray nearest-hit search; the BVH is an
//! acceleration detail whose correctness is pinned against a brute-force
//! oracle in the tests.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::geometry::Pose;
use crate::map::{point_in_box, LabeledBox, TriangleMesh};
use crate::scalar::Real;
use crate::SemanticPointCloud;

/// Rays report no hit closer than this, guarding against self-intersection.
const T_MIN: f64 = 1e-6;
/// |det| below this is treated as ray-parallel-to-triangle.
const DET_EPS: f64 = 1e-12;
/// Barycentric slack so seam-exact hits land on at least one triangle.
const EDGE_EPS: f64 = 1e-9;
/// Leaf size of the bounding-volume hierarchy.
const LEAF_SIZE: usize = 4;
/// Dynamic returns are drawn uniformly from this range band, meters.
const DYNAMIC_RANGE: (f64, f64) = (0.5, 3.0);

// ── Sensor model ────────────────────────────────────────────────────────────

/// Spinning range sensor: `channels` beams spread over `vertical_fov`,
/// stepping `horizontal_step` in azimuth over a full turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorModel {
    /// Vertical beam count.
    pub channels: usize,
    /// `(min, max)` elevation, radians. A single channel sits at the midpoint.
    pub vertical_fov: (f64, f64),
    /// Azimuth increment, radians.
    pub horizontal_step: f64,
    /// Hits beyond this range are discarded, meters.
    pub max_range: f64,
    /// Standard deviation of Gaussian range noise, meters.
    pub range_noise_sigma: f64,
    /// Seed of the per-scan noise stream.
    pub seed: u64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            channels: 16,
            vertical_fov: (-15f64.to_radians(), 15f64.to_radians()),
            horizontal_step: 0.2f64.to_radians(),
            max_range: 100.0,
            range_noise_sigma: 0.02,
            seed: 0,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::InvalidConfig("channels must be >= 1".into()));
        }
        let (lo, hi) = self.vertical_fov;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidConfig(format!(
                "vertical_fov ({lo}, {hi}) must be finite with min <= max"
            )));
        }
        if !(self.horizontal_step > 0.0 && self.horizontal_step <= std::f64::consts::TAU) {
            return Err(Error::InvalidConfig(format!(
                "horizontal_step = {} outside (0, 2*pi]",
                self.horizontal_step
            )));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "max_range = {} must be a positive length",
                self.max_range
            )));
        }
        if !(self.range_noise_sigma >= 0.0 && self.range_noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "range_noise_sigma = {} must be >= 0",
                self.range_noise_sigma
            )));
        }
        Ok(())
    }

    /// Beam elevations, low to high.
    fn elevations(&self) -> Vec<f64> {
        let (lo, hi) = self.vertical_fov;
        if self.channels == 1 {
            return vec![(lo + hi) / 2.0];
        }
        let step = (hi - lo) / (self.channels - 1) as f64;
        (0..self.channels).map(|i| lo + i as f64 * step).collect()
    }

    /// Azimuth steps per revolution.
    fn azimuth_count(&self) -> usize {
        ((std::f64::consts::TAU / self.horizontal_step).round() as usize).max(1)
    }
}

// ── Deviations ──────────────────────────────────────────────────────────────

/// Axis-aligned box, meters; the shape of an added as-built element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxShape {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// As-built deviations applied to the as-designed mesh.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviationSpec {
    /// Boxes tessellated (12 triangles each) into the scene.
    pub add: Vec<BoxShape>,
    /// Element ids whose triangles are deleted from the scene. A triangle is
    /// an element's when all three vertices lie inside the element's box.
    pub remove: Vec<String>,
    /// Fraction of rays replaced by a uniform close-range return, in [0, 1).
    /// Applies to every selected ray, hit or miss: a dynamic obstruction
    /// returns even where the scene would not.
    pub dynamic_fraction: f64,
}

impl DeviationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dynamic_fraction) {
            return Err(Error::InvalidConfig(format!(
                "dynamic_fraction = {} outside [0, 1)",
                self.dynamic_fraction
            )));
        }
        for (i, b) in self.add.iter().enumerate() {
            let finite = b.min.iter().chain(&b.max).all(|v| v.is_finite());
            if !finite || (0..3).any(|a| b.min[a] > b.max[a]) {
                return Err(Error::InvalidConfig(format!(
                    "added box {i} must be finite with min <= max per axis"
                )));
            }
        }
        Ok(())
    }
}

/// The 12 triangles of an axis-aligned box, two per face.
pub fn box_triangles<T: Real>(min: &Point3<T>, max: &Point3<T>) -> Vec<[Point3<T>; 3]> {
    let c = |x: usize, y: usize, z: usize| {
        Point3::new(
            if x == 0 { min.x } else { max.x },
            if y == 0 { min.y } else { max.y },
            if z == 0 { min.z } else { max.z },
        )
    };
    // Quads as corner index triples (x, y, z in {0, 1}).
    let quads: [[(usize, usize, usize); 4]; 6] = [
        [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)], // z = min
        [(0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)], // z = max
        [(0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)], // y = min
        [(0, 1, 0), (1, 1, 0), (1, 1, 1), (0, 1, 1)], // y = max
        [(0, 0, 0), (0, 1, 0), (0, 1, 1), (0, 0, 1)], // x = min
        [(1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)], // x = max
    ];
    let mut tris = Vec::with_capacity(12);
    for q in quads {
        let [a, b, cc, d] = q.map(|(x, y, z)| c(x, y, z));
        tris.push([a, b, cc]);
        tris.push([a, cc, d]);
    }
    tris
}

// ── Scene ───────────────────────────────────────────────────────────────────

/// Immutable triangle soup with a ray-intersection index. May be empty (all
/// elements removed); every ray then misses.
#[derive(Debug, Clone)]
pub struct Scene<T: Real> {
    triangles: Vec<[Point3<T>; 3]>,
    bvh: Bvh<T>,
    /// Carried from the [`DeviationSpec`] the scene was built with.
    dynamic_fraction: f64,
}

impl<T: Real> Scene<T> {
    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn dynamic_fraction(&self) -> f64 {
        self.dynamic_fraction
    }

    /// Range to the nearest triangle strictly inside `(1e-6, max_range)`
    /// along unit direction `dir`, or `None` on a miss.
    pub fn cast_ray(&self, origin: &Point3<T>, dir: &Vector3<T>, max_range: T) -> Option<T> {
        self.bvh.nearest_hit(&self.triangles, origin, dir, max_range)
    }
}

/// Assemble the as-built scene: `mesh` minus the triangles of removed
/// elements, plus the tessellated added boxes.
///
/// `boxes` resolves removal ids; ids absent from it fail with the offending
/// list. A fully-removed scene is valid and returns no hits.
pub fn build_scene<T: Real>(
    mesh: &TriangleMesh<T>,
    boxes: &[LabeledBox<T>],
    deviations: &DeviationSpec,
) -> Result<Scene<T>> {
    deviations.validate()?;
    let mut removal: Vec<&LabeledBox<T>> = Vec::with_capacity(deviations.remove.len());
    let mut missing = Vec::new();
    for id in &deviations.remove {
        match boxes.iter().find(|b| &b.id == id) {
            Some(b) => removal.push(b),
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::UnknownElementIds { ids: missing });
    }

    let mut triangles: Vec<[Point3<T>; 3]> = (0..mesh.triangle_count())
        .map(|i| mesh.triangle(i))
        .filter(|tri| {
            !removal
                .iter()
                .any(|b| tri.iter().all(|v| point_in_box(v, b)))
        })
        .collect();
    for shape in &deviations.add {
        let min = Point3::new(T::of(shape.min[0]), T::of(shape.min[1]), T::of(shape.min[2]));
        let max = Point3::new(T::of(shape.max[0]), T::of(shape.max[1]), T::of(shape.max[2]));
        triangles.extend(box_triangles(&min, &max));
    }
    let bvh = Bvh::build(&triangles);
    Ok(Scene {
        triangles,
        bvh,
        dynamic_fraction: deviations.dynamic_fraction,
    })
}

// ── Scan casting ────────────────────────────────────────────────────────────

/// Cast one scan from `pose` with the sensor's own seed.
///
/// One ray per (azimuth, channel), azimuth-major order; the sensor-frame
/// direction at elevation `phi` and azimuth `theta` is
/// `(cos phi cos theta, cos phi sin theta, sin phi)`. Hits gain Gaussian
/// range noise; rays selected as dynamic return a uniform 0.5-3 m range
/// instead. Misses produce no point. Deterministic per (scene, pose, seed).
pub fn cast_scan<T: Real>(
    scene: &Scene<T>,
    pose: &Pose<T>,
    sensor: &SensorModel,
) -> Result<SemanticPointCloud<T>> {
    cast_scan_seeded(scene, pose, sensor, sensor.seed)
}

/// [`cast_scan`] with an explicit seed, for per-scan streams in sequences.
pub fn cast_scan_seeded<T: Real>(
    scene: &Scene<T>,
    pose: &Pose<T>,
    sensor: &SensorModel,
    seed: u64,
) -> Result<SemanticPointCloud<T>> {
    sensor.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if sensor.range_noise_sigma > 0.0 {
        Some(Normal::new(0.0, sensor.range_noise_sigma).expect("validated sigma"))
    } else {
        None
    };
    let dynamic = scene.dynamic_fraction;
    let origin = Point3::from(pose.translation);
    let max_range = T::of(sensor.max_range);
    let elevations = sensor.elevations();

    let mut points = Vec::new();
    for az in 0..sensor.azimuth_count() {
        let theta = az as f64 * sensor.horizontal_step;
        for &phi in &elevations {
            let d = Vector3::new(
                T::of(phi.cos() * theta.cos()),
                T::of(phi.cos() * theta.sin()),
                T::of(phi.sin()),
            );
            if dynamic > 0.0 && rng.random_bool(dynamic) {
                let r = T::of(rng.random_range(DYNAMIC_RANGE.0..DYNAMIC_RANGE.1));
                points.push(Point3::from(d * r));
                continue;
            }
            let dir_world = pose.rotate_vector(&d);
            if let Some(t) = scene.cast_ray(&origin, &dir_world, max_range) {
                let r = match &noise {
                    Some(n) => t + T::of(n.sample(&mut rng)),
                    None => t,
                };
                points.push(Point3::from(d * r));
            }
        }
    }
    Ok(SemanticPointCloud::new(points))
}

/// Cast one scan per trajectory pose.
///
/// Scan `i` uses seed `sensor.seed + i` so noise is independent across the
/// sequence yet reproducible. Returns `(timestamp_ns, sensor-frame cloud)`
/// pairs; the cloud also carries the timestamp in seconds.
pub fn simulate_sequence<T: Real>(
    scene: &Scene<T>,
    trajectory: &Trajectory<T>,
    sensor: &SensorModel,
) -> Result<Vec<(u64, SemanticPointCloud<T>)>> {
    sensor.validate()?;
    let mut out = Vec::with_capacity(trajectory.len());
    for (i, (t, pose)) in trajectory.iter().enumerate() {
        if !(*t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "trajectory timestamp {t} cannot be encoded as nanoseconds"
            )));
        }
        let ts_ns = (t * 1e9).round() as u64;
        let cloud = cast_scan_seeded(scene, pose, sensor, sensor.seed.wrapping_add(i as u64))?
            .with_timestamp(*t);
        out.push((ts_ns, cloud));
    }
    Ok(out)
}

// ── Ray-triangle intersection and BVH ───────────────────────────────────────

/// Moller-Trumbore without backface culling. Barycentric bounds carry a 1e-9
/// slack so seam-exact hits register on at least one of the two triangles
/// sharing the edge.
fn ray_triangle<T: Real>(origin: &Point3<T>, dir: &Vector3<T>, tri: &[Point3<T>; 3]) -> Option<T> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < T::of(DET_EPS) {
        return None;
    }
    let inv = T::one() / det;
    let tvec = origin - tri[0];
    let eps = T::of(EDGE_EPS);
    let u = tvec.dot(&pvec) * inv;
    if u < -eps || u > T::one() + eps {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < -eps || u + v > T::one() + eps {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    (t > T::of(T_MIN)).then_some(t)
}

#[derive(Debug, Clone)]
struct BvhNode<T: Real> {
    min: Point3<T>,
    max: Point3<T>,
    /// Leaf: `[start, start + count)` into `order`. Internal: `count == 0`,
    /// children at `left` and `left + 1`.
    left: u32,
    start: u32,
    count: u32,
}

#[derive(Debug, Clone)]
struct Bvh<T: Real> {
    nodes: Vec<BvhNode<T>>,
    order: Vec<u32>,
}

impl<T: Real> Bvh<T> {
    fn build(triangles: &[[Point3<T>; 3]]) -> Self {
        let mut order: Vec<u32> = (0..triangles.len() as u32).collect();
        let mut nodes = Vec::new();
        if !triangles.is_empty() {
            let len = order.len();
            Self::build_node(triangles, &mut order, 0, len, &mut nodes);
        }
        Bvh { nodes, order }
    }

    fn build_node(
        triangles: &[[Point3<T>; 3]],
        order: &mut [u32],
        start: usize,
        len: usize,
        nodes: &mut Vec<BvhNode<T>>,
    ) -> u32 {
        let slice = &order[start..start + len];
        let mut min = triangles[slice[0] as usize][0];
        let mut max = min;
        for &i in slice {
            for v in &triangles[i as usize] {
                for a in 0..3 {
                    min[a] = min[a].min(v[a]);
                    max[a] = max[a].max(v[a]);
                }
            }
        }
        let id = nodes.len() as u32;
        nodes.push(BvhNode {
            min,
            max,
            left: 0,
            start: start as u32,
            count: len as u32,
        });
        if len <= LEAF_SIZE {
            return id;
        }

        // Split at the centroid median along the widest centroid axis.
        let centroid = |i: u32| {
            let t = &triangles[i as usize];
            (t[0].coords + t[1].coords + t[2].coords) / T::of(3.0)
        };
        let mut clo = centroid(slice[0]);
        let mut chi = clo;
        for &i in &slice[1..] {
            let c = centroid(i);
            for a in 0..3 {
                clo[a] = clo[a].min(c[a]);
                chi[a] = chi[a].max(c[a]);
            }
        }
        let spread = chi - clo;
        let mut axis = 0;
        for a in 1..3 {
            if spread[a] > spread[axis] {
                axis = a;
            }
        }
        if spread[axis] == T::zero() {
            return id; // coincident centroids: keep as an oversized leaf
        }
        let mid = len / 2;
        order[start..start + len].select_nth_unstable_by(mid, |&a, &b| {
            centroid(a)[axis]
                .partial_cmp(&centroid(b)[axis])
                .expect("finite centroids")
                .then(a.cmp(&b))
        });

        let left = Self::build_node(triangles, order, start, mid, nodes);
        let right = Self::build_node(triangles, order, start + mid, len - mid, nodes);
        nodes[id as usize].left = left;
        nodes[id as usize].count = 0;
        nodes[id as usize].start = right; // right child id (children not adjacent)
        id
    }

    fn nearest_hit(
        &self,
        triangles: &[[Point3<T>; 3]],
        origin: &Point3<T>,
        dir: &Vector3<T>,
        max_range: T,
    ) -> Option<T> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = max_range;
        let mut hit = false;
        let mut stack: Vec<u32> = vec![0];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if slab_entry(&node.min, &node.max, origin, dir, best).is_none() {
                continue;
            }
            if node.count > 0 {
                for &i in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    if let Some(t) = ray_triangle(origin, dir, &triangles[i as usize]) {
                        if t < best {
                            best = t;
                            hit = true;
                        }
                    }
                }
            } else {
                // Visit the nearer child first so `best` tightens early.
                let l = node.left;
                let r = node.start;
                let tl = slab_entry(
                    &self.nodes[l as usize].min,
                    &self.nodes[l as usize].max,
                    origin,
                    dir,
                    best,
                );
                let tr = slab_entry(
                    &self.nodes[r as usize].min,
                    &self.nodes[r as usize].max,
                    origin,
                    dir,
                    best,
                );
                match (tl, tr) {
                    (Some(a), Some(b)) if a <= b => {
                        stack.push(r);
                        stack.push(l);
                    }
                    (Some(_), Some(_)) => {
                        stack.push(l);
                        stack.push(r);
                    }
                    (Some(_), None) => stack.push(l),
                    (None, Some(_)) => stack.push(r),
                    (None, None) => {}
                }
            }
        }
        hit.then_some(best)
    }
}

/// Slab test: entry parameter of the ray into the box over `(T_MIN, best)`,
/// or `None` when the interval is empty. Zero direction components are
/// handled explicitly so no NaN arises from `0 * inf`.
fn slab_entry<T: Real>(
    min: &Point3<T>,
    max: &Point3<T>,
    origin: &Point3<T>,
    dir: &Vector3<T>,
    best: T,
) -> Option<T> {
    let mut t0 = T::of(T_MIN);
    let mut t1 = best;
    for a in 0..3 {
        if dir[a] == T::zero() {
            if origin[a] < min[a] || origin[a] > max[a] {
                return None;
            }
            continue;
        }
        let inv = T::one() / dir[a];
        let mut ta = (min[a] - origin[a]) * inv;
        let mut tb = (max[a] - origin[a]) * inv;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}
