//! Map builder: triangle meshes, semantically labeled element boxes, and the
//! mesh → labeled-point-cloud pipeline.

mod labeling;
mod sampling;

pub use labeling::{label_map, point_in_box, LabelingDiagnostics};
pub use sampling::sample_mesh;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{estimate_normals, Label, SemanticPointCloud, UNLABELED};
use crate::scalar::Real;

/// Triangles at or below this area (m²) are dropped as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Display name of the reserved [`UNLABELED`] id.
pub const UNLABELED_NAME: &str = "Unlabeled";

// ── Triangle mesh ───────────────────────────────────────────────────────────

/// Indexed triangle mesh. Construction validates indices, requires finite
/// vertices, and silently drops degenerate (≤ 1e-12 m²) triangles, keeping a
/// count for reporting.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh<T: Real> {
    vertices: Vec<Point3<T>>,
    triangles: Vec<[u32; 3]>,
    degenerate_dropped: usize,
}

impl<T: Real> TriangleMesh<T> {
    pub fn new(vertices: Vec<Point3<T>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        for (i, v) in vertices.iter().enumerate() {
            if !v.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite(format!("mesh vertex {i}")));
            }
        }
        let n = vertices.len() as u32;
        let mut kept = Vec::with_capacity(triangles.len());
        let mut dropped = 0usize;
        for (i, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= n {
                    return Err(Error::InvalidConfig(format!(
                        "triangle {i} references vertex {v}, mesh has {n} vertices"
                    )));
                }
            }
            let area = triangle_area(
                &vertices[tri[0] as usize],
                &vertices[tri[1] as usize],
                &vertices[tri[2] as usize],
            );
            if area <= T::of(DEGENERATE_AREA) {
                dropped += 1;
            } else {
                kept.push(*tri);
            }
        }
        Ok(TriangleMesh {
            vertices,
            triangles: kept,
            degenerate_dropped: dropped,
        })
    }

    pub fn vertices(&self) -> &[Point3<T>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// How many degenerate triangles construction threw away.
    pub fn degenerate_dropped(&self) -> usize {
        self.degenerate_dropped
    }

    /// Corner points of triangle `i`.
    pub fn triangle(&self, i: usize) -> [Point3<T>; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, i: usize) -> T {
        let [a, b, c] = self.triangle(i);
        triangle_area(&a, &b, &c)
    }

    pub fn total_area(&self) -> T {
        (0..self.triangle_count()).fold(T::zero(), |acc, i| acc + self.triangle_area(i))
    }
}

pub fn triangle_area<T: Real>(a: &Point3<T>, b: &Point3<T>, c: &Point3<T>) -> T {
    (b - a).cross(&(c - a)).norm() * T::of(0.5)
}

// ── Labeled element boxes ───────────────────────────────────────────────────

/// Axis-aligned element bounding box with a semantic category.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBox<T: Real> {
    pub id: String,
    pub category: Label,
    pub min_corner: Point3<T>,
    pub max_corner: Point3<T>,
}

impl<T: Real> LabeledBox<T> {
    /// Validates `min_corner <= max_corner` per axis (zero extent allowed).
    pub fn new(
        id: impl Into<String>,
        category: Label,
        min_corner: Point3<T>,
        max_corner: Point3<T>,
    ) -> Result<Self> {
        let id = id.into();
        for a in 0..3 {
            if !(min_corner[a].is_finite() && max_corner[a].is_finite()) {
                return Err(Error::NonFinite(format!("box '{id}' corner axis {a}")));
            }
            if min_corner[a] > max_corner[a] {
                return Err(Error::InvalidConfig(format!(
                    "box '{id}': min corner exceeds max corner on axis {a}"
                )));
            }
        }
        Ok(LabeledBox {
            id,
            category,
            min_corner,
            max_corner,
        })
    }

    pub fn center(&self) -> Point3<T> {
        nalgebra::center(&self.min_corner, &self.max_corner)
    }
}

// ── Category table ──────────────────────────────────────────────────────────

/// Bidirectional category-name ↔ id map. Id 0 is reserved for
/// [`UNLABELED`]; real ids are dense from 1 in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CategoryTable {
    names: Vec<String>, // names[i] is the name of label i + 1
}

impl CategoryTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Id for `name`, interning it if unseen.
    pub fn intern(&mut self, name: &str) -> Result<Label> {
        if let Some(id) = self.id_of(name) {
            return Ok(id);
        }
        if self.names.len() >= usize::from(Label::MAX) {
            return Err(Error::InvalidConfig(
                "category table overflow (more than 65534 categories)".into(),
            ));
        }
        self.names.push(name.to_owned());
        Ok(self.names.len() as Label)
    }

    pub fn id_of(&self, name: &str) -> Option<Label> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| (i + 1) as Label)
    }

    /// Name of `label`; id 0 reports the `"Unlabeled"` sentinel name.
    pub fn name_of(&self, label: Label) -> Option<&str> {
        if label == UNLABELED {
            return Some(UNLABELED_NAME);
        }
        self.names.get(usize::from(label) - 1).map(String::as_str)
    }

    /// Number of real (non-sentinel) categories.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Real categories as `(id, name)`, ids ascending.
    pub fn iter(&self) -> impl Iterator<Item = (Label, &str)> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| ((i + 1) as Label, n.as_str()))
    }
}

/// Element boxes plus the category table their labels refer to.
#[derive(Clone, Debug, Default)]
pub struct BoxManifest<T: Real> {
    pub boxes: Vec<LabeledBox<T>>,
    pub categories: CategoryTable,
}

// ── Map construction ────────────────────────────────────────────────────────

/// Parameters of the mesh → semantic map pipeline.
#[derive(Clone, Debug)]
pub struct MapConfig<T: Real> {
    /// Surface sampling density, points per m².
    pub density: T,
    /// Seed of the sampling RNG.
    pub seed: u64,
    /// Neighborhood size for normal estimation.
    pub normal_k: usize,
    /// Candidate boxes examined per point during labeling.
    pub box_candidates: usize,
}

impl<T: Real> Default for MapConfig<T> {
    fn default() -> Self {
        MapConfig {
            density: T::of(30.0),
            seed: 0,
            normal_k: 10,
            box_candidates: 8,
        }
    }
}

/// One histogram row of a build report.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CategoryCount {
    pub label: Label,
    pub name: String,
    pub count: usize,
}

/// Everything worth reporting about a map build.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapBuildReport {
    pub point_count: usize,
    pub degenerate_triangles: usize,
    pub multi_box_points: usize,
    pub unlabeled_points: usize,
    /// Per-category point counts; includes the `Unlabeled` row, so counts
    /// sum to `point_count`.
    pub histogram: Vec<CategoryCount>,
}

/// Full pipeline: sample the mesh, label points by element boxes, estimate
/// normals. The returned cloud carries points, labels, and unit (or
/// zero-sentinel) normals.
pub fn build_semantic_map<T: Real>(
    mesh: &TriangleMesh<T>,
    manifest: &BoxManifest<T>,
    config: &MapConfig<T>,
) -> Result<(SemanticPointCloud<T>, MapBuildReport)> {
    let sampled = sample_mesh(mesh, config.density, config.seed)?;
    let (labeled, diagnostics) = label_map(&sampled, &manifest.boxes, config.box_candidates)?;

    // Tiny clouds: shrink the neighborhood rather than refuse the build.
    let k = config.normal_k.min(labeled.len());
    if k < 3 {
        return Err(Error::InvalidNormalK {
            k,
            points: labeled.len(),
        });
    }
    if k < config.normal_k {
        log::warn!(
            "normal_k {} larger than map ({} points); clamped to {k}",
            config.normal_k,
            labeled.len()
        );
    }
    let cloud = estimate_normals(&labeled, k)?;

    let mut counts = vec![0usize; manifest.categories.len() + 1];
    if let Some(labels) = &cloud.labels {
        for &l in labels {
            counts[usize::from(l)] += 1;
        }
    }
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(label, &count)| CategoryCount {
            label: label as Label,
            name: manifest
                .categories
                .name_of(label as Label)
                .unwrap_or(UNLABELED_NAME)
                .to_owned(),
            count,
        })
        .collect();

    let report = MapBuildReport {
        point_count: cloud.len(),
        degenerate_triangles: mesh.degenerate_dropped(),
        multi_box_points: diagnostics.multi_box_points,
        unlabeled_points: diagnostics.unlabeled_points,
        histogram,
    };
    Ok((cloud, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rectangle split into two triangles, in the z=0 plane.
    pub(crate) fn quad_mesh(w: f64, h: f64) -> TriangleMesh<f64> {
        TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(w, 0.0, 0.0),
                Point3::new(w, h, 0.0),
                Point3::new(0.0, h, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn mesh_drops_degenerate_triangles() {
        let mesh = TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(2.0, 0.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 1, 3], [1, 1, 2]],
        )
        .unwrap();
        assert_eq!(mesh.triangle_count(), 1);
        assert_eq!(mesh.degenerate_dropped(), 2);
    }

    #[test]
    fn mesh_rejects_out_of_range_indices() {
        let res = TriangleMesh::new(vec![Point3::new(0.0f64, 0.0, 0.0)], vec![[0, 0, 1]]);
        assert!(res.is_err());
    }

    #[test]
    fn mesh_area_is_summed() {
        let mesh = quad_mesh(2.0, 3.0);
        assert!((mesh.total_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn box_rejects_inverted_corners() {
        let res = LabeledBox::new(
            "w1",
            1,
            Point3::new(1.0f64, 0.0, 0.0),
            Point3::new(0.0, 1.0, 1.0),
        );
        assert!(res.is_err());
    }

    #[test]
    fn category_table_interns_densely() {
        let mut table = CategoryTable::new();
        assert_eq!(table.intern("Walls").unwrap(), 1);
        assert_eq!(table.intern("Floors").unwrap(), 2);
        assert_eq!(table.intern("Walls").unwrap(), 1);
        assert_eq!(table.name_of(2), Some("Floors"));
        assert_eq!(table.name_of(0), Some(UNLABELED_NAME));
        assert_eq!(table.name_of(3), None);
        assert_eq!(table.id_of("Floors"), Some(2));
        assert_eq!(table.len(), 2);
    }

    #[test]
    fn build_pipeline_labels_and_orients() {
        // Two perpendicular walls, each wrapped by its own box.
        let mut verts: Vec<Point3<f64>> = Vec::new();
        let mut tris = Vec::new();
        // Wall A: plane x=0, y in [0,4], z in [0,3].
        verts.extend([
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.0, 4.0, 0.0),
            Point3::new(0.0, 4.0, 3.0),
            Point3::new(0.0, 0.0, 3.0),
        ]);
        tris.extend([[0, 1, 2], [0, 2, 3]]);
        // Wall B: plane y=0, x in [0,4], z in [0,3].
        verts.extend([
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(4.0, 0.0, 0.0),
            Point3::new(4.0, 0.0, 3.0),
            Point3::new(0.0, 0.0, 3.0),
        ]);
        tris.extend([[4, 5, 6], [4, 6, 7]]);
        let mesh = TriangleMesh::new(verts, tris).unwrap();

        let mut categories = CategoryTable::new();
        let walls = categories.intern("Walls").unwrap();
        let manifest = BoxManifest {
            boxes: vec![
                LabeledBox::new(
                    "wall-a",
                    walls,
                    Point3::new(-0.1, -0.1, -0.1),
                    Point3::new(0.1, 4.1, 3.1),
                )
                .unwrap(),
                LabeledBox::new(
                    "wall-b",
                    walls,
                    Point3::new(-0.1, -0.1, -0.1),
                    Point3::new(4.1, 0.1, 3.1),
                )
                .unwrap(),
            ],
            categories,
        };

        let config = MapConfig {
            density: 40.0,
            ..MapConfig::default()
        };
        let (cloud, report) = build_semantic_map(&mesh, &manifest, &config).unwrap();

        assert_eq!(report.point_count, cloud.len());
        assert!(cloud.len() > 500);
        assert!(cloud.has_normals() && cloud.has_labels());
        cloud.validate().unwrap();

        // Histogram sums to the point count.
        let sum: usize = report.histogram.iter().map(|c| c.count).sum();
        assert_eq!(sum, report.point_count);

        // Every point sits inside a box, so at least 95% get the wall label
        // (all of them, here — the boxes overlap only at the corner, and
        // both carry the same category).
        let labels = cloud.labels.as_ref().unwrap();
        let walls_count = labels.iter().filter(|&&l| l == walls).count();
        assert!(walls_count as f64 >= 0.95 * cloud.len() as f64);
        assert_eq!(report.unlabeled_points, cloud.len() - walls_count);

        // Normals should be ±x on wall A and ±y on wall B (away from the
        // scene centroid at roughly (1, 1, 1.5): -x and -y respectively).
        let normals = cloud.normals.as_ref().unwrap();
        let mut oriented = 0;
        for (p, n) in cloud.points.iter().zip(normals) {
            if p.x.abs() < 1e-9 && p.y > 1.0 && n.x < -0.9 {
                oriented += 1;
            }
            if p.y.abs() < 1e-9 && p.x > 1.0 && n.y < -0.9 {
                oriented += 1;
            }
        }
        assert!(oriented > 100, "oriented wall normals: {oriented}");
    }

    #[test]
    fn universal_box_labels_everything() {
        let mesh = quad_mesh(2.0, 2.0);
        let mut categories = CategoryTable::new();
        let floors = categories.intern("Floors").unwrap();
        let manifest = BoxManifest {
            boxes: vec![LabeledBox::new(
                "floor-1",
                floors,
                Point3::new(-10.0, -10.0, -10.0),
                Point3::new(10.0, 10.0, 10.0),
            )
            .unwrap()],
            categories,
        };
        let (cloud, report) =
            build_semantic_map(&mesh, &manifest, &MapConfig::default()).unwrap();
        assert!(cloud.labels.as_ref().unwrap().iter().all(|&l| l == floors));
        assert_eq!(report.unlabeled_points, 0);
        assert_eq!(report.multi_box_points, 0);
    }

    #[test]
    fn build_requires_boxes() {
        let mesh = quad_mesh(1.0, 1.0);
        let manifest = BoxManifest::<f64>::default();
        let res = build_semantic_map(&mesh, &manifest, &MapConfig::default());
        assert!(matches!(res, Err(Error::EmptyBoxList)));
    }
}
