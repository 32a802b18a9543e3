//! Wavefront OBJ subset: `v` and `f` records, triangles only.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::map::TriangleMesh;
use crate::scalar::Real;

/// Load a triangle mesh from an OBJ file.
///
/// Supported records: `v x y z [w]` (extra components ignored) and
/// `f a b c` with 1-based vertex references; `a/b/c`-style references keep
/// only the vertex index. Faces with more or fewer than three vertices are
/// rejected with their line number — meshes must be triangulated upstream.
/// All other record types are skipped. Degenerate triangles are dropped by
/// mesh construction (see [`TriangleMesh::degenerate_dropped`]).
pub fn load_obj<T: Real>(path: impl AsRef<Path>) -> Result<TriangleMesh<T>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    parse_obj(BufReader::new(file), &display)
}

/// Parse OBJ content from any reader; `origin` names the source in errors.
pub fn parse_obj<T: Real>(reader: impl BufRead, origin: &str) -> Result<TriangleMesh<T>> {
    let mut vertices: Vec<Point3<T>> = Vec::new();
    // Faces keep their line number so range errors can point at the source.
    let mut faces: Vec<([u32; 3], usize)> = Vec::new();

    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut coords = [T::zero(); 3];
                for c in &mut coords {
                    let tok = tokens.next().ok_or_else(|| {
                        Error::parse(origin, line_no, "vertex needs three coordinates")
                    })?;
                    let v: f64 = tok.parse().map_err(|_| {
                        Error::parse(origin, line_no, format!("bad coordinate '{tok}'"))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::parse(origin, line_no, "non-finite coordinate"));
                    }
                    *c = T::of(v);
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(Error::parse(
                        origin,
                        line_no,
                        format!(
                            "face with {} vertices; only triangles are supported",
                            refs.len()
                        ),
                    ));
                }
                let mut tri = [0u32; 3];
                for (slot, r) in tri.iter_mut().zip(&refs) {
                    // "i", "i/j", "i//k", "i/j/k" — vertex index comes first.
                    let first = r.split('/').next().unwrap_or("");
                    let idx: i64 = first.parse().map_err(|_| {
                        Error::parse(origin, line_no, format!("bad vertex reference '{r}'"))
                    })?;
                    if idx < 1 {
                        return Err(Error::parse(
                            origin,
                            line_no,
                            format!("vertex reference {idx} is not a positive 1-based index"),
                        ));
                    }
                    *slot = (idx - 1) as u32;
                }
                faces.push((tri, line_no));
            }
            _ => {} // comments, normals, groups, materials: ignored
        }
    }

    let n = vertices.len() as u32;
    for (tri, line_no) in &faces {
        for &v in tri {
            if v >= n {
                return Err(Error::parse(
                    origin,
                    *line_no,
                    format!("face references vertex {}, file has {}", v + 1, n),
                ));
            }
        }
    }
    TriangleMesh::new(vertices, faces.into_iter().map(|(t, _)| t).collect())
}
