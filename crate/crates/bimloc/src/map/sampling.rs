//! Uniform surface sampling of triangle meshes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{SemanticPointCloud, UNLABELED};
use crate::map::TriangleMesh;
use crate::scalar::Real;

/// Sample a mesh surface at `density` points per m².
///
/// Each triangle contributes `floor(area · density)` points plus one more
/// with probability `frac(area · density)`, so expected counts are exactly
/// proportional to area with no systematic rounding loss. Within a triangle,
/// positions follow the square-root barycentric warp, which is uniform over
/// the surface. The result is deterministic per seed; labels are all
/// [`UNLABELED`] and normals absent.
pub fn sample_mesh<T: Real>(
    mesh: &TriangleMesh<T>,
    density: T,
    seed: u64,
) -> Result<SemanticPointCloud<T>> {
    if !(density.is_finite() && density > T::zero()) {
        return Err(Error::InvalidConfig(format!(
            "sampling density must be finite and positive, got {}",
            density.as_f64()
        )));
    }
    if mesh.triangle_count() == 0 {
        return Err(Error::NoTriangles);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    for i in 0..mesh.triangle_count() {
        let [a, b, c] = mesh.triangle(i);
        let expected = (mesh.triangle_area(i) * density).as_f64();
        let mut n = expected.floor() as u64;
        if rng.random_bool(expected.fract()) {
            n += 1;
        }
        for _ in 0..n {
            let u = rng.random::<f64>();
            let v = rng.random::<f64>();
            let su = T::of(u.sqrt());
            let v = T::of(v);
            // (1 − √u)·A + √u(1 − v)·B + √u·v·C
            let w_a = T::one() - su;
            let w_b = su * (T::one() - v);
            let w_c = su * v;
            points.push(nalgebra::Point3::from(
                a.coords * w_a + b.coords * w_b + c.coords * w_c,
            ));
        }
    }

    let n = points.len();
    SemanticPointCloud::new(points).with_labels(vec![UNLABELED; n])
}
