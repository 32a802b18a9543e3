//! TUM-style trajectory files: `timestamp tx ty tz qx qy qz qw` per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::geometry::Pose;
use crate::scalar::Real;

/// Write a trajectory in TUM format with nine decimal places per field.
/// `comments` become leading `# `-prefixed lines.
pub fn write_tum<T: Real>(
    path: impl AsRef<Path>,
    traj: &Trajectory<T>,
    comments: &[String],
) -> Result<()> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let inner = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        for (t, pose) in traj.iter() {
            let q = UnitQuaternion::from_rotation_matrix(&pose.rotation);
            let tr = &pose.translation;
            writeln!(
                w,
                "{:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
                t,
                tr.x.as_f64(),
                tr.y.as_f64(),
                tr.z.as_f64(),
                q.coords.x.as_f64(),
                q.coords.y.as_f64(),
                q.coords.z.as_f64(),
                q.coords.w.as_f64(),
            )?;
        }
        w.flush()
    };
    inner().map_err(|e| Error::io(&display, e))
}

/// Read a TUM trajectory. `#`-prefixed and blank lines are skipped; each data
/// line needs exactly eight fields; quaternions are normalized on ingest;
/// timestamps must be strictly increasing.
pub fn read_tum<T: Real>(path: impl AsRef<Path>) -> Result<Trajectory<T>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut entries: Vec<(f64, Pose<T>)> = Vec::new();

    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line_no = line_no + 1;
        let line = line.map_err(|e| Error::io(&display, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(Error::parse(
                &display,
                line_no,
                format!("expected 8 fields, found {}", fields.len()),
            ));
        }
        let mut v = [0f64; 8];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .map_err(|_| Error::parse(&display, line_no, format!("bad number '{f}'")))?;
            if !slot.is_finite() {
                return Err(Error::parse(&display, line_no, "non-finite field"));
            }
        }
        let q = Quaternion::new(T::of(v[7]), T::of(v[4]), T::of(v[5]), T::of(v[6]));
        if q.norm().as_f64() < 1e-6 {
            return Err(Error::parse(&display, line_no, "zero-norm quaternion"));
        }
        let rotation: Rotation3<T> = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        entries.push((
            v[0],
            Pose::new(rotation, Vector3::new(T::of(v[1]), T::of(v[2]), T::of(v[3]))),
        ));
    }
    // Trajectory::new re-checks ordering and reports the offending index.
    Trajectory::new(entries)
}
