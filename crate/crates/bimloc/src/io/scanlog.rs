//! Scan sequences on disk: either a directory of `<timestamp_ns>.ply` files
//! or a single binary scan log.
//!
//! Scan-log layout: 7-byte magic `SLSCAN1`, then per scan a `u64` timestamp
//! (nanoseconds, little-endian), a `u32` point count, and `count × 3` `f32`
//! coordinates.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::geometry::SemanticPointCloud;
use crate::io::ply::{read_map_ply, write_scan_ply};
use crate::scalar::Real;

/// Magic bytes opening a scan log.
pub const SCAN_LOG_MAGIC: &[u8; 7] = b"SLSCAN1";

/// Streaming scan-log writer.
pub struct ScanLogWriter {
    w: BufWriter<File>,
    display: String,
    last_ts: Option<u64>,
    scans: usize,
}

impl ScanLogWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(&display, e))?);
        w.write_all(SCAN_LOG_MAGIC)
            .map_err(|e| Error::io(&display, e))?;
        Ok(ScanLogWriter {
            w,
            display,
            last_ts: None,
            scans: 0,
        })
    }

    /// Append one scan; timestamps must be strictly increasing.
    pub fn append<T: Real>(
        &mut self,
        timestamp_ns: u64,
        cloud: &SemanticPointCloud<T>,
    ) -> Result<()> {
        if let Some(last) = self.last_ts {
            if timestamp_ns <= last {
                return Err(Error::UnorderedTimestamps { index: self.scans });
            }
        }
        let inner = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            w.write_u64::<LittleEndian>(timestamp_ns)?;
            w.write_u32::<LittleEndian>(cloud.len() as u32)?;
            for p in &cloud.points {
                for a in 0..3 {
                    w.write_f32::<LittleEndian>(p[a].as_f64() as f32)?;
                }
            }
            Ok(())
        };
        inner(&mut self.w).map_err(|e| Error::io(&self.display, e))?;
        self.last_ts = Some(timestamp_ns);
        self.scans += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize> {
        self.w.flush().map_err(|e| Error::io(&self.display, e))?;
        Ok(self.scans)
    }
}

/// Read a whole scan log; each cloud gets its timestamp (seconds) set.
pub fn read_scan_log<T: Real>(path: impl AsRef<Path>) -> Result<Vec<(u64, SemanticPointCloud<T>)>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(&display, e))?);

    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)
        .map_err(|e| Error::io(&display, e))?;
    if &magic != SCAN_LOG_MAGIC {
        return Err(Error::parse(&display, 1, "not a scan log (bad magic)"));
    }

    let mut scans = Vec::new();
    loop {
        let ts = match r.read_u64::<LittleEndian>() {
            Ok(v) => v,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(Error::io(&display, e)),
        };
        let truncated = |e: std::io::Error| -> Error {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::parse(&display, 1, format!("scan {} truncated", scans.len()))
            } else {
                Error::io(&display, e)
            }
        };
        let count = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let mut points = Vec::with_capacity(count);
        for _ in 0..count {
            let x = r.read_f32::<LittleEndian>().map_err(truncated)?;
            let y = r.read_f32::<LittleEndian>().map_err(truncated)?;
            let z = r.read_f32::<LittleEndian>().map_err(truncated)?;
            points.push(Point3::new(
                T::of(f64::from(x)),
                T::of(f64::from(y)),
                T::of(f64::from(z)),
            ));
        }
        let cloud =
            SemanticPointCloud::new(points).with_timestamp(timestamp_ns_to_s(ts));
        cloud.validate()?;
        scans.push((ts, cloud));
    }
    Ok(scans)
}

/// Write a sequence as a directory of `<timestamp_ns>.ply` files.
pub fn write_scan_dir<T: Real>(
    dir: impl AsRef<Path>,
    scans: &[(u64, SemanticPointCloud<T>)],
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    for (ts, cloud) in scans {
        write_scan_ply(dir.join(format!("{ts}.ply")), cloud)?;
    }
    Ok(())
}

/// Load a scan sequence from either layout, sorted by timestamp.
///
/// A directory is scanned for `*.ply` files whose stem is the timestamp in
/// nanoseconds; a file must be a scan log. Timestamps must be unique; each
/// returned cloud has its timestamp set in seconds.
pub fn load_scans<T: Real>(path: impl AsRef<Path>) -> Result<Vec<SemanticPointCloud<T>>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut stamped: Vec<(u64, SemanticPointCloud<T>)> = if path.is_dir() {
        let mut out = Vec::new();
        let entries = std::fs::read_dir(path).map_err(|e| Error::io(&display, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&display, e))?;
            let p = entry.path();
            if p.extension().and_then(|e| e.to_str()) != Some("ply") {
                continue;
            }
            let stem = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            let ts: u64 = stem.parse().map_err(|_| {
                Error::parse(
                    p.display().to_string(),
                    1,
                    "scan file name must be '<timestamp_ns>.ply'",
                )
            })?;
            let (cloud, _) = read_map_ply::<T>(&p)?;
            out.push((ts, cloud.with_timestamp(timestamp_ns_to_s(ts))));
        }
        out
    } else {
        read_scan_log(path)?
    };

    stamped.sort_by_key(|(ts, _)| *ts);
    for i in 1..stamped.len() {
        if stamped[i].0 == stamped[i - 1].0 {
            return Err(Error::UnorderedTimestamps { index: i });
        }
    }
    Ok(stamped.into_iter().map(|(_, c)| c).collect())
}

fn timestamp_ns_to_s(ts: u64) -> f64 {
    ts as f64 * 1e-9
}
