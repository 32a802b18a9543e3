//! Binary little-endian PLY for semantic maps and raw scans.
//!
//! Map layout: `float x y z nx ny nz` + `ushort label`, with the category
//! table embedded as `comment category <id> <name>` header lines. Scans are
//! the same container with only `float x y z`. The reader accepts any subset
//! of the known properties and skips unknown ones of known size.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::SemanticPointCloud;
use crate::map::CategoryTable;
use crate::scalar::Real;

/// Write a semantic map (or any cloud) as binary little-endian PLY.
///
/// Properties mirror what the cloud carries: positions always, `nx ny nz`
/// when normals are present, `label` when labels are present. Category names
/// (ids dense from 1) are embedded as `comment category` lines; `comments`
/// adds free-form provenance lines after them. Coordinates are stored as
/// `f32` — that is the file format's precision regardless of `T`.
pub fn write_map_ply<T: Real>(
    path: impl AsRef<Path>,
    cloud: &SemanticPointCloud<T>,
    categories: &CategoryTable,
    comments: &[String],
) -> Result<()> {
    let path = path.as_ref();
    let display = path.display().to_string();
    cloud.validate()?;
    let inner = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(b"ply\n")?;
        w.write_all(b"format binary_little_endian 1.0\n")?;
        for (id, name) in categories.iter() {
            writeln!(w, "comment category {id} {name}")?;
        }
        for c in comments {
            writeln!(w, "comment {c}")?;
        }
        writeln!(w, "element vertex {}", cloud.len())?;
        w.write_all(b"property float x\nproperty float y\nproperty float z\n")?;
        if cloud.has_normals() {
            w.write_all(b"property float nx\nproperty float ny\nproperty float nz\n")?;
        }
        if cloud.has_labels() {
            w.write_all(b"property ushort label\n")?;
        }
        w.write_all(b"end_header\n")?;

        for i in 0..cloud.len() {
            let p = &cloud.points[i];
            for a in 0..3 {
                w.write_f32::<LittleEndian>(p[a].as_f64() as f32)?;
            }
            if let Some(normals) = &cloud.normals {
                for a in 0..3 {
                    w.write_f32::<LittleEndian>(normals[i][a].as_f64() as f32)?;
                }
            }
            if let Some(labels) = &cloud.labels {
                w.write_u16::<LittleEndian>(labels[i])?;
            }
        }
        w.flush()
    };
    inner().map_err(|e| Error::io(&display, e))
}

/// Write a raw scan: positions only, no normals/labels/categories.
pub fn write_scan_ply<T: Real>(path: impl AsRef<Path>, cloud: &SemanticPointCloud<T>) -> Result<()> {
    let bare = SemanticPointCloud::new(cloud.points.clone());
    write_map_ply(path, &bare, &CategoryTable::new(), &[])
}

/// Byte width of the PLY scalar types the reader can skip over.
fn type_size(ty: &str) -> Option<usize> {
    match ty {
        "char" | "uchar" | "int8" | "uint8" => Some(1),
        "short" | "ushort" | "int16" | "uint16" => Some(2),
        "int" | "uint" | "float" | "int32" | "uint32" | "float32" => Some(4),
        "double" | "float64" | "int64" | "uint64" => Some(8),
        _ => None,
    }
}

#[derive(Clone, Debug)]
struct Property {
    name: String,
    ty: String,
}

/// Read newline-terminated header lines up to and including `end_header`.
fn read_header_lines(r: &mut BufReader<File>, display: &str) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    loop {
        let mut buf = Vec::new();
        loop {
            let mut byte = [0u8; 1];
            r.read_exact(&mut byte).map_err(|e| {
                if e.kind() == std::io::ErrorKind::UnexpectedEof {
                    Error::parse(display, lines.len() + 1, "header ended before end_header")
                } else {
                    Error::io(display, e)
                }
            })?;
            if byte[0] == b'\n' {
                break;
            }
            buf.push(byte[0]);
            if buf.len() > 4096 {
                return Err(Error::parse(display, lines.len() + 1, "header line too long"));
            }
        }
        if buf.last() == Some(&b'\r') {
            buf.pop();
        }
        let line = String::from_utf8(buf)
            .map_err(|_| Error::parse(display, lines.len() + 1, "header is not valid UTF-8"))?;
        let done = line == "end_header";
        lines.push(line);
        if done {
            return Ok(lines);
        }
        if lines.len() > 100_000 {
            return Err(Error::parse(display, lines.len(), "header too large"));
        }
    }
}

/// Read a binary little-endian PLY written by this crate (or compatible).
///
/// Returns the cloud (normals/labels present when the file carries them) and
/// the embedded category table (empty when no `comment category` lines
/// exist). The cloud timestamp is left unset.
pub fn read_map_ply<T: Real>(
    path: impl AsRef<Path>,
) -> Result<(SemanticPointCloud<T>, CategoryTable)> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut r = BufReader::new(file);

    // ── Header ── (read fully first; the payload starts right after the
    // end_header newline)
    let header = read_header_lines(&mut r, &display)?;
    if header.first().map(String::as_str) != Some("ply") {
        return Err(Error::parse(&display, 1, "missing 'ply' magic"));
    }
    if header.get(1).map(String::as_str) != Some("format binary_little_endian 1.0") {
        return Err(Error::parse(
            &display,
            2,
            "unsupported format (need binary_little_endian 1.0)",
        ));
    }
    let line_no = header.len();

    let mut categories_raw: Vec<(u16, String)> = Vec::new();
    let mut count: Option<usize> = None;
    let mut properties: Vec<Property> = Vec::new();
    for (idx, line) in header.iter().enumerate().skip(2) {
        let line_no = idx + 1;
        if line.as_str() == "end_header" {
            break;
        }
        if let Some(rest) = line.strip_prefix("comment category ") {
            let (id_str, name) = rest.split_once(' ').ok_or_else(|| {
                Error::parse(&display, line_no, "category comment needs '<id> <name>'")
            })?;
            let id: u16 = id_str.parse().map_err(|_| {
                Error::parse(&display, line_no, format!("bad category id '{id_str}'"))
            })?;
            categories_raw.push((id, name.to_owned()));
        } else if line.starts_with("comment ") || line == "comment" {
            // Free-form provenance; ignored on read.
        } else if let Some(rest) = line.strip_prefix("element ") {
            let mut parts = rest.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some("vertex"), Some(n)) => {
                    count = Some(n.parse().map_err(|_| {
                        Error::parse(&display, line_no, format!("bad vertex count '{n}'"))
                    })?);
                }
                (Some(other), _) => {
                    return Err(Error::parse(
                        &display,
                        line_no,
                        format!("unsupported element '{other}'"),
                    ));
                }
                _ => return Err(Error::parse(&display, line_no, "malformed element line")),
            }
        } else if let Some(rest) = line.strip_prefix("property ") {
            let mut parts = rest.split_whitespace();
            let ty = parts
                .next()
                .ok_or_else(|| Error::parse(&display, line_no, "property needs a type"))?;
            if ty == "list" {
                return Err(Error::parse(
                    &display,
                    line_no,
                    "list properties are not supported",
                ));
            }
            let name = parts
                .next()
                .ok_or_else(|| Error::parse(&display, line_no, "property needs a name"))?;
            properties.push(Property {
                name: name.to_owned(),
                ty: ty.to_owned(),
            });
        } else {
            return Err(Error::parse(
                &display,
                line_no,
                format!("unrecognized header line '{line}'"),
            ));
        }
    }
    let count =
        count.ok_or_else(|| Error::parse(&display, line_no, "missing 'element vertex' line"))?;

    // Validate the property layout against what this crate understands.
    let float_fields = ["x", "y", "z", "nx", "ny", "nz"];
    for p in &properties {
        if float_fields.contains(&p.name.as_str()) && p.ty != "float" && p.ty != "float32" {
            return Err(Error::parse(
                &display,
                line_no,
                format!("property '{}' must be float, found {}", p.name, p.ty),
            ));
        }
        if p.name == "label" && !matches!(p.ty.as_str(), "ushort" | "uint16") {
            return Err(Error::parse(
                &display,
                line_no,
                format!("property 'label' must be ushort, found {}", p.ty),
            ));
        }
        if type_size(&p.ty).is_none() {
            return Err(Error::parse(
                &display,
                line_no,
                format!("property '{}' has unsupported type {}", p.name, p.ty),
            ));
        }
    }
    let has = |n: &str| properties.iter().any(|p| p.name == n);
    if !(has("x") && has("y") && has("z")) {
        return Err(Error::parse(&display, line_no, "missing x/y/z properties"));
    }
    let has_normals = has("nx") && has("ny") && has("nz");
    let has_labels = has("label");

    // ── Category table ──
    let mut categories = CategoryTable::new();
    categories_raw.sort_by(|a, b| a.0.cmp(&b.0));
    for (expect, (id, name)) in categories_raw.iter().enumerate() {
        if usize::from(*id) != expect + 1 {
            return Err(Error::parse(
                &display,
                1,
                format!("category ids must be dense from 1; found id {id}"),
            ));
        }
        let interned = categories.intern(name)?;
        if interned != *id {
            return Err(Error::parse(
                &display,
                1,
                format!("duplicate category name '{name}'"),
            ));
        }
    }

    // ── Payload ──
    let mut points = Vec::with_capacity(count);
    let mut normals = has_normals.then(|| Vec::with_capacity(count));
    let mut labels = has_labels.then(|| Vec::with_capacity(count));
    let truncated = |e: std::io::Error| -> Error {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::parse(&display, line_no, "payload truncated")
        } else {
            Error::io(&display, e)
        }
    };
    for _ in 0..count {
        let mut pos = [0f32; 3];
        let mut nrm = [0f32; 3];
        let mut label = 0u16;
        for p in &properties {
            match p.name.as_str() {
                "x" => pos[0] = r.read_f32::<LittleEndian>().map_err(truncated)?,
                "y" => pos[1] = r.read_f32::<LittleEndian>().map_err(truncated)?,
                "z" => pos[2] = r.read_f32::<LittleEndian>().map_err(truncated)?,
                "nx" => nrm[0] = r.read_f32::<LittleEndian>().map_err(truncated)?,
                "ny" => nrm[1] = r.read_f32::<LittleEndian>().map_err(truncated)?,
                "nz" => nrm[2] = r.read_f32::<LittleEndian>().map_err(truncated)?,
                "label" => label = r.read_u16::<LittleEndian>().map_err(truncated)?,
                _ => {
                    let size = type_size(&p.ty).expect("validated above");
                    let mut skip = [0u8; 8];
                    r.read_exact(&mut skip[..size]).map_err(truncated)?;
                }
            }
        }
        points.push(Point3::new(
            T::of(f64::from(pos[0])),
            T::of(f64::from(pos[1])),
            T::of(f64::from(pos[2])),
        ));
        if let Some(ns) = &mut normals {
            ns.push(Vector3::new(
                T::of(f64::from(nrm[0])),
                T::of(f64::from(nrm[1])),
                T::of(f64::from(nrm[2])),
            ));
        }
        if let Some(ls) = &mut labels {
            ls.push(label);
        }
    }

    let mut cloud = SemanticPointCloud::new(points);
    if let Some(ns) = normals {
        cloud = cloud.with_normals(ns)?;
    }
    if let Some(ls) = labels {
        cloud = cloud.with_labels(ls)?;
    }
    cloud.validate()?;
    Ok((cloud, categories))
}
