//! Element-box manifests: JSON arrays of labeled axis-aligned boxes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::map::{BoxManifest, CategoryTable, LabeledBox};
use crate::scalar::Real;

/// On-disk record: category is a name, resolved to an id at load time.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxRecord {
    id: String,
    category: String,
    min: [f64; 3],
    max: [f64; 3],
}

/// Load a box manifest. Category ids are assigned densely from 1 in
/// first-appearance order; element ids must be unique and the list non-empty.
pub fn load_boxes<T: Real>(path: impl AsRef<Path>) -> Result<BoxManifest<T>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut content = String::new();
    BufReader::new(file)
        .read_to_string(&mut content)
        .map_err(|e| Error::io(&display, e))?;
    parse_boxes(&content, &display)
}

/// Parse manifest JSON; `origin` names the source in errors.
pub fn parse_boxes<T: Real>(content: &str, origin: &str) -> Result<BoxManifest<T>> {
    let records: Vec<BoxRecord> = serde_json::from_str(content)
        .map_err(|e| Error::parse(origin, e.line(), e.to_string()))?;
    if records.is_empty() {
        return Err(Error::EmptyBoxList);
    }

    let mut categories = CategoryTable::new();
    let mut boxes = Vec::with_capacity(records.len());
    let mut seen = HashSet::new();
    for rec in records {
        if !seen.insert(rec.id.clone()) {
            return Err(Error::InvalidConfig(format!(
                "duplicate element id '{}' in box manifest",
                rec.id
            )));
        }
        let category = categories.intern(&rec.category)?;
        boxes.push(LabeledBox::new(
            rec.id,
            category,
            Point3::new(T::of(rec.min[0]), T::of(rec.min[1]), T::of(rec.min[2])),
            Point3::new(T::of(rec.max[0]), T::of(rec.max[1]), T::of(rec.max[2])),
        )?);
    }
    Ok(BoxManifest { boxes, categories })
}

/// Write a manifest back out (handy for generating fixtures).
pub fn save_boxes<T: Real>(path: impl AsRef<Path>, manifest: &BoxManifest<T>) -> Result<()> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let records: Vec<BoxRecord> = manifest
        .boxes
        .iter()
        .map(|b| BoxRecord {
            id: b.id.clone(),
            category: manifest
                .categories
                .name_of(b.category)
                .unwrap_or("Unlabeled")
                .to_owned(),
            min: [
                b.min_corner.x.as_f64(),
                b.min_corner.y.as_f64(),
                b.min_corner.z.as_f64(),
            ],
            max: [
                b.max_corner.x.as_f64(),
                b.max_corner.y.as_f64(),
                b.max_corner.z.as_f64(),
            ],
        })
        .collect();
    let file = File::create(path).map_err(|e| Error::io(&display, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &records)
        .map_err(|e| Error::io(&display, e.into()))
}
