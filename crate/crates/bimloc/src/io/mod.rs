//! File formats: OBJ meshes, element-box manifests (JSON), semantic map and
//! scan point clouds (binary little-endian PLY), scan logs, and TUM-style
//! trajectories.

mod boxes;
mod obj;
mod ply;
mod scanlog;
mod tum;

pub use boxes::{load_boxes, parse_boxes, save_boxes};
pub use obj::{load_obj, parse_obj};
pub use ply::{read_map_ply, write_map_ply, write_scan_ply};
pub use scanlog::{load_scans, read_scan_log, write_scan_dir, ScanLogWriter, SCAN_LOG_MAGIC};
pub use tum::{read_tum, write_tum};
