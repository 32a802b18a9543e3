//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Variants carry enough context
//! to be actionable on their own; [`Error::code`] exposes a stable
//! machine-parsable identifier for command-line consumers.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation that needs at least one point received none.
    #[error("empty point set")]
    EmptyPointSet,

    /// Nearest-neighbor query with `k = 0` or `k` larger than the index.
    #[error("invalid k = {requested} for an index of {available} points")]
    InvalidK { requested: usize, available: usize },

    /// Normal estimation needs `3 <= k <= point count`.
    #[error("invalid neighborhood k = {k} for normal estimation over {points} points (need 3 <= k <= count)")]
    InvalidNormalK { k: usize, points: usize },

    /// Mesh sampling over a mesh with no (non-degenerate) triangles.
    #[error("mesh has no triangles to sample")]
    NoTriangles,

    /// Semantic labeling requires at least one element box.
    #[error("empty element box list")]
    EmptyBoxList,

    /// Planar projection of a pose whose pitch is within 1e-6 rad of +/-90 deg.
    #[error("yaw undefined: pose pitch within 1e-6 rad of +/-90 deg")]
    YawUndefined,

    /// Too few usable associations (or rank-deficient normal equations).
    #[error("degenerate registration: {kept} usable associations (need at least 6)")]
    DegenerateRegistration { kept: usize },

    /// Category selection removed every point of the scan.
    #[error("category selection produced an empty scan")]
    EmptySelection,

    /// A semantic variant was asked to run against a map without labels.
    #[error("map has no semantic labels; semantic variants need a labeled map")]
    MissingLabels,

    /// Registration needs per-point map normals.
    #[error("map has no normals; registration needs an oriented map")]
    MissingNormals,

    /// A scan fed to the tracker carries no timestamp.
    #[error("scan {index} has no timestamp")]
    MissingTimestamp { index: usize },

    /// Timestamps must be strictly increasing.
    #[error("timestamps not strictly increasing at entry {index}")]
    UnorderedTimestamps { index: usize },

    /// Planar alignment over coincident positions has no unique solution.
    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),

    /// Timestamp association found no pair within the tolerance.
    #[error("no temporal overlap between trajectories (max_dt = {max_dt} s)")]
    NoTemporalOverlap { max_dt: f64 },

    /// Drift analysis needs two disjoint windows.
    #[error("trajectory too short: {len} poses, z-drift window of {window} needs at least {needed}")]
    TrajectoryTooShort {
        len: usize,
        window: usize,
        needed: usize,
    },

    /// Deviation spec removes element ids absent from the box manifest.
    #[error("unknown element id(s) in removal list: {}", ids.join(", "))]
    UnknownElementIds { ids: Vec<String> },

    /// Malformed input file.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// I/O failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A configuration value violates its documented range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Non-finite numeric input where finite values are required.
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl Error {
    /// Stable machine-parsable code, used as the error-line prefix by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyPointSet => "E_EMPTY_POINT_SET",
            Error::InvalidK { .. } => "E_INVALID_K",
            Error::InvalidNormalK { .. } => "E_INVALID_NORMAL_K",
            Error::NoTriangles => "E_NO_TRIANGLES",
            Error::EmptyBoxList => "E_EMPTY_BOX_LIST",
            Error::YawUndefined => "E_YAW_UNDEFINED",
            Error::DegenerateRegistration { .. } => "E_DEGENERATE_REGISTRATION",
            Error::EmptySelection => "E_EMPTY_SELECTION",
            Error::MissingLabels => "E_MISSING_LABELS",
            Error::MissingNormals => "E_MISSING_NORMALS",
            Error::MissingTimestamp { .. } => "E_MISSING_TIMESTAMP",
            Error::UnorderedTimestamps { .. } => "E_UNORDERED_TIMESTAMPS",
            Error::DegenerateAlignment(_) => "E_DEGENERATE_ALIGNMENT",
            Error::NoTemporalOverlap { .. } => "E_NO_TEMPORAL_OVERLAP",
            Error::TrajectoryTooShort { .. } => "E_TRAJECTORY_TOO_SHORT",
            Error::UnknownElementIds { .. } => "E_UNKNOWN_ELEMENT_ID",
            Error::Parse { .. } => "E_PARSE",
            Error::Io { .. } => "E_IO",
            Error::InvalidConfig(_) => "E_CONFIG",
            Error::NonFinite(_) => "E_NON_FINITE",
        }
    }

    /// Wrap an I/O error with the path it came from.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Build a parse error for `path` at 1-based `line`.
    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
