use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label map: {0}")]
    InvalidLabelMap(String),
    #[error("label id {0} is not in the source palette")]
    UnknownLabel(u8),
    #[error("unknown label name {0:?}")]
    UnknownLabelName(String),
    #[error("pose ({x}, {y}) lies outside the workspace")]
    PoseOutOfBounds { x: f64, y: f64 },
    #[error("world too crowded: placed {placed} of {requested} landmarks")]
    WorldTooCrowded { placed: usize, requested: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("missing frame file {0}")]
    MissingFrameFile(PathBuf),
    #[error("dimension mismatch in {file}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        file: PathBuf,
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("malformed PGM {0}")]
    MalformedPgm(String),
    #[error("scene graph has no surviving regions")]
    EmptyGraph,
    #[error("centroid ({x}, {y}) outside a {width}x{height} image")]
    CentroidOutOfImage {
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },
    #[error("descriptor component {name} = {value} out of range")]
    ComponentOutOfRange { name: &'static str, value: usize },
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    FeatureDimMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty sequence")]
    EmptySequence,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid parameter file: {0}")]
    InvalidParamsFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
