//! Graph convolutional place classifier with hand-written backpropagation.

mod model;
mod params;
mod train;

pub use model::{argmax, gcn_forward, gcn_loss, gcn_loss_and_grad, predict, softmax, Pdv};
pub use params::{Dense, GcnDims, GcnParams, PARAMS_SCHEMA_VERSION};
pub use train::{accuracy, train, train_from, TrainHyper, TrainOutcome};

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Sidecar written next to a parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub schema_version: u32,
    pub dims: GcnDims,
    pub hyper: TrainHyper,
    pub seed: u64,
    pub feature_mode: crate::descriptor::FeatureMode,
}

/// Writes `<path>` (binary weights) and `<path>.json` (metadata).
pub fn save_model(path: &Path, params: &GcnParams, meta: &ModelMeta) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    params.write_to(&mut w)?;
    drop(w);
    fs::write(sidecar_path(path), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(GcnParams, ModelMeta)> {
    let params = GcnParams::read_from(&mut BufReader::new(fs::File::open(path)?))?;
    let meta = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    Ok((params, meta))
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
