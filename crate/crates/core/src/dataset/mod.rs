//! Label maps, place grid, synthetic worlds and the on-disk sequence format.

mod grid;
mod io;
mod labels;
mod render;
mod world;

pub use grid::{wrap_angle, Bounds, ClassId, PlaceGrid, Pose};
pub use io::{
    load_sequence, save_sequence, FrameRecord, SequenceManifest, MANIFEST_SCHEMA_VERSION,
};
pub use labels::SemanticLabel;
pub use render::render_label_map;
pub use world::{
    generate_world, heading_delta, CameraConfig, DomainShift, Landmark, LandmarkCounts,
    LandmarkKind, Route, RouteSpec, World, WorldConfig,
};

use crate::error::{Error, Result};

/// Row-major per-pixel semantic labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32, labels: Vec<u8>) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::InvalidLabelMap(format!(
                "{width}x{height} is smaller than 3x3"
            )));
        }
        if labels.len() != width as usize * height as usize {
            return Err(Error::InvalidLabelMap(format!(
                "{} labels for a {width}x{height} map",
                labels.len()
            )));
        }
        if let Some(&bad) = labels
            .iter()
            .find(|&&l| !SemanticLabel(l).is_valid() && !SemanticLabel(l).is_void())
        {
            return Err(Error::UnknownLabel(bad));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: u32, height: u32, label: SemanticLabel) -> Result<Self> {
        Self::new(
            width,
            height,
            vec![label.0; width as usize * height as usize],
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: u32, y: u32) -> SemanticLabel {
        SemanticLabel(self.labels[y as usize * self.width as usize + x as usize])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_map_validation() {
        assert!(LabelMap::new(2, 5, vec![0; 10]).is_err());
        assert!(LabelMap::new(3, 3, vec![0; 8]).is_err());
        assert!(matches!(
            LabelMap::new(3, 3, vec![19; 9]),
            Err(Error::UnknownLabel(19))
        ));
        let m = LabelMap::new(3, 3, vec![255; 9]).unwrap();
        assert!(m.get(1, 1).is_void());
    }
}
