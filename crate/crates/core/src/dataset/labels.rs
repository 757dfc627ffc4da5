//! The 19-label source palette produced by street-scene segmentation models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A label id from the source palette, or [`SemanticLabel::VOID`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SemanticLabel(pub u8);

const NAMES: [&str; 19] = [
    "road",
    "sidewalk",
    "building",
    "wall",
    "fence",
    "pole",
    "traffic-light",
    "traffic-sign",
    "vegetation",
    "terrain",
    "sky",
    "person",
    "rider",
    "car",
    "truck",
    "bus",
    "train",
    "motorcycle",
    "bicycle",
];

impl SemanticLabel {
    pub const ROAD: Self = Self(0);
    pub const SIDEWALK: Self = Self(1);
    pub const BUILDING: Self = Self(2);
    pub const WALL: Self = Self(3);
    pub const FENCE: Self = Self(4);
    pub const POLE: Self = Self(5);
    pub const TRAFFIC_LIGHT: Self = Self(6);
    pub const TRAFFIC_SIGN: Self = Self(7);
    pub const VEGETATION: Self = Self(8);
    pub const TERRAIN: Self = Self(9);
    pub const SKY: Self = Self(10);
    pub const PERSON: Self = Self(11);
    pub const RIDER: Self = Self(12);
    pub const CAR: Self = Self(13);
    pub const TRUCK: Self = Self(14);
    pub const BUS: Self = Self(15);
    pub const TRAIN: Self = Self(16);
    pub const MOTORCYCLE: Self = Self(17);
    pub const BICYCLE: Self = Self(18);

    /// Reserved id for unlabeled pixels.
    pub const VOID: Self = Self(255);

    pub const COUNT: usize = NAMES.len();

    pub fn all() -> impl Iterator<Item = SemanticLabel> {
        (0..Self::COUNT as u8).map(SemanticLabel)
    }

    pub fn is_void(self) -> bool {
        self == Self::VOID
    }

    pub fn is_valid(self) -> bool {
        (self.0 as usize) < Self::COUNT
    }

    pub fn name(self) -> Option<&'static str> {
        NAMES.get(self.0 as usize).copied()
    }

    pub fn from_name(name: &str) -> Result<Self> {
        NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| SemanticLabel(i as u8))
            .ok_or_else(|| Error::UnknownLabelName(name.to_string()))
    }
}
