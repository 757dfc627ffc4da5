//! Bearing-range-semantic (BRS) node descriptors and per-image histograms.
//!
//! A region is summarized by three quantized attributes: its semantic
//! category (7 values), the 3x3 image cell holding its centroid (9 values)
//! and an area-based distance proxy (3 values). The triple packs into a
//! single code in `[0, 189)`, which is also the position of the one bit in
//! the node's one-hot feature.

use serde::{Deserialize, Serialize};

use crate::dataset::SemanticLabel;
use crate::error::{Error, Result};
use crate::scene_graph::{Region, SceneGraph};

pub const NUM_SEMANTIC: usize = 7;
pub const NUM_BEARING: usize = 9;
pub const NUM_RANGE: usize = 3;
pub const BRS_DIM: usize = NUM_SEMANTIC * NUM_BEARING * NUM_RANGE;

/// Image size the area thresholds are specified for.
pub const REFERENCE_DIMS: (u32, u32) = (808, 616);
const REFERENCE_PIXELS: u128 = 808 * 616;
const SHORT_ABOVE: u128 = 150_000;
const LONG_BELOW: u128 = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticCategory {
    Sky = 0,
    Tree = 1,
    Building = 2,
    Pole = 3,
    Road = 4,
    TrafficSign = 5,
    Others = 6,
}

impl SemanticCategory {
    pub const ALL: [SemanticCategory; NUM_SEMANTIC] = [
        Self::Sky,
        Self::Tree,
        Self::Building,
        Self::Pole,
        Self::Road,
        Self::TrafficSign,
        Self::Others,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sky => "sky",
            Self::Tree => "tree",
            Self::Building => "building",
            Self::Pole => "pole",
            Self::Road => "road",
            Self::TrafficSign => "traffic_sign",
            Self::Others => "others",
        }
    }
}

pub fn remap_semantic(label: SemanticLabel) -> Result<SemanticCategory> {
    use SemanticCategory::*;
    if !label.is_valid() {
        return Err(Error::UnknownLabel(label.0));
    }
    Ok(match label {
        SemanticLabel::SKY => Sky,
        SemanticLabel::VEGETATION => Tree,
        SemanticLabel::BUILDING => Building,
        SemanticLabel::POLE => Pole,
        SemanticLabel::ROAD | SemanticLabel::SIDEWALK => Road,
        SemanticLabel::TRAFFIC_LIGHT | SemanticLabel::TRAFFIC_SIGN => TrafficSign,
        _ => Others,
    })
}

/// 3x3 row-major cell of the centroid; cell edges belong to the upper cell.
pub fn quantize_bearing(centroid: (f64, f64), image_dims: (u32, u32)) -> Result<u8> {
    let (x, y) = centroid;
    let (w, h) = (image_dims.0 as f64, image_dims.1 as f64);
    if !(x >= 0.0 && x < w && y >= 0.0 && y < h) {
        return Err(Error::CentroidOutOfImage {
            x,
            y,
            width: image_dims.0,
            height: image_dims.1,
        });
    }
    let third = |v: f64, extent: f64| -> u8 {
        if 3.0 * v >= 2.0 * extent {
            2
        } else if 3.0 * v >= extent {
            1
        } else {
            0
        }
    };
    Ok(third(y, h) * 3 + third(x, w))
}

/// 0 = short (> 150k px), 1 = medium (50k..=150k px), 2 = long (< 50k px), at reference size.
pub fn quantize_range(area: u64, image_dims: (u32, u32)) -> u8 {
    // area * REF / (w * h) compared against the thresholds without rounding.
    let scaled = area as u128 * REFERENCE_PIXELS;
    let pixels = image_dims.0 as u128 * image_dims.1 as u128;
    if scaled > SHORT_ABOVE * pixels {
        0
    } else if scaled >= LONG_BELOW * pixels {
        1
    } else {
        2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BrsDescriptor {
    pub semantic: u8,
    pub bearing: u8,
    pub range: u8,
}

impl BrsDescriptor {
    pub fn new(semantic: usize, bearing: usize, range: usize) -> Result<Self> {
        for (name, value, limit) in [
            ("semantic", semantic, NUM_SEMANTIC),
            ("bearing", bearing, NUM_BEARING),
            ("range", range, NUM_RANGE),
        ] {
            if value >= limit {
                return Err(Error::ComponentOutOfRange { name, value });
            }
        }
        Ok(Self {
            semantic: semantic as u8,
            bearing: bearing as u8,
            range: range as u8,
        })
    }

    pub fn index(&self) -> u8 {
        self.semantic * (NUM_BEARING * NUM_RANGE) as u8
            + self.bearing * NUM_RANGE as u8
            + self.range
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index >= BRS_DIM {
            return Err(Error::ComponentOutOfRange {
                name: "index",
                value: index,
            });
        }
        Self::new(
            index / (NUM_BEARING * NUM_RANGE),
            (index / NUM_RANGE) % NUM_BEARING,
            index % NUM_RANGE,
        )
    }

    pub fn of_region(region: &Region, image_dims: (u32, u32)) -> Result<Self> {
        let semantic = remap_semantic(region.label)?;
        let bearing = quantize_bearing(region.centroid, image_dims)?;
        let range = quantize_range(region.area, image_dims);
        Self::new(semantic.index(), bearing as usize, range as usize)
    }
}

pub fn brs_index(semantic: usize, bearing: usize, range: usize) -> Result<u8> {
    BrsDescriptor::new(semantic, bearing, range).map(|d| d.index())
}

pub fn brs_decompose(index: usize) -> Result<(usize, usize, usize)> {
    BrsDescriptor::from_index(index)
        .map(|d| (d.semantic as usize, d.bearing as usize, d.range as usize))
}

/// Which node encoding a graph is built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum FeatureMode {
    #[default]
    #[serde(rename = "one_hot_189")]
    OneHot189,
    #[serde(rename = "three_hot_19")]
    ThreeHot19,
    #[serde(rename = "semantic_only_7")]
    SemanticOnly7,
}

impl FeatureMode {
    pub fn dim(self) -> usize {
        match self {
            FeatureMode::OneHot189 => BRS_DIM,
            FeatureMode::ThreeHot19 => NUM_SEMANTIC + NUM_BEARING + NUM_RANGE,
            FeatureMode::SemanticOnly7 => NUM_SEMANTIC,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::OneHot189 => "one_hot_189",
            FeatureMode::ThreeHot19 => "three_hot_19",
            FeatureMode::SemanticOnly7 => "semantic_only_7",
        }
    }
}

pub fn encode_feature(desc: &BrsDescriptor, mode: FeatureMode) -> Vec<f64> {
    let mut v = vec![0.0; mode.dim()];
    match mode {
        FeatureMode::OneHot189 => v[desc.index() as usize] = 1.0,
        FeatureMode::ThreeHot19 => {
            v[desc.semantic as usize] = 1.0;
            v[NUM_SEMANTIC + desc.bearing as usize] = 1.0;
            v[NUM_SEMANTIC + NUM_BEARING + desc.range as usize] = 1.0;
        }
        FeatureMode::SemanticOnly7 => v[desc.semantic as usize] = 1.0,
    }
    v
}

pub fn node_feature(
    region: &Region,
    image_dims: (u32, u32),
    mode: FeatureMode,
) -> Result<Vec<f64>> {
    Ok(encode_feature(
        &BrsDescriptor::of_region(region, image_dims)?,
        mode,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageHistogram {
    pub bins: Vec<u32>,
}

impl Default for ImageHistogram {
    fn default() -> Self {
        Self {
            bins: vec![0; BRS_DIM],
        }
    }
}

impl ImageHistogram {
    pub fn from_indices(indices: impl IntoIterator<Item = u8>) -> Self {
        let mut h = Self::default();
        for i in indices {
            h.bins[i as usize] += 1;
        }
        h
    }

    pub fn total(&self) -> u32 {
        self.bins.iter().sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.bins.iter().map(|&b| b as f64).collect()
    }
}

/// Sums node one-hots. The flag is set when the graph had no descriptors to sum.
pub fn image_histogram(graph: &SceneGraph) -> (ImageHistogram, bool) {
    let h =
        ImageHistogram::from_indices(graph.nodes.iter().filter_map(|n| n.brs.map(|d| d.index())));
    let empty = h.total() == 0;
    if empty {
        log::warn!("image histogram of an empty scene graph");
    }
    (h, empty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_graph::Node;

    const REF: (u32, u32) = REFERENCE_DIMS;

    #[test]
    fn remap_table() {
        let name = |n: &str| remap_semantic(SemanticLabel::from_name(n).unwrap()).unwrap();
        assert_eq!(name("vegetation"), SemanticCategory::Tree);
        assert_eq!(name("sidewalk"), SemanticCategory::Road);
        assert_eq!(name("bicycle"), SemanticCategory::Others);
        assert_eq!(name("traffic-light"), SemanticCategory::TrafficSign);
        let others = SemanticLabel::all()
            .filter(|&l| remap_semantic(l).unwrap() == SemanticCategory::Others)
            .count();
        assert_eq!(others, 11);
        // Surjective onto the seven categories.
        let mut seen: Vec<_> = SemanticLabel::all()
            .map(|l| remap_semantic(l).unwrap())
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen, SemanticCategory::ALL.to_vec());
        assert!(remap_semantic(SemanticLabel::VOID).is_err());
        assert!(remap_semantic(SemanticLabel(42)).is_err());
    }

    #[test]
    fn bearing_cells() {
        assert_eq!(quantize_bearing((404.0, 308.0), REF).unwrap(), 4);
        assert_eq!(quantize_bearing((0.0, 0.0), REF).unwrap(), 0);
        assert_eq!(quantize_bearing((807.0, 615.0), REF).unwrap(), 8);
        // 9 wide: thirds at x = 3 and x = 6.
        assert_eq!(quantize_bearing((3.0, 0.0), (9, 9)).unwrap(), 1);
        assert_eq!(quantize_bearing((2.999, 0.0), (9, 9)).unwrap(), 0);
        assert_eq!(quantize_bearing((6.0, 6.0), (9, 9)).unwrap(), 8);
        assert!(quantize_bearing((9.0, 0.0), (9, 9)).is_err());
        assert!(quantize_bearing((-0.5, 0.0), (9, 9)).is_err());
    }

    #[test]
    fn range_boundaries() {
        assert_eq!(quantize_range(150_001, REF), 0);
        assert_eq!(quantize_range(150_000, REF), 1);
        assert_eq!(quantize_range(50_000, REF), 1);
        assert_eq!(quantize_range(49_999, REF), 2);
        assert_eq!(quantize_range(1, REF), 2);
    }

    #[test]
    fn range_scales_with_image() {
        let doubled = (REF.0 * 2, REF.1 * 2);
        for area in [1u64, 49_999, 50_000, 100_000, 150_000, 150_001, 400_000] {
            assert_eq!(quantize_range(area * 4, doubled), quantize_range(area, REF));
        }
    }

    #[test]
    fn index_bijection() {
        assert_eq!(brs_index(0, 0, 0).unwrap(), 0);
        assert_eq!(brs_index(6, 8, 2).unwrap(), 188);
        let mut seen = [false; BRS_DIM];
        for s in 0..NUM_SEMANTIC {
            for b in 0..NUM_BEARING {
                for r in 0..NUM_RANGE {
                    let i = brs_index(s, b, r).unwrap() as usize;
                    assert!(!seen[i]);
                    seen[i] = true;
                    assert_eq!(brs_decompose(i).unwrap(), (s, b, r));
                }
            }
        }
        assert!(brs_index(7, 0, 0).is_err());
        assert!(brs_index(0, 9, 0).is_err());
        assert!(brs_index(0, 0, 3).is_err());
        assert!(brs_decompose(189).is_err());
    }

    #[test]
    fn feature_norms() {
        let d = BrsDescriptor::new(3, 5, 1).unwrap();
        let l1 = |v: Vec<f64>| v.iter().map(|x| x.abs()).sum::<f64>();
        assert_eq!(l1(encode_feature(&d, FeatureMode::OneHot189)), 1.0);
        assert_eq!(l1(encode_feature(&d, FeatureMode::ThreeHot19)), 3.0);
        assert_eq!(l1(encode_feature(&d, FeatureMode::SemanticOnly7)), 1.0);
        assert_eq!(
            encode_feature(&d, FeatureMode::OneHot189)[d.index() as usize],
            1.0
        );
    }

    fn graph_of(indices: &[u8]) -> SceneGraph {
        SceneGraph {
            nodes: indices
                .iter()
                .map(|&i| Node {
                    region: None,
                    brs: Some(BrsDescriptor::from_index(i as usize).unwrap()),
                    feature: vec![],
                })
                .collect(),
            edges: vec![],
            image_dims: REF,
        }
    }

    #[test]
    fn histogram_counts() {
        let (h, empty) = image_histogram(&graph_of(&[17, 17]));
        assert!(!empty);
        assert_eq!(h.bins[17], 2);
        assert_eq!(h.total(), 2);
        let (a, _) = image_histogram(&graph_of(&[1, 5, 188, 5]));
        let (b, _) = image_histogram(&graph_of(&[5, 188, 1, 5]));
        assert_eq!(a, b);
        let (z, empty) = image_histogram(&graph_of(&[]));
        assert!(empty);
        assert_eq!(z.total(), 0);
    }
}
