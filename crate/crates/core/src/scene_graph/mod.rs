//! Semantic scene graphs: region nodes joined by 4-adjacency edges.

mod merge;
mod regions;

pub use merge::{merge_small_regions, MergeStrategy};
pub use regions::{extract_regions, PixelBox, Region, RegionMap, VOID_REGION};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::LabelMap;
use crate::descriptor::{encode_feature, BrsDescriptor, FeatureMode, REFERENCE_DIMS};
use crate::error::{Error, Result};

/// Unordered region pairs `(i, j)`, `i < j`, that touch across a 4-neighborhood.
pub fn build_adjacency(map: &RegionMap) -> Vec<(u32, u32)> {
    let (w, h) = (map.width as usize, map.height as usize);
    let mut edges = BTreeSet::new();
    let mut add = |a: u32, b: u32| {
        if a != b && a != VOID_REGION && b != VOID_REGION {
            edges.insert((a.min(b), a.max(b)));
        }
    };
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                add(map.index[p], map.index[p + 1]);
            }
            if y + 1 < h {
                add(map.index[p], map.index[p + w]);
            }
        }
    }
    edges.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Source region; `None` for frame nodes of a sequence-chain graph.
    pub region: Option<Region>,
    pub brs: Option<BrsDescriptor>,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub nodes: Vec<Node>,
    /// Sorted `(i, j)` node-index pairs with `i < j`.
    pub edges: Vec<(usize, usize)>,
    pub image_dims: (u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneGraphParams {
    /// Minimum component size in pixels at the 808x616 reference size.
    pub noise_area: u64,
    /// Minimum region size after merging, at the reference size.
    pub min_area: u64,
    pub merging: bool,
    pub merge_strategy: MergeStrategy,
    pub mode: FeatureMode,
}

impl Default for SceneGraphParams {
    fn default() -> Self {
        Self {
            noise_area: 100,
            min_area: 1000,
            merging: true,
            merge_strategy: MergeStrategy::Absorb,
            mode: FeatureMode::OneHot189,
        }
    }
}

/// Rescales a pixel count given at the reference size to `dims`, rounding up.
pub fn scale_area(area: u64, dims: (u32, u32)) -> u64 {
    let reference = REFERENCE_DIMS.0 as u128 * REFERENCE_DIMS.1 as u128;
    let pixels = dims.0 as u128 * dims.1 as u128;
    ((area as u128 * pixels).div_ceil(reference)) as u64
}

impl SceneGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.nodes.first().map(|n| n.feature.len())
    }

    /// Neighbor lists, not including self.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// Recomputes node features from the stored descriptors.
    pub fn with_mode(&self, mode: FeatureMode) -> SceneGraph {
        let mut g = self.clone();
        for node in &mut g.nodes {
            if let Some(d) = &node.brs {
                node.feature = encode_feature(d, mode);
            }
        }
        g
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> SceneGraph {
        assert_eq!(perm.len(), self.nodes.len());
        let mut nodes: Vec<Option<Node>> = vec![None; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            nodes[perm[i]] = Some(node.clone());
        }
        let mut edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(i, j)| (perm[i].min(perm[j]), perm[i].max(perm[j])))
            .collect();
        edges.sort_unstable();
        SceneGraph {
            nodes: nodes
                .into_iter()
                .map(|n| n.expect("perm is a permutation"))
                .collect(),
            edges,
            image_dims: self.image_dims,
        }
    }

    pub fn dump(&self) -> GraphDump {
        GraphDump {
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(id, n)| NodeDump {
                    id,
                    label: n.region.as_ref().map(|r| r.label.0),
                    area: n.region.as_ref().map(|r| r.area),
                    centroid: n.region.as_ref().map(|r| r.centroid),
                    brs_index: n.brs.map(|d| d.index()),
                })
                .collect(),
            edges: self.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDump {
    pub id: usize,
    pub label: Option<u8>,
    pub area: Option<u64>,
    pub centroid: Option<(f64, f64)>,
    pub brs_index: Option<u8>,
}

/// Debug/accounting form of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub nodes: Vec<NodeDump>,
    pub edges: Vec<[usize; 2]>,
}

/// Extraction, optional merging, adjacency and descriptors in one pass.
pub fn build_scene_graph(map: &LabelMap, params: &SceneGraphParams) -> Result<SceneGraph> {
    let dims = map.dims();
    let mut regions = extract_regions(map, scale_area(params.noise_area, dims));
    if params.merging {
        regions = merge_small_regions(&regions, params.min_area, params.merge_strategy);
    }
    graph_from_regions(&regions, params.mode)
}

pub fn graph_from_regions(regions: &RegionMap, mode: FeatureMode) -> Result<SceneGraph> {
    if regions.regions.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let dims = regions.dims();
    let nodes = regions
        .regions
        .iter()
        .map(|r| {
            let brs = BrsDescriptor::of_region(r, dims)?;
            Ok(Node {
                region: Some(r.clone()),
                feature: encode_feature(&brs, mode),
                brs: Some(brs),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let edges = build_adjacency(regions)
        .into_iter()
        .map(|(a, b)| (a as usize, b as usize))
        .collect();
    Ok(SceneGraph {
        nodes,
        edges,
        image_dims: dims,
    })
}

/// Path graph with one node per frame in order, each carrying that frame's feature.
pub fn build_sequence_chain_graph(frame_features: &[Vec<f64>]) -> Result<SceneGraph> {
    if frame_features.is_empty() {
        return Err(Error::EmptySequence);
    }
    let dim = frame_features[0].len();
    if let Some(bad) = frame_features.iter().find(|f| f.len() != dim) {
        return Err(Error::FeatureDimMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    Ok(SceneGraph {
        nodes: frame_features
            .iter()
            .map(|f| Node {
                region: None,
                brs: None,
                feature: f.clone(),
            })
            .collect(),
        edges: (1..frame_features.len()).map(|i| (i - 1, i)).collect(),
        image_dims: (0, 0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SemanticLabel;

    fn map(w: u32, h: u32, f: impl Fn(u32, u32) -> u8) -> LabelMap {
        let mut labels = Vec::new();
        for y in 0..h {
            for x in 0..w {
                labels.push(f(x, y));
            }
        }
        LabelMap::new(w, h, labels).unwrap()
    }

    #[test]
    fn uniform_map_is_one_region() {
        let r = extract_regions(&map(10, 10, |_, _| 3), 1);
        assert_eq!(r.regions.len(), 1);
        assert_eq!(r.regions[0].area, 100);
        assert_eq!(r.regions[0].centroid, (4.5, 4.5));
    }

    #[test]
    fn diagonal_pixels_are_separate() {
        let r = extract_regions(
            &map(3, 3, |x, y| {
                if (x, y) == (0, 0) || (x, y) == (1, 1) {
                    2
                } else {
                    0
                }
            }),
            1,
        );
        let buildings = r
            .regions
            .iter()
            .filter(|g| g.label == SemanticLabel::BUILDING)
            .count();
        assert_eq!(buildings, 2);
    }

    #[test]
    fn noise_regions_become_void() {
        let m = map(10, 10, |x, y| if x == 5 && y == 5 { 2 } else { 0 });
        let r = extract_regions(&m, 2);
        assert_eq!(r.regions.len(), 1);
        assert_eq!(r.index[55], VOID_REGION);
        assert_eq!(r.assigned_pixels(), 99);
    }

    #[test]
    fn ids_in_raster_order() {
        let m = map(6, 4, |x, _| (x / 2) as u8);
        let r = extract_regions(&m, 1);
        let labels: Vec<u8> = r.regions.iter().map(|g| g.label.0).collect();
        assert_eq!(labels, vec![0, 1, 2]);
        assert_eq!(
            r.regions[2].bbox,
            PixelBox {
                min_x: 4,
                min_y: 0,
                max_x: 5,
                max_y: 3
            }
        );
    }

    #[test]
    fn half_planes_one_edge() {
        let r = extract_regions(&map(10, 10, |x, _| if x < 5 { 10 } else { 0 }), 1);
        assert_eq!(build_adjacency(&r), vec![(0, 1)]);
    }

    #[test]
    fn concentric_rings() {
        let m = map(9, 9, |x, y| {
            let d = (x as i32 - 4).abs().max((y as i32 - 4).abs());
            match d {
                0..=1 => 2,
                2..=3 => 8,
                _ => 10,
            }
        });
        let r = extract_regions(&m, 1);
        assert_eq!(r.regions.len(), 3);
        // raster order: outer ring (0), middle (1), core (2)
        assert_eq!(build_adjacency(&r), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn merge_noop_when_all_large() {
        let r = extract_regions(&map(808, 616, |x, _| if x < 404 { 10 } else { 0 }), 100);
        assert_eq!(merge_small_regions(&r, 1000, MergeStrategy::Absorb), r);
    }

    #[test]
    fn single_neighbor_absorbs() {
        // 20 x 25 = 500 px block of building inside road, reference-size image.
        let m = map(808, 616, |x, y| {
            if (100..120).contains(&x) && (100..125).contains(&y) {
                2
            } else {
                0
            }
        });
        let r = extract_regions(&m, 100);
        assert_eq!(r.regions.len(), 2);
        let merged = merge_small_regions(&r, 1000, MergeStrategy::Absorb);
        assert_eq!(merged.regions.len(), 1);
        assert_eq!(merged.regions[0].label, SemanticLabel::ROAD);
        assert_eq!(merged.assigned_pixels(), r.assigned_pixels());
        assert_eq!(merged.regions[0].area, 808 * 616);

        let deleted = merge_small_regions(&r, 1000, MergeStrategy::Delete);
        assert_eq!(deleted.regions.len(), 1);
        assert_eq!(deleted.assigned_pixels(), 808 * 616 - 500);
    }

    #[test]
    fn absorbs_into_longest_boundary() {
        // Small block straddling sky/road, mostly touching road.
        let m = map(808, 616, |x, y| {
            if (400..420).contains(&x) && (295..320).contains(&y) {
                2
            } else if y < 300 {
                10
            } else {
                0
            }
        });
        let merged = merge_small_regions(&extract_regions(&m, 100), 1000, MergeStrategy::Absorb);
        assert_eq!(merged.regions.len(), 2);
        let road = merged
            .regions
            .iter()
            .find(|r| r.label == SemanticLabel::ROAD)
            .unwrap();
        assert_eq!(road.area, 808 * 316 + 20 * 5);
    }

    #[test]
    fn isolated_small_region_deleted() {
        // 10x10 map: everything small at reference scale; a lone region has no neighbor.
        let r = extract_regions(&map(10, 10, |_, _| 0), 1);
        let merged = merge_small_regions(&r, 1_000_000, MergeStrategy::Absorb);
        assert!(merged.regions.is_empty());
    }

    #[test]
    fn min_area_scales_with_image() {
        // At quarter size (404 x 308) the threshold becomes 250 px.
        let m = map(404, 308, |x, y| if x < 12 && y < 20 { 2 } else { 0 });
        let r = extract_regions(&m, 1);
        assert_eq!(
            merge_small_regions(&r, 1000, MergeStrategy::Absorb)
                .regions
                .len(),
            1
        );
        let m = map(404, 308, |x, y| if x < 13 && y < 20 { 2 } else { 0 });
        let r = extract_regions(&m, 1);
        assert_eq!(
            merge_small_regions(&r, 1000, MergeStrategy::Absorb)
                .regions
                .len(),
            2
        );
    }

    #[test]
    fn minimal_scene_two_nodes() {
        let g = build_scene_graph(
            &map(808, 616, |_, y| if y < 277 { 10 } else { 0 }),
            &SceneGraphParams::default(),
        )
        .unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.edges, vec![(0, 1)]);
        assert_eq!(g.feature_dim(), Some(189));
    }

    #[test]
    fn empty_graph_error() {
        let m = LabelMap::new(4, 4, vec![255; 16]).unwrap();
        assert!(matches!(
            build_scene_graph(&m, &SceneGraphParams::default()),
            Err(Error::EmptyGraph)
        ));
    }

    #[test]
    fn chain_graph_is_a_path() {
        let one = build_sequence_chain_graph(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!((one.num_nodes(), one.edges.len()), (1, 0));
        let five = build_sequence_chain_graph(&vec![vec![0.0; 3]; 5]).unwrap();
        assert_eq!(five.edges, vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
        assert!(build_sequence_chain_graph(&[]).is_err());
        assert!(build_sequence_chain_graph(&[vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn permutation_round_trip() {
        let g = build_scene_graph(
            &map(808, 616, |x, y| {
                if y < 277 {
                    10
                } else if x < 300 {
                    0
                } else {
                    2
                }
            }),
            &SceneGraphParams::default(),
        )
        .unwrap();
        let perm = vec![2, 0, 1];
        let p = g.permuted(&perm);
        let mut inv = vec![0; 3];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        assert_eq!(p.permuted(&inv), g);
        assert_eq!(p.nodes[2], g.nodes[0]);
    }

    #[test]
    fn dump_serializes() {
        let g = build_scene_graph(
            &map(808, 616, |_, y| if y < 277 { 10 } else { 0 }),
            &SceneGraphParams::default(),
        )
        .unwrap();
        let json = serde_json::to_value(g.dump()).unwrap();
        assert_eq!(json["edges"], serde_json::json!([[0, 1]]));
        assert_eq!(json["nodes"][0]["label"], 10);
    }
}
