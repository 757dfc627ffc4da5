use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::regions::{RegionMap, VOID_REGION};
use crate::descriptor::REFERENCE_DIMS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeStrategy {
    /// Small regions are absorbed into the neighbor they share the longest boundary with.
    #[default]
    Absorb,
    /// Small regions are dropped to void.
    Delete,
}

/// True when `area` is below `min_area` rescaled from the reference image size to `dims`.
pub(crate) fn below_scaled(area: u64, min_area: u64, dims: (u32, u32)) -> bool {
    let reference = REFERENCE_DIMS.0 as u128 * REFERENCE_DIMS.1 as u128;
    let pixels = dims.0 as u128 * dims.1 as u128;
    (area as u128) * reference < (min_area as u128) * pixels
}

/// Shared boundary length (4-adjacent pixel pairs) between every pair of regions.
pub(crate) fn boundary_lengths(map: &RegionMap) -> Vec<BTreeMap<u32, u64>> {
    let (w, h) = (map.width as usize, map.height as usize);
    let mut neighbors = vec![BTreeMap::new(); map.regions.len()];
    let mut bump = |a: u32, b: u32| {
        if a != b && a != VOID_REGION && b != VOID_REGION {
            *neighbors[a as usize].entry(b).or_insert(0) += 1;
            *neighbors[b as usize].entry(a).or_insert(0) += 1;
        }
    };
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                bump(map.index[p], map.index[p + 1]);
            }
            if y + 1 < h {
                bump(map.index[p], map.index[p + w]);
            }
        }
    }
    neighbors
}

fn find(parent: &mut [u32], mut r: u32) -> u32 {
    let mut root = r;
    while root != VOID_REGION && parent[root as usize] != root {
        root = parent[root as usize];
    }
    while r != VOID_REGION && parent[r as usize] != r {
        let next = parent[r as usize];
        parent[r as usize] = root;
        r = next;
    }
    root
}

/// Removes regions smaller than `min_area` (given at the 808x616 reference size
/// and rescaled to the map's own size).
///
/// With [`MergeStrategy::Absorb`] the smallest offending region (lowest id on ties)
/// is repeatedly folded into its longest-boundary neighbor (lowest id on ties);
/// a region without neighbors is deleted. Ids are renumbered in raster order afterwards.
pub fn merge_small_regions(map: &RegionMap, min_area: u64, strategy: MergeStrategy) -> RegionMap {
    let dims = map.dims();
    let n = map.regions.len();
    let mut parent: Vec<u32> = (0..n as u32).collect();

    match strategy {
        MergeStrategy::Delete => {
            for r in &map.regions {
                if below_scaled(r.area, min_area, dims) {
                    parent[r.id as usize] = VOID_REGION;
                }
            }
        }
        MergeStrategy::Absorb => {
            let mut neighbors = boundary_lengths(map);
            let mut area: Vec<u64> = map.regions.iter().map(|r| r.area).collect();
            let mut small: BTreeSet<(u64, u32)> = map
                .regions
                .iter()
                .filter(|r| below_scaled(r.area, min_area, dims))
                .map(|r| (r.area, r.id))
                .collect();
            while let Some((a_area, a)) = small.pop_first() {
                let own = std::mem::take(&mut neighbors[a as usize]);
                let best = own
                    .iter()
                    .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0)))
                    .map(|(&b, _)| b);
                let Some(b) = best else {
                    parent[a as usize] = VOID_REGION;
                    continue;
                };
                for (&other, &len) in &own {
                    neighbors[other as usize].remove(&a);
                    if other != b {
                        *neighbors[other as usize].entry(b).or_insert(0) += len;
                        *neighbors[b as usize].entry(other).or_insert(0) += len;
                    }
                }
                parent[a as usize] = b;
                let old = area[b as usize];
                area[b as usize] += a_area;
                if small.remove(&(old, b)) && below_scaled(area[b as usize], min_area, dims) {
                    small.insert((area[b as usize], b));
                }
            }
        }
    }

    if parent.iter().enumerate().all(|(i, &p)| p == i as u32) {
        return map.clone();
    }
    let roots: Vec<u32> = (0..n as u32).map(|r| find(&mut parent, r)).collect();
    let raw: Vec<u32> = map
        .index
        .iter()
        .map(|&r| {
            if r == VOID_REGION {
                VOID_REGION
            } else {
                roots[r as usize]
            }
        })
        .collect();
    RegionMap::from_raw_index(map.width, map.height, &raw, |root| {
        map.regions[root as usize].label
    })
}
