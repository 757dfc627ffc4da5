use serde::{Deserialize, Serialize};

use crate::dataset::{LabelMap, SemanticLabel};

/// Pixel-index value for pixels that belong to no region.
pub const VOID_REGION: u32 = u32::MAX;

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: u32,
    pub label: SemanticLabel,
    pub area: u64,
    /// Mean pixel column and row.
    pub centroid: (f64, f64),
    pub bbox: PixelBox,
}

/// Regions plus the pixel-to-region index they were extracted from.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    pub width: u32,
    pub height: u32,
    /// Row-major region id per pixel, [`VOID_REGION`] for unassigned pixels.
    pub index: Vec<u32>,
    pub regions: Vec<Region>,
}

impl RegionMap {
    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn assigned_pixels(&self) -> u64 {
        self.index.iter().filter(|&&r| r != VOID_REGION).count() as u64
    }

    /// Rebuilds ids (raster order of first pixel) and statistics from a raw index
    /// whose values are arbitrary group keys, with `label_of(key)` for each group.
    pub(crate) fn from_raw_index(
        width: u32,
        height: u32,
        raw: &[u32],
        label_of: impl Fn(u32) -> SemanticLabel,
    ) -> RegionMap {
        let w = width as usize;
        let keys = raw
            .iter()
            .filter(|&&k| k != VOID_REGION)
            .max()
            .map_or(0, |&k| k as usize + 1);
        let mut remap = vec![VOID_REGION; keys];
        let mut index = vec![VOID_REGION; raw.len()];
        let mut regions: Vec<Region> = Vec::new();
        let mut sums: Vec<(f64, f64)> = Vec::new();
        for (y, row) in raw.chunks(w.max(1)).enumerate() {
            for (x, &key) in row.iter().enumerate() {
                if key == VOID_REGION {
                    continue;
                }
                let (p, x, y) = (y * w + x, x as u32, y as u32);
                let mut id = remap[key as usize];
                if id == VOID_REGION {
                    id = regions.len() as u32;
                    remap[key as usize] = id;
                    regions.push(Region {
                        id: regions.len() as u32,
                        label: label_of(key),
                        area: 0,
                        centroid: (0.0, 0.0),
                        bbox: PixelBox {
                            min_x: x,
                            min_y: y,
                            max_x: x,
                            max_y: y,
                        },
                    });
                    sums.push((0.0, 0.0));
                }
                index[p] = id;
                let r = &mut regions[id as usize];
                r.area += 1;
                r.bbox.min_x = r.bbox.min_x.min(x);
                r.bbox.min_y = r.bbox.min_y.min(y);
                r.bbox.max_x = r.bbox.max_x.max(x);
                r.bbox.max_y = r.bbox.max_y.max(y);
                let s = &mut sums[id as usize];
                s.0 += x as f64;
                s.1 += y as f64;
            }
        }
        for (r, s) in regions.iter_mut().zip(&sums) {
            r.centroid = (s.0 / r.area as f64, s.1 / r.area as f64);
        }
        RegionMap {
            width,
            height,
            index,
            regions,
        }
    }
}

/// Maximal 4-connected same-label components by flood fill. Components smaller
/// than `noise_area` pixels are dropped and their pixels become void.
pub fn extract_regions(map: &LabelMap, noise_area: u64) -> RegionMap {
    let (width, height) = map.dims();
    let (w, h) = (width as usize, height as usize);
    let labels = map.labels();
    let mut raw = vec![VOID_REGION; w * h];
    // Components in raster order of their first pixel, with running pixel sums.
    let mut components: Vec<(Region, (f64, f64))> = Vec::new();
    let mut stack: Vec<(usize, usize)> = Vec::new();

    for start in 0..w * h {
        if raw[start] != VOID_REGION || SemanticLabel(labels[start]).is_void() {
            continue;
        }
        let id = components.len() as u32;
        let label = labels[start];
        let (sx, sy) = (start % w, start / w);
        let mut bbox = PixelBox {
            min_x: sx as u32,
            min_y: sy as u32,
            max_x: sx as u32,
            max_y: sy as u32,
        };
        let (mut area, mut sum_x, mut sum_y) = (0u64, 0u64, 0u64);
        let free = |raw: &[u32], q: usize| raw[q] == VOID_REGION && labels[q] == label;
        stack.push((sx, sy));
        while let Some((x, y)) = stack.pop() {
            let row = y * w;
            if raw[row + x] != VOID_REGION {
                continue;
            }
            let (mut l, mut r) = (x, x);
            while l > 0 && free(&raw, row + l - 1) {
                l -= 1;
            }
            while r + 1 < w && free(&raw, row + r + 1) {
                r += 1;
            }
            raw[row + l..=row + r].fill(id);
            let len = (r - l + 1) as u64;
            area += len;
            sum_x += (l as u64 + r as u64) * len / 2;
            sum_y += y as u64 * len;
            bbox.min_x = bbox.min_x.min(l as u32);
            bbox.max_x = bbox.max_x.max(r as u32);
            bbox.min_y = bbox.min_y.min(y as u32);
            bbox.max_y = bbox.max_y.max(y as u32);
            let mut seed_row = |ny: usize| {
                let mut inside = false;
                for nx in l..=r {
                    let open = free(&raw, ny * w + nx);
                    if open && !inside {
                        stack.push((nx, ny));
                    }
                    inside = open;
                }
            };
            if y > 0 {
                seed_row(y - 1);
            }
            if y + 1 < h {
                seed_row(y + 1);
            }
        }
        components.push((
            Region {
                id,
                label: SemanticLabel(label),
                area,
                centroid: (0.0, 0.0),
                bbox,
            },
            (sum_x as f64, sum_y as f64),
        ));
    }

    let mut new_id = vec![VOID_REGION; components.len()];
    let mut regions = Vec::new();
    for (old, (mut r, (sx, sy))) in components.into_iter().enumerate() {
        if r.area < noise_area {
            continue;
        }
        r.id = regions.len() as u32;
        r.centroid = (sx / r.area as f64, sy / r.area as f64);
        new_id[old] = r.id;
        regions.push(r);
    }
    for v in raw.iter_mut() {
        if *v != VOID_REGION {
            *v = new_id[*v as usize];
        }
    }
    RegionMap {
        width,
        height,
        index: raw,
        regions,
    }
}
