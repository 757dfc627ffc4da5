//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use semgraph::dataset::{LabelMap, SemanticLabel};
use semgraph::gcn::{gcn_loss, gcn_loss_and_grad, GcnParams};
use semgraph::scene_graph::{Node, SceneGraph};

/// Random label map made of a few overlapping rectangles over a random
/// background, with sprinkled single pixels (including void) so that noise
/// removal and odd shapes are exercised.
pub fn random_label_map(rng: &mut impl Rng, w: u32, h: u32, palette: &[u8]) -> LabelMap {
    let (wu, hu) = (w as usize, h as usize);
    let mut labels = vec![palette[rng.gen_range(0..palette.len())]; wu * hu];
    for _ in 0..rng.gen_range(2..9) {
        let (x0, y0) = (rng.gen_range(0..wu), rng.gen_range(0..hu));
        let (x1, y1) = (rng.gen_range(x0..wu) + 1, rng.gen_range(y0..hu) + 1);
        let l = palette[rng.gen_range(0..palette.len())];
        for y in y0..y1 {
            for x in x0..x1 {
                labels[y * wu + x] = l;
            }
        }
    }
    for _ in 0..rng.gen_range(0..30) {
        let p = rng.gen_range(0..wu * hu);
        labels[p] = if rng.gen_bool(0.2) {
            SemanticLabel::VOID.0
        } else {
            palette[rng.gen_range(0..palette.len())]
        };
    }
    LabelMap::new(w, h, labels).unwrap()
}

/// Union-find over 4-neighbor pixel pairs with equal, non-void labels.
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// One reference component: label, pixel list in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRegion {
    pub label: u8,
    pub pixels: Vec<usize>,
}

impl OracleRegion {
    pub fn centroid(&self, w: usize) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let sx: usize = self.pixels.iter().map(|p| p % w).sum();
        let sy: usize = self.pixels.iter().map(|p| p / w).sum();
        (sx as f64 / n, sy as f64 / n)
    }

    pub fn bbox(&self, w: usize) -> (u32, u32, u32, u32) {
        let xs = self.pixels.iter().map(|p| (p % w) as u32);
        let ys = self.pixels.iter().map(|p| (p / w) as u32);
        (
            xs.clone().min().unwrap(),
            ys.clone().min().unwrap(),
            xs.max().unwrap(),
            ys.max().unwrap(),
        )
    }
}

/// Connected components via union-find, kept if at least `noise` pixels,
/// ordered by first pixel. Returns the regions and a per-pixel index
/// (`None` for void or dropped pixels).
pub fn oracle_regions(map: &LabelMap, noise: u64) -> (Vec<OracleRegion>, Vec<Option<usize>>) {
    let (w, h) = (map.width() as usize, map.height() as usize);
    let labels = map.labels();
    let mut uf = UnionFind::new(w * h);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if labels[p] == SemanticLabel::VOID.0 {
                continue;
            }
            if x + 1 < w && labels[p + 1] == labels[p] {
                uf.union(p, p + 1);
            }
            if y + 1 < h && labels[p + w] == labels[p] {
                uf.union(p, p + w);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for p in 0..w * h {
        if labels[p] != SemanticLabel::VOID.0 {
            groups.entry(uf.find(p)).or_default().push(p);
        }
    }
    let mut regions: Vec<OracleRegion> = groups
        .into_values()
        .filter(|px| px.len() as u64 >= noise)
        .map(|pixels| OracleRegion {
            label: labels[pixels[0]],
            pixels,
        })
        .collect();
    regions.sort_by_key(|r| r.pixels[0]);
    let mut index = vec![None; w * h];
    for (i, r) in regions.iter().enumerate() {
        for &p in &r.pixels {
            index[p] = Some(i);
        }
    }
    (regions, index)
}

/// Region pairs with at least one 4-adjacent pixel pair, by brute force over
/// every pair of pixels.
pub fn oracle_adjacency(index: &[Option<usize>], w: usize) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for p in 0..index.len() {
        for q in p + 1..index.len() {
            let (px, py, qx, qy) = (p % w, p / w, q % w, q / w);
            let touching = px.abs_diff(qx) + py.abs_diff(qy) == 1;
            if let (true, Some(a), Some(b)) = (touching, index[p], index[q]) {
                if a != b {
                    out.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    out
}

/// Graph with dense Gaussian-ish node features and random edges.
pub fn random_graph(rng: &mut impl Rng, nodes: usize, dim: usize, edge_p: f64) -> SceneGraph {
    let nodes_v = (0..nodes)
        .map(|_| Node {
            region: None,
            brs: None,
            feature: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..nodes {
        for j in i + 1..nodes {
            if rng.gen_bool(edge_p) {
                edges.push((i, j));
            }
        }
    }
    SceneGraph {
        nodes: nodes_v,
        edges,
        image_dims: (0, 0),
    }
}

/// Largest relative discrepancy between the analytic gradient and central
/// differences of the loss, over every parameter. Entries where both are
/// below `floor` in magnitude are compared absolutely against `floor`.
pub fn gradient_check(
    batch: &[(&SceneGraph, usize)],
    params: &GcnParams,
    eps: f64,
    floor: f64,
) -> f64 {
    let (_, grad) = gcn_loss_and_grad(batch, params).unwrap();
    let analytic: Vec<f64> = grad.values().copied().collect();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = params.clone();
        *plus.values_mut().nth(i).unwrap() += eps;
        let mut minus = params.clone();
        *minus.values_mut().nth(i).unwrap() -= eps;
        let numeric =
            (gcn_loss(batch, &plus).unwrap() - gcn_loss(batch, &minus).unwrap()) / (2.0 * eps);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}

/// Optimal action per state of a finite deterministic MDP by value iteration.
/// `next[s][a]` and `reward[s][a]` define the transitions.
pub fn value_iteration(
    next: &[Vec<usize>],
    reward: &[Vec<f64>],
    gamma: f64,
) -> (Vec<f64>, Vec<usize>) {
    let n = next.len();
    let mut v = vec![0.0; n];
    for _ in 0..10_000 {
        let nv: Vec<f64> = (0..n)
            .map(|s| {
                (0..next[s].len())
                    .map(|a| reward[s][a] + gamma * v[next[s][a]])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let delta = nv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = nv;
        if delta < 1e-12 {
            break;
        }
    }
    let policy = (0..n)
        .map(|s| {
            let q: Vec<f64> = (0..next[s].len())
                .map(|a| reward[s][a] + gamma * v[next[s][a]])
                .collect();
            let mut best = 0;
            for a in 1..q.len() {
                if q[a] > q[best] + 1e-12 {
                    best = a;
                }
            }
            best
        })
        .collect();
    (v, policy)
}

/// Pearson chi-square statistic of observed counts against a uniform expectation.
pub fn chi_square_uniform(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}
