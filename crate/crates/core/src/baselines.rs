//! Non-parametric comparison classifiers over BRS features: kNN on image
//! histograms and naive-Bayes nearest neighbor (NBNN) on node descriptor sets.

use serde::{Deserialize, Serialize};

use crate::dataset::ClassId;
use crate::descriptor::{image_histogram, ImageHistogram, BRS_DIM};
use crate::error::{Error, Result};
use crate::scene_graph::SceneGraph;

/// Distance between two distinct one-hot vectors.
pub const ONE_HOT_DISTANCE: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainIndex {
    pub num_classes: usize,
    pub histograms: Vec<(ImageHistogram, ClassId)>,
    /// Per class, how often each descriptor code occurs in its training frames.
    pub per_class_features: Vec<Vec<u32>>,
    /// Compare L1-normalized histograms instead of raw counts.
    pub normalize: bool,
}

impl TrainIndex {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            histograms: Vec::new(),
            per_class_features: vec![vec![0; BRS_DIM]; num_classes],
            normalize: false,
        }
    }

    pub fn from_graphs<'a>(
        num_classes: usize,
        frames: impl IntoIterator<Item = (&'a SceneGraph, ClassId)>,
    ) -> Result<Self> {
        let mut index = Self::new(num_classes);
        for (graph, class) in frames {
            index.insert(image_histogram(graph).0, class)?;
        }
        Ok(index)
    }

    pub fn insert(&mut self, histogram: ImageHistogram, class: ClassId) -> Result<()> {
        if class >= self.num_classes {
            return Err(Error::InvalidConfig(format!("class {class} out of range")));
        }
        for (acc, &b) in self.per_class_features[class]
            .iter_mut()
            .zip(&histogram.bins)
        {
            *acc += b;
        }
        self.histograms.push((histogram, class));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.histograms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histograms.is_empty()
    }

    fn vector(&self, h: &ImageHistogram) -> Vec<f64> {
        let v = h.as_f64();
        if !self.normalize {
            return v;
        }
        let total: f64 = v.iter().sum();
        if total == 0.0 {
            v
        } else {
            v.into_iter().map(|x| x / total).collect()
        }
    }

    /// L2 distance from the query to every training histogram, in insertion order.
    pub fn distances(&self, query: &ImageHistogram) -> Vec<f64> {
        let q = self.vector(query);
        self.histograms
            .iter()
            .map(|(h, _)| {
                self.vector(h)
                    .iter()
                    .zip(&q)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

/// Majority vote among the `k` nearest training histograms (L2). Vote ties go
/// to the smaller mean distance, then the lower class index.
pub fn knn_classify(query: &ImageHistogram, index: &TrainIndex, k: usize) -> Result<ClassId> {
    if index.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let k = if k > index.len() {
        log::warn!("k = {k} exceeds {} training frames; clamping", index.len());
        index.len()
    } else {
        k
    };
    let distances = index.distances(query);
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
    let mut votes = vec![0usize; index.num_classes];
    let mut dist_sum = vec![0.0; index.num_classes];
    for &i in &order[..k] {
        let c = index.histograms[i].1;
        votes[c] += 1;
        dist_sum[c] += distances[i];
    }
    let mut best: Option<ClassId> = None;
    for c in 0..index.num_classes {
        if votes[c] == 0 {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                votes[c] > votes[b]
                    || (votes[c] == votes[b]
                        && dist_sum[c] / (votes[c] as f64) < dist_sum[b] / (votes[b] as f64))
            }
        };
        if better {
            best = Some(c);
        }
    }
    Ok(best.expect("k >= 1 gives at least one vote"))
}

/// Per-class distance to the nearest training histogram; a dissimilarity score
/// usable for ranking all classes. Classes without frames score +inf.
pub fn knn_class_distances(query: &ImageHistogram, index: &TrainIndex) -> Vec<f64> {
    let mut best = vec![f64::INFINITY; index.num_classes];
    for (d, (_, c)) in index.distances(query).into_iter().zip(&index.histograms) {
        best[*c] = best[*c].min(d);
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct NbnnResult {
    pub scores: Vec<f64>,
    pub class: ClassId,
}

/// Mean over query descriptors of the distance to the nearest same-class map
/// descriptor. With one-hot features that distance is 0 (code present in the
/// class) or sqrt(2) (absent).
pub fn nbnn_classify(query_nodes: &[u8], index: &TrainIndex) -> Result<NbnnResult> {
    if query_nodes.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let scores: Vec<f64> = index
        .per_class_features
        .iter()
        .map(|counts| {
            if counts.iter().all(|&c| c == 0) {
                return f64::INFINITY;
            }
            let total: f64 = query_nodes
                .iter()
                .map(|&q| {
                    if counts[q as usize] > 0 {
                        0.0
                    } else {
                        ONE_HOT_DISTANCE
                    }
                })
                .sum();
            total / query_nodes.len() as f64
        })
        .collect();
    let mut class = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s < scores[class] {
            class = c;
        }
    }
    Ok(NbnnResult { scores, class })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(pairs: &[(usize, u32)]) -> ImageHistogram {
        let mut h = ImageHistogram::default();
        for &(i, c) in pairs {
            h.bins[i] = c;
        }
        h
    }

    fn index() -> TrainIndex {
        let mut idx = TrainIndex::new(3);
        idx.insert(hist(&[(0, 2), (5, 1)]), 0).unwrap();
        idx.insert(hist(&[(10, 3)]), 1).unwrap();
        idx.insert(hist(&[(10, 2), (20, 1)]), 2).unwrap();
        idx
    }

    #[test]
    fn exact_match_k1() {
        let idx = index();
        assert_eq!(
            knn_classify(&hist(&[(10, 2), (20, 1)]), &idx, 1).unwrap(),
            2
        );
        assert_eq!(knn_classify(&hist(&[(0, 2), (5, 1)]), &idx, 1).unwrap(), 0);
    }

    #[test]
    fn full_k_symmetric_tie_goes_low() {
        let mut idx = TrainIndex::new(2);
        idx.insert(hist(&[(1, 1)]), 0).unwrap();
        idx.insert(hist(&[(2, 1)]), 1).unwrap();
        assert_eq!(knn_classify(&hist(&[]), &idx, 2).unwrap(), 0);
        // k larger than the index clamps
        assert_eq!(knn_classify(&hist(&[]), &idx, 10).unwrap(), 0);
    }

    #[test]
    fn knn_rejects_empty() {
        assert!(knn_classify(&hist(&[]), &TrainIndex::new(2), 1).is_err());
        assert!(knn_classify(&hist(&[]), &index(), 0).is_err());
    }

    #[test]
    fn normalized_distances() {
        let mut idx = TrainIndex::new(1);
        idx.normalize = true;
        idx.insert(hist(&[(3, 4)]), 0).unwrap();
        assert_eq!(idx.distances(&hist(&[(3, 1)])), vec![0.0]);
    }

    #[test]
    fn nbnn_scores() {
        let idx = index();
        let r = nbnn_classify(&[10, 20], &idx).unwrap();
        assert_eq!(r.scores[2], 0.0);
        assert!((r.scores[1] - ONE_HOT_DISTANCE / 2.0).abs() < 1e-15);
        assert_eq!(r.scores[0], ONE_HOT_DISTANCE);
        assert_eq!(r.class, 2);
        assert!(nbnn_classify(&[], &idx).is_err());
    }

    #[test]
    fn nbnn_empty_class_is_infinite_and_duplicates_ignored() {
        let mut idx = TrainIndex::new(3);
        idx.insert(hist(&[(1, 1)]), 0).unwrap();
        idx.insert(hist(&[(1, 5)]), 1).unwrap();
        let r = nbnn_classify(&[1, 1], &idx).unwrap();
        assert_eq!(r.scores, vec![0.0, 0.0, f64::INFINITY]);
        assert_eq!(r.class, 0);
    }
}
