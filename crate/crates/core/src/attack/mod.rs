//! Clustering label-inference attack on cut-layer gradients or smashed data.
//!
//! Pipeline: L2-normalize (gradients only) → optional PCA → K-means seeded
//! with one known-label anchor per class → every point inherits the label of
//! its cluster's anchor. Without anchors, a strictly ordered class prior maps
//! clusters to labels by size instead.

pub mod kmeans;
pub mod pca;
pub mod report;
pub mod sign;
pub mod similarity;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::split::Source;

pub use kmeans::{farthest_point_init, kmeans, ClusterAssignment, KMeansParams};
pub use pca::{pca_reduce, Pca};
pub use report::{score, AttackFlag, AttackReport};
pub use sign::{logit_sign_attack, weight_sign_attack};
pub use similarity::{cosine_similarity, normalize_l2};

/// Label-free points to attack.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackInput {
    pub points: Vec<Vec<f64>>,
    pub source: Source,
    pub classes: usize,
}

impl AttackInput {
    pub fn new(points: Vec<Vec<f64>>, source: Source, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 classes, got {classes}")));
        }
        let Some(first) = points.first() else {
            return Err(Error::InvalidArgument("no points to attack".into()));
        };
        let dim = first.len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::Shape("attack points must be non-empty and share one length".into()));
        }
        Ok(Self { points, source, classes })
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

/// One known-label vector per class.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    anchors: BTreeMap<usize, Vec<f64>>,
}

impl AnchorSet {
    pub fn new(anchors: BTreeMap<usize, Vec<f64>>) -> Self {
        Self { anchors }
    }

    /// Picks one point per class: the first of each class in a seeded
    /// permutation of `labels`. `labels` are the adversary's known labels for
    /// the points it owns.
    pub fn choose(points: &[Vec<f64>], labels: &[usize], classes: usize, seed: u64) -> Result<Self> {
        let idx = choose_anchor_indices(labels, classes, seed)?;
        Ok(Self::new(idx.into_iter().enumerate().map(|(c, i)| (c, points[i].clone())).collect()))
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn get(&self, label: usize) -> Option<&Vec<f64>> {
        self.anchors.get(&label)
    }

    fn validate(&self, classes: usize, dim: usize) -> Result<()> {
        let labels: Vec<usize> = self.anchors.keys().copied().collect();
        if labels != (0..classes).collect::<Vec<_>>() {
            return Err(Error::InvalidArgument(format!(
                "need exactly one anchor for each of {classes} classes, got labels {labels:?}"
            )));
        }
        if self.anchors.values().any(|v| v.len() != dim) {
            return Err(Error::Shape(format!("anchor vectors must have length {dim}")));
        }
        Ok(())
    }

    /// Anchor vectors in label order.
    fn vectors(&self) -> Vec<Vec<f64>> {
        self.anchors.values().cloned().collect()
    }
}

/// Index of one sample per class: the first occurrence of each class in a
/// permutation of `0..labels.len()` seeded by `seed`.
pub fn choose_anchor_indices(labels: &[usize], classes: usize, seed: u64) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut picked = vec![None; classes];
    for i in order {
        match picked.get_mut(labels[i]) {
            Some(slot @ None) => *slot = Some(i),
            Some(Some(_)) => {}
            None => return Err(Error::LabelOutOfRange { label: labels[i], classes }),
        }
    }
    picked
        .into_iter()
        .enumerate()
        .map(|(c, i)| i.ok_or_else(|| Error::InvalidArgument(format!("no sample of class {c} to use as anchor"))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttackOptions {
    pub pca_dim: Option<usize>,
    pub kmeans: KMeansParams,
    /// Seed for farthest-point initialization in anchor-free mode.
    pub seed: u64,
}

/// Result of a clustering attack, before scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringOutcome {
    pub predicted: Vec<usize>,
    /// Label carried by each cluster.
    pub cluster_labels: Vec<usize>,
    pub clusters: ClusterAssignment,
    pub flags: Vec<AttackFlag>,
}

impl ClusteringOutcome {
    /// Scores the predictions against held-out ground truth.
    pub fn report(&self, truth: &[usize], classes: usize) -> Result<AttackReport> {
        let mut r = score(&self.predicted, truth, classes)?;
        r.iterations = self.clusters.iterations;
        r.flags = self.flags.clone();
        Ok(r)
    }
}

/// Runs the clustering attack. `anchors` take precedence over `class_prior`;
/// at least one must be given.
pub fn run_clustering_attack(
    input: &AttackInput,
    anchors: Option<&AnchorSet>,
    class_prior: Option<&[f64]>,
    options: &AttackOptions,
) -> Result<ClusteringOutcome> {
    let k = input.classes;
    let mut flags = Vec::new();
    let prior_order = match (anchors, class_prior) {
        (Some(a), _) => {
            a.validate(k, input.dim())?;
            None
        }
        (None, Some(prior)) => Some(prior_rank(prior, k)?),
        (None, None) => return Err(Error::MissingAnchors),
    };

    let mut points = input.points.clone();
    let mut anchor_vecs = anchors.map(AnchorSet::vectors);
    if input.source == Source::Gradients {
        let n = normalize_l2(&points);
        if !n.zero_vectors.is_empty() {
            flags.push(AttackFlag::ZeroVectors { count: n.zero_vectors.len() });
        }
        points = n.points;
        anchor_vecs = anchor_vecs.map(|a| normalize_l2(&a).points);
    }
    if let Some(dim) = options.pca_dim {
        let mut joint = points.clone();
        joint.extend(anchor_vecs.iter().flatten().cloned());
        let pca = Pca::fit(&joint, dim)?;
        points = pca.transform(&points)?;
        anchor_vecs = anchor_vecs.map(|a| pca.transform(&a)).transpose()?;
    }
    if points.iter().all(|p| p == &points[0]) {
        flags.push(AttackFlag::DegenerateInput);
    }

    let (clusters, cluster_labels) = match (anchor_vecs, prior_order) {
        (Some(init), _) => {
            let clusters = kmeans(&points, k, &init, options.kmeans)?;
            let home: Vec<usize> = init.iter().map(|a| kmeans::nearest(a, &clusters.centroids).0).collect();
            let drifted: Vec<usize> = (0..k).filter(|&j| home[j] != j).collect();
            let labels = if drifted.is_empty() {
                (0..k).collect()
            } else {
                flags.push(AttackFlag::AnchorDrift { labels: drifted });
                remap_by_anchor_votes(&home, k)
            };
            (clusters, labels)
        }
        (None, Some(by_frequency)) => {
            flags.push(AttackFlag::AnchorFree);
            let init = farthest_point_init(&points, k, options.seed)?;
            let clusters = kmeans(&points, k, &init, options.kmeans)?;
            let sizes = clusters.cluster_sizes();
            let mut by_size: Vec<usize> = (0..k).collect();
            by_size.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
            let mut labels = vec![0; k];
            for (cluster, label) in by_size.into_iter().zip(by_frequency) {
                labels[cluster] = label;
            }
            (clusters, labels)
        }
        (None, None) => unreachable!("checked above"),
    };

    let predicted = clusters.assignment.iter().map(|&c| cluster_labels[c]).collect();
    Ok(ClusteringOutcome { predicted, cluster_labels, clusters, flags })
}

/// Class indices ordered by descending prior frequency. Ties are rejected.
fn prior_rank(prior: &[f64], k: usize) -> Result<Vec<usize>> {
    if prior.len() != k || prior.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidArgument(format!("class prior must hold {k} non-negative frequencies")));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| prior[b].total_cmp(&prior[a]));
    if let Some(w) = order.windows(2).find(|w| prior[w[0]] == prior[w[1]]) {
        return Err(Error::TiedPrior(format!("classes {} and {} share frequency {}", w[0], w[1], prior[w[0]])));
    }
    Ok(order)
}

/// Greedy maximum matching of clusters to labels on the anchors' votes
/// (`home[label]` is the cluster nearest that label's anchor). Unmatched
/// clusters keep their seed label when it is free, else take the lowest
/// free label.
fn remap_by_anchor_votes(home: &[usize], k: usize) -> Vec<usize> {
    let mut votes = vec![vec![0usize; k]; k];
    for (label, &cluster) in home.iter().enumerate() {
        votes[cluster][label] += 1;
    }
    let mut pairs: Vec<(usize, usize, usize)> = (0..k)
        .flat_map(|c| (0..k).map(move |l| (c, l)))
        .filter_map(|(c, l)| (votes[c][l] > 0).then_some((votes[c][l], c, l)))
        .collect();
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut label_of = vec![None; k];
    let mut taken = vec![false; k];
    for (_, c, l) in pairs {
        if label_of[c].is_none() && !taken[l] {
            label_of[c] = Some(l);
            taken[l] = true;
        }
    }
    for c in 0..k {
        if label_of[c].is_none() {
            let l = if taken[c] { (0..k).find(|&l| !taken[l]).expect("a free label remains") } else { c };
            label_of[c] = Some(l);
            taken[l] = true;
        }
    }
    label_of.into_iter().map(|l| l.expect("every cluster labelled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchors(vs: &[Vec<f64>]) -> AnchorSet {
        AnchorSet::new(vs.iter().cloned().enumerate().collect())
    }

    fn two_groups() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for i in 0..10 {
            let e = i as f64 * 0.01;
            pts.push(vec![1.0 + e, 0.1]);
            truth.push(0);
            pts.push(vec![0.1, 1.0 - e]);
            truth.push(1);
        }
        (pts, truth)
    }

    #[test]
    fn anchored_attack_labels_by_seed() {
        let (pts, truth) = two_groups();
        let input = AttackInput::new(pts.clone(), Source::Gradients, 2).unwrap();
        let a = anchors(&[pts[0].clone(), pts[1].clone()]);
        let out = run_clustering_attack(&input, Some(&a), None, &AttackOptions::default()).unwrap();
        assert_eq!(out.report(&truth, 2).unwrap().accuracy, 1.0);
        assert!(out.flags.is_empty());

        // swapping the anchors swaps the labels
        let swapped = anchors(&[pts[1].clone(), pts[0].clone()]);
        let out = run_clustering_attack(&input, Some(&swapped), None, &AttackOptions::default()).unwrap();
        assert_eq!(out.report(&truth, 2).unwrap().accuracy, 0.0);
    }

    #[test]
    fn requires_anchors_or_prior() {
        let (pts, _) = two_groups();
        let input = AttackInput::new(pts, Source::SmashedData, 2).unwrap();
        assert!(matches!(
            run_clustering_attack(&input, None, None, &AttackOptions::default()),
            Err(Error::MissingAnchors)
        ));
        let tied = run_clustering_attack(&input, None, Some(&[0.5, 0.5]), &AttackOptions::default());
        assert!(tied.unwrap_err().to_string().contains("requires strictly biased class prior"));
    }

    #[test]
    fn anchor_set_must_cover_every_class() {
        let (pts, _) = two_groups();
        let input = AttackInput::new(pts.clone(), Source::SmashedData, 2).unwrap();
        let partial = AnchorSet::new([(1, pts[0].clone())].into_iter().collect());
        assert!(run_clustering_attack(&input, Some(&partial), None, &AttackOptions::default()).is_err());
    }

    #[test]
    fn anchor_free_maps_by_cluster_size() {
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for i in 0..30 {
            pts.push(vec![0.0 + i as f64 * 1e-3, 0.0]);
            truth.push(1);
        }
        for i in 0..10 {
            pts.push(vec![5.0, 5.0 + i as f64 * 1e-3]);
            truth.push(0);
        }
        let input = AttackInput::new(pts, Source::SmashedData, 2).unwrap();
        let out = run_clustering_attack(&input, None, Some(&[0.25, 0.75]), &AttackOptions::default()).unwrap();
        assert_eq!(out.report(&truth, 2).unwrap().accuracy, 1.0);
        assert!(out.flags.contains(&AttackFlag::AnchorFree));
    }

    #[test]
    fn drifted_anchors_fall_back_to_votes() {
        assert_eq!(remap_by_anchor_votes(&[0, 1, 2], 3), vec![0, 1, 2]);
        // anchors 0 and 1 both landed in cluster 1; cluster 0 got nobody
        assert_eq!(remap_by_anchor_votes(&[1, 1, 2], 3), vec![1, 0, 2]);
        assert_eq!(remap_by_anchor_votes(&[2, 0, 1], 3), vec![1, 2, 0]);
    }

    #[test]
    fn anchor_choice_is_seeded_first_occurrence() {
        let labels = [0, 1, 0, 2, 1, 2, 0];
        let a = choose_anchor_indices(&labels, 3, 5).unwrap();
        assert_eq!(a, choose_anchor_indices(&labels, 3, 5).unwrap());
        for (c, &i) in a.iter().enumerate() {
            assert_eq!(labels[i], c);
        }
        assert!(choose_anchor_indices(&[0, 0, 1], 3, 0).is_err());
    }

    #[test]
    fn input_validation() {
        assert!(AttackInput::new(vec![], Source::Gradients, 2).is_err());
        assert!(AttackInput::new(vec![vec![1.0]], Source::Gradients, 1).is_err());
        assert!(AttackInput::new(vec![vec![1.0], vec![1.0, 2.0]], Source::Gradients, 2).is_err());
    }
}
