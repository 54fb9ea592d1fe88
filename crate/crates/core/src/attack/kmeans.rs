//! Lloyd's K-means with caller-supplied initial centroids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::squared_distance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self { max_iter: 300, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster id per point.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances for the final state.
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every iteration.
    pub history: Vec<f64>,
    /// Number of times an empty cluster was re-seeded.
    pub reseeds: usize,
}

impl ClusterAssignment {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Within-cluster sum of squared Euclidean distances.
pub fn objective(points: &[Vec<f64>], assignment: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(assignment).map(|(p, &c)| squared_distance(p, &centroids[c])).sum()
}

pub fn kmeans(points: &[Vec<f64>], k: usize, init: &[Vec<f64>], params: KMeansParams) -> Result<ClusterAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("K-means needs K >= 2, got {k}")));
    }
    if k > points.len() {
        return Err(Error::InvalidArgument(format!("K = {k} exceeds the {} points", points.len())));
    }
    if init.len() != k {
        return Err(Error::InvalidArgument(format!("{} initial centroids for K = {k}", init.len())));
    }
    let dim = points[0].len();
    if points.iter().chain(init).any(|p| p.len() != dim) {
        return Err(Error::Shape("K-means points and centroids must share one length".into()));
    }

    let mut centroids = init.to_vec();
    let mut assignment = vec![0; points.len()];
    let mut history = Vec::new();
    let mut reseeds = 0;
    let mut iterations = 0;

    while iterations < params.max_iter.max(1) {
        iterations += 1;
        let mut dist = Vec::with_capacity(points.len());
        for (a, p) in assignment.iter_mut().zip(points) {
            let (c, d) = nearest(p, &centroids);
            *a = c;
            dist.push(d);
        }

        let mut sizes = vec![0usize; k];
        for &c in &assignment {
            sizes[c] += 1;
        }
        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            // steal the point farthest from its own centroid, if any is off-center
            let Some((far, d)) = dist
                .iter()
                .enumerate()
                .filter(|(i, _)| sizes[assignment[*i]] > 1)
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, d)| (i, *d))
            else {
                continue;
            };
            if d <= 0.0 {
                continue;
            }
            sizes[assignment[far]] -= 1;
            sizes[empty] = 1;
            assignment[far] = empty;
            dist[far] = 0.0;
            centroids[empty] = points[far].clone();
            reseeds += 1;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &c) in points.iter().zip(&assignment) {
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for (j, sum) in sums.into_iter().enumerate() {
            if sizes[j] == 0 {
                continue;
            }
            let mean: Vec<f64> = sum.into_iter().map(|s| s / sizes[j] as f64).collect();
            shift = shift.max(squared_distance(&mean, &centroids[j]).sqrt());
            centroids[j] = mean;
        }
        history.push(objective(points, &assignment, &centroids));
        if shift < params.tol {
            break;
        }
    }

    Ok(ClusterAssignment {
        objective: objective(points, &assignment, &centroids),
        assignment,
        centroids,
        iterations,
        history,
        reseeds,
    })
}

/// Farthest-point seeding: a seeded random first centroid, then repeatedly the
/// point farthest from its nearest chosen centroid (lowest index on ties).
pub fn farthest_point_init(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k == 0 || k > points.len() {
        return Err(Error::InvalidArgument(format!("cannot seed {k} centroids from {} points", points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..points.len());
    let mut chosen = vec![points[first].clone()];
    let mut gap: Vec<f64> = points.iter().map(|p| squared_distance(p, &chosen[0])).collect();
    while chosen.len() < k {
        let mut far = 0;
        for (i, g) in gap.iter().enumerate() {
            if *g > gap[far] {
                far = i;
            }
        }
        let c = points[far].clone();
        for (g, p) in gap.iter_mut().zip(points) {
            *g = g.min(squared_distance(p, &c));
        }
        chosen.push(c);
    }
    Ok(chosen)
}
