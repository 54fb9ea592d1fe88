//! Cosine similarity and L2 normalization.
//!
//! On unit vectors `||x - y||^2 = 2 - 2 cos(x, y)`, so K-means with squared
//! Euclidean distance on normalized gradients clusters by cosine similarity.

use crate::error::{Error, Result};
use crate::matrix::{dot, l2_norm};

pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("cosine of vectors of length {} and {}", x.len(), y.len())));
    }
    let (nx, ny) = (l2_norm(x), l2_norm(y));
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::InvalidArgument("cosine similarity of a zero vector".into()));
    }
    Ok((dot(x, y) / (nx * ny)).clamp(-1.0, 1.0))
}

/// Unit-normalized copies of `points` plus the indices of zero vectors, which
/// pass through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub points: Vec<Vec<f64>>,
    pub zero_vectors: Vec<usize>,
}

pub fn normalize_l2(points: &[Vec<f64>]) -> Normalized {
    let mut zero_vectors = Vec::new();
    let points = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let n = l2_norm(p);
            if n == 0.0 {
                zero_vectors.push(i);
                p.clone()
            } else {
                p.iter().map(|v| v / n).collect()
            }
        })
        .collect();
    Normalized { points, zero_vectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::squared_distance;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        let v = [0.3, -1.2, 4.0];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // numpy: x @ y / norm(x) / norm(y)
        let c = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((c - 0.9746318461970762).abs() < 1e-15);
    }

    #[test]
    fn cosine_rejects_zero_and_mismatch() {
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_similarity(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let n = normalize_l2(&[vec![3.0, 4.0], vec![0.0, 0.0]]);
        assert!((n.points[0][0] - 0.6).abs() < 1e-15 && (n.points[0][1] - 0.8).abs() < 1e-15);
        assert_eq!(n.points[1], vec![0.0, 0.0]);
        assert_eq!(n.zero_vectors, vec![1]);
    }

    proptest! {
        #[test]
        fn unit_vectors_link_cosine_and_distance(
            x in prop::collection::vec(-5.0f64..5.0, 8),
            y in prop::collection::vec(-5.0f64..5.0, 8),
        ) {
            prop_assume!(l2_norm(&x) > 1e-6 && l2_norm(&y) > 1e-6);
            let n = normalize_l2(&[x, y]);
            let (a, b) = (&n.points[0], &n.points[1]);
            let cos = cosine_similarity(a, b).unwrap();
            prop_assert!(((2.0 - 2.0 * cos) - squared_distance(a, b)).abs() < 1e-10);
        }
    }
}
