//! Analytic baselines that need output-layer access.
//!
//! The logits gradient of softmax cross-entropy is `probs - onehot(y)`, so its
//! only negative entry sits at the true label. A per-sample last-layer weight
//! gradient has rows `g_i * a`, and the true-label row is the only one whose
//! dot product with every other row is non-positive.

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Label per sample from undefended logits gradients.
pub fn logit_sign_attack(logit_gradients: &[Vec<f64>]) -> Result<Vec<usize>> {
    logit_gradients
        .iter()
        .enumerate()
        .map(|(s, g)| {
            let mut negatives = g.iter().enumerate().filter(|(_, v)| **v < 0.0).map(|(i, _)| i);
            match (negatives.next(), negatives.next()) {
                (Some(i), None) => Ok(i),
                (None, _) => Err(Error::SignStructure(format!(
                    "sample {s}: no negative entry, not an undefended logits gradient"
                ))),
                (Some(_), Some(_)) => Err(Error::SignStructure(format!(
                    "sample {s}: more than one negative entry"
                ))),
            }
        })
        .collect()
}

/// Label from one sample's unreduced last-layer weight gradient (`K x width`).
pub fn weight_sign_attack(weight_gradient: &Matrix) -> Result<usize> {
    let k = weight_gradient.rows();
    if k == 0 {
        return Err(Error::SignStructure("weight gradient has zero rows".into()));
    }
    let qualifying: Vec<usize> = (0..k)
        .filter(|&i| (0..k).filter(|&j| j != i).all(|j| dot(weight_gradient.row(i), weight_gradient.row(j)) <= 0.0))
        .collect();
    match qualifying.as_slice() {
        [i] => Ok(*i),
        [] => Err(Error::SignStructure("no qualifying row".into())),
        many => Err(Error::SignStructure(format!("multiple qualifying rows {many:?}"))),
    }
}
