//! Gradient defenses applied to each per-sample gradient before it crosses the
//! cut: clipped Gaussian noise and magnitude-based compression.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::l2_norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseDefense {
    /// L2 clip norm `C`, strictly positive.
    pub clip_norm: f64,
    /// Noise multiplier; the per-coordinate noise std is `sigma * clip_norm`.
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionDefense {
    /// Fraction of coordinates zeroed, in `[0, 1)`.
    pub ratio: f64,
}

/// Defense arm for one experiment. At most one of `noise` and `compression`
/// may be set. The privacy parameters are carried as labels only; nothing here
/// computes them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig {
    pub noise: Option<NoiseDefense>,
    pub compression: Option<CompressionDefense>,
    pub reported_epsilon: Option<f64>,
    pub reported_delta: Option<f64>,
}

impl DefenseConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn noise(clip_norm: f64, sigma: f64, seed: u64) -> Self {
        Self { noise: Some(NoiseDefense { clip_norm, sigma, seed }), ..Self::default() }
    }

    pub fn compression(ratio: f64) -> Self {
        Self { compression: Some(CompressionDefense { ratio }), ..Self::default() }
    }

    pub fn is_active(&self) -> bool {
        self.noise.is_some() || self.compression.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise.is_some() && self.compression.is_some() {
            return Err(Error::InvalidArgument(
                "noise and compression defenses are separate arms; enable only one".into(),
            ));
        }
        if let Some(n) = self.noise {
            check_noise_params(n.clip_norm, n.sigma)?;
        }
        if let Some(c) = self.compression {
            check_ratio(c.ratio)?;
        }
        Ok(())
    }
}

fn check_noise_params(clip_norm: f64, sigma: f64) -> Result<()> {
    if !(clip_norm > 0.0 && clip_norm.is_finite()) {
        return Err(Error::InvalidArgument(format!("clip norm must be positive, got {clip_norm}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be non-negative, got {sigma}")));
    }
    Ok(())
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!("compression ratio must be in [0, 1), got {ratio}")));
    }
    Ok(())
}

/// Factor `min(1, C / ||grad||)` that clips `grad` to L2 norm `clip_norm`.
pub fn clip_factor(grad: &[f64], clip_norm: f64) -> f64 {
    let norm = l2_norm(grad);
    if norm > clip_norm {
        clip_norm / norm
    } else {
        1.0
    }
}

/// Clips `grad` to L2 norm `clip_norm`, then adds i.i.d. `N(0, (sigma*C)^2)`
/// noise to every coordinate.
pub fn clip_and_noise<R: Rng + ?Sized>(grad: &[f64], clip_norm: f64, sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_noise_params(clip_norm, sigma)?;
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient passed to clip_and_noise".into()));
    }
    let scale = clip_factor(grad, clip_norm);
    let std = sigma * clip_norm;
    Ok(grad
        .iter()
        .map(|g| {
            let noise: f64 = if std > 0.0 { rng.sample::<f64, _>(StandardNormal) * std } else { 0.0 };
            g * scale + noise
        })
        .collect())
}

/// Zeroes the `floor(ratio * len)` smallest-magnitude coordinates. Ties go to
/// the lower index first.
pub fn compress(grad: &[f64], ratio: f64) -> Result<Vec<f64>> {
    check_ratio(ratio)?;
    // the epsilon keeps e.g. 0.29 * 100 from flooring to 28
    let pruned = ((ratio * grad.len() as f64) + 1e-9).floor() as usize;
    let mut out = grad.to_vec();
    if pruned == 0 {
        return Ok(out);
    }
    let mut order: Vec<usize> = (0..grad.len()).collect();
    order.sort_by(|&a, &b| grad[a].abs().total_cmp(&grad[b].abs()).then(a.cmp(&b)));
    for &i in &order[..pruned] {
        out[i] = 0.0;
    }
    Ok(out)
}
