//! Principal component analysis by power iteration with deflation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{dot, l2_norm, Matrix};

pub const PCA_TOLERANCE: f64 = 1e-10;
pub const PCA_MAX_ITER: usize = 1000;

/// A fitted projection: centered input times `components^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit principal directions, strongest first.
    pub components: Vec<Vec<f64>>,
    /// Variance along each component (covariance eigenvalues).
    pub variances: Vec<f64>,
}

impl Pca {
    /// Fits the top `target_dim` components of the sample covariance.
    pub fn fit(points: &[Vec<f64>], target_dim: usize) -> Result<Self> {
        let n = points.len();
        let d = points.first().map_or(0, Vec::len);
        if target_dim == 0 || target_dim > n.min(d) {
            return Err(Error::InvalidArgument(format!(
                "PCA target dimension {target_dim} must be in 1..={} for {n} points of length {d}",
                n.min(d)
            )));
        }
        let x = Matrix::from_rows(points)?;
        let mean: Vec<f64> = x.column_sums().into_iter().map(|s| s / n as f64).collect();
        let mut centered = x;
        for r in 0..n {
            for (v, m) in centered.row_mut(r).iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        let mut cov = centered.matmul_transa(&centered)?;
        cov.scale(1.0 / (n.max(2) - 1) as f64);

        let trace: f64 = (0..d).map(|i| cov.get(i, i)).sum();
        let floor = f64::EPSILON * trace.max(f64::MIN_POSITIVE);
        let mut rng = ChaCha8Rng::seed_from_u64(0x05ee_d0ca);
        let mut components: Vec<Vec<f64>> = Vec::with_capacity(target_dim);
        let mut variances = Vec::with_capacity(target_dim);

        for k in 0..target_dim {
            let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            orthogonalize(&mut v, &components);
            let mut eigen = 0.0;
            let mut found = None;
            if normalize(&mut v) {
                for _ in 0..PCA_MAX_ITER {
                    let mut w = mat_vec(&cov, &v);
                    orthogonalize(&mut w, &components);
                    let lambda = l2_norm(&w);
                    if lambda <= floor {
                        break;
                    }
                    w.iter_mut().for_each(|x| *x /= lambda);
                    let shift = w.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    let stalled = (lambda - eigen).abs() <= PCA_TOLERANCE * lambda;
                    v = w;
                    eigen = lambda;
                    if shift < PCA_TOLERANCE || stalled {
                        found = Some(lambda);
                        break;
                    }
                }
            }
            match found {
                Some(lambda) => {
                    variances.push(lambda);
                }
                None if eigen <= floor => {
                    // no variance left: any direction orthogonal to the rest will do
                    v = completion(d, &components);
                    variances.push(0.0);
                }
                None => return Err(Error::NoConvergence { component: k, iterations: PCA_MAX_ITER }),
            }
            orient(&mut v);
            components.push(v);
        }
        Ok(Self { mean, components, variances })
    }

    pub fn transform(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        points
            .iter()
            .map(|p| {
                if p.len() != self.mean.len() {
                    return Err(Error::Shape(format!(
                        "point of length {} projected by a PCA fitted on length {}",
                        p.len(),
                        self.mean.len()
                    )));
                }
                let centered: Vec<f64> = p.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
                Ok(self.components.iter().map(|c| dot(c, &centered)).collect())
            })
            .collect()
    }

    /// Maps projected coordinates back to the input space.
    pub fn reconstruct(&self, projected: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &t) in self.components.iter().zip(projected) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += t * v;
            }
        }
        out
    }
}

/// Centers `points` and projects them onto their top `target_dim` principal
/// directions.
pub fn pca_reduce(points: &[Vec<f64>], target_dim: usize) -> Result<Vec<Vec<f64>>> {
    Pca::fit(points, target_dim)?.transform(points)
}

fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    m.row_iter().map(|row| dot(row, v)).collect()
}

/// Two passes of Gram-Schmidt against `basis`.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let n = l2_norm(v);
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

fn completion(d: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        orthogonalize(&mut e, basis);
        if l2_norm(&e) > 1e-6 && normalize(&mut e) {
            return e;
        }
    }
    unreachable!("fewer than d basis vectors always leave a completion")
}

/// Flips `v` so its largest-magnitude coordinate is positive.
fn orient(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}
