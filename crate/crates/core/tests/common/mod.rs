//! Reference implementations the library is checked against. Everything here
//! is written with plain loops and no library numerics.

#![allow(dead_code)]

use cutleak::nn::{Activation, Network};
use cutleak::Matrix;

/// Naive mean softmax cross-entropy of `net` on `x`, plus every hidden
/// pre-activation (for kink detection).
pub fn naive_loss(net: &Network, x: &[Vec<f64>], labels: &[usize]) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let mut pre_all = Vec::new();
    for (row, &y) in x.iter().zip(labels) {
        let mut a = row.clone();
        for layer in &net.layers {
            let w = &layer.weights;
            let mut z = vec![0.0; w.rows()];
            for (i, zi) in z.iter_mut().enumerate() {
                let mut s = layer.bias[i];
                for (j, aj) in a.iter().enumerate() {
                    s += w.get(i, j) * aj;
                }
                *zi = s;
            }
            a = match layer.activation {
                Activation::Relu => {
                    pre_all.extend(z.iter().copied());
                    z.iter().map(|v| v.max(0.0)).collect()
                }
                Activation::Identity => z,
            };
        }
        let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + a.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - a[y];
    }
    (total / x.len() as f64, pre_all)
}

/// Largest relative error `|analytic - numeric| / (|numeric| + 1e-8)` over
/// every weight and bias, using central differences with step `h`.
/// Parameters whose perturbation flips a ReLU are skipped; the returned count
/// says how many were compared.
pub fn finite_difference_check(net: &Network, x: &Matrix, labels: &[usize], h: f64) -> (f64, usize) {
    let trace = net.forward(x).unwrap();
    let grads = net.backward(&trace, labels).unwrap();
    let rows = x.to_rows();
    let (_, base_pre) = naive_loss(net, &rows, labels);
    let same_pattern = |pre: &[f64]| pre.iter().zip(&base_pre).all(|(a, b)| (*a > 0.0) == (*b > 0.0));

    let mut worst: f64 = 0.0;
    let mut compared = 0;
    let mut probe = |analytic: f64, set: &mut dyn FnMut(&mut Network, f64)| {
        let mut plus = net.clone();
        set(&mut plus, h);
        let mut minus = net.clone();
        set(&mut minus, -h);
        let (lp, pp) = naive_loss(&plus, &rows, labels);
        let (lm, pm) = naive_loss(&minus, &rows, labels);
        if !same_pattern(&pp) || !same_pattern(&pm) {
            return;
        }
        let numeric = (lp - lm) / (2.0 * h);
        worst = worst.max((analytic - numeric).abs() / (numeric.abs() + 1e-8));
        compared += 1;
    };
    for (l, layer) in net.layers.iter().enumerate() {
        for i in 0..layer.weights.rows() {
            for j in 0..layer.weights.cols() {
                let analytic = grads.weights[l].get(i, j);
                probe(analytic, &mut |n: &mut Network, d| {
                    let v = n.layers[l].weights.get(i, j);
                    n.layers[l].weights.set(i, j, v + d);
                });
            }
            let analytic = grads.biases[l][i];
            probe(analytic, &mut |n: &mut Network, d| n.layers[l].bias[i] += d);
        }
    }
    (worst, compared)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in descending order with matching unit eigenvectors.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Sample covariance with the `n - 1` denominator.
pub fn covariance(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    let d = points[0].len();
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
    let mut c = vec![vec![0.0; d]; d];
    for p in points {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]);
            }
        }
    }
    for row in c.iter_mut() {
        for v in row.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    c
}

/// Classifies each point by its nearest class mean and returns the accuracy.
pub fn nearest_class_mean_accuracy(points: &[Vec<f64>], labels: &[usize], classes: usize) -> f64 {
    let d = points[0].len();
    let mut sums = vec![vec![0.0; d]; classes];
    let mut counts = vec![0usize; classes];
    for (p, &y) in points.iter().zip(labels) {
        counts[y] += 1;
        for (s, v) in sums[y].iter_mut().zip(p) {
            *s += v;
        }
    }
    let means: Vec<Vec<f64>> =
        sums.iter().zip(&counts).map(|(s, &c)| s.iter().map(|v| v / c.max(1) as f64).collect()).collect();
    let correct = points
        .iter()
        .zip(labels)
        .filter(|(p, &y)| {
            let dist = |m: &Vec<f64>| m.iter().zip(p.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            let best = (0..classes).min_by(|&a, &b| dist(&means[a]).total_cmp(&dist(&means[b]))).unwrap();
            best == y
        })
        .count();
    correct as f64 / points.len() as f64
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Smallest same-label cosine and largest cross-label cosine over all pairs.
pub fn cosine_extremes(points: &[Vec<f64>], labels: &[usize]) -> (f64, f64) {
    let mut min_same = f64::INFINITY;
    let mut max_cross = f64::NEG_INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let c = cosine(&points[i], &points[j]);
            if labels[i] == labels[j] {
                min_same = min_same.min(c);
            } else {
                max_cross = max_cross.max(c);
            }
        }
    }
    (min_same, max_cross)
}
