mod common;

use cutleak::nn::{Network, NetworkSpec};
use cutleak::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_case(seed: u64) -> (Network, Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = rng.random_range(1..=4);
    let mut widths = vec![rng.random_range(1..=6)];
    for _ in 1..layers {
        widths.push(rng.random_range(1..=6));
    }
    let classes = rng.random_range(2..=5);
    widths.push(classes);
    let batch = rng.random_range(1..=8);
    let net = Network::init(&NetworkSpec::relu(&widths, seed)).unwrap();
    let x: Vec<f64> = (0..batch * widths[0]).map(|_| rng.sample(StandardNormal)).collect();
    let labels = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    (net, Matrix::from_vec(batch, widths[0], x).unwrap(), labels)
}

#[test]
fn backprop_matches_central_differences() {
    let mut total = 0;
    for seed in 0..32 {
        let (net, x, labels) = random_case(seed);
        let (worst, compared) = common::finite_difference_check(&net, &x, &labels, 1e-5);
        assert!(worst < 1e-4, "case {seed}: relative error {worst}");
        total += compared;
    }
    assert!(total > 500, "only {total} parameters compared");
}

#[test]
fn per_sample_rows_follow_logit_gradient() {
    let (net, x, labels) = random_case(7);
    let trace = net.forward(&x).unwrap();
    let grads = net.backward(&trace, &labels).unwrap();
    let last = net.num_layers() - 1;
    let a = trace.layer_input(last);
    let batch = x.rows();
    let mut mean = Matrix::zeros(grads.weights[last].rows(), grads.weights[last].cols());
    for s in 0..batch {
        let g = grads.sample_weight_gradient(&trace, last, s);
        let dz = grads.logits().row(s);
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                assert!((g.get(i, j) - dz[i] * a.get(s, j)).abs() < 1e-15);
                mean.set(i, j, mean.get(i, j) + g.get(i, j) / batch as f64);
            }
        }
        // the true-label row points against every other row
        let y = labels[s];
        assert!(dz[y] <= 0.0);
    }
    assert!(mean.max_abs_diff(&grads.weights[last]) < 1e-14);
}
