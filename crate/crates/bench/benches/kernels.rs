use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use cutleak::attack::{farthest_point_init, kmeans, KMeansParams, Pca};
use cutleak::{gen_blobs, Network, NetworkSpec};

fn forward_backward(c: &mut Criterion) {
    let net = Network::init(&NetworkSpec::relu(&[784, 128, 64, 32, 10], 1)).unwrap();
    let data = gen_blobs(10, 784, &[13; 10], 1.0, 0.3, 2).unwrap();
    let x = data.features.select_rows(&(0..128).collect::<Vec<_>>());
    let labels = &data.labels[..128];
    c.bench_function("forward_backward_mnist_mlp_batch128", |b| {
        b.iter(|| {
            let trace = net.forward(black_box(&x)).unwrap();
            black_box(net.backward(&trace, labels).unwrap())
        })
    });
}

fn clustering(c: &mut Criterion) {
    let data = gen_blobs(10, 64, &[200; 10], 1.0, 0.5, 3).unwrap();
    let points = data.features.to_rows();
    let init = farthest_point_init(&points, 10, 0).unwrap();
    c.bench_function("kmeans_2000x64_k10", |b| {
        b.iter(|| black_box(kmeans(black_box(&points), 10, &init, KMeansParams::default()).unwrap()))
    });
    c.bench_function("pca_2000x64_to_8", |b| b.iter(|| black_box(Pca::fit(black_box(&points), 8).unwrap())));
}

criterion_group!(benches, forward_backward, clustering);
criterion_main!(benches);
