use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use sparsekit::models::HeadKind;
use sparsekit::structured::{ButterflyMatrix, KaleidoscopeMatrix};
use sparsekit::Tensor;
use sparsekit_bench::{blobs, fc6};
use std::hint::black_box;

fn butterfly_vs_dense(c: &mut Criterion) {
    let mut g = c.benchmark_group("matvec");
    for n in [64usize, 256, 1024] {
        let b = ButterflyMatrix::random_givens(n, 1).unwrap();
        let dense = b.to_dense();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let xt = Tensor::new(vec![n, 1], x.clone()).unwrap();
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("butterfly", n), &n, |bch, _| {
            bch.iter(|| black_box(b.matvec(black_box(&x)).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("dense", n), &n, |bch, _| {
            bch.iter(|| black_box(dense.matmul(black_box(&xt)).unwrap()))
        });
        let k = KaleidoscopeMatrix::random_givens(n, 1, 2).unwrap();
        g.bench_with_input(BenchmarkId::new("kaleidoscope", n), &n, |bch, _| {
            bch.iter(|| black_box(k.matvec(black_box(&x)).unwrap()))
        });
    }
    g.finish();
}

fn model_forward(c: &mut Criterion) {
    let data = blobs(256, 512);
    let mut g = c.benchmark_group("fc6_forward_256");
    for (name, head) in [("dense_head", HeadKind::Dense), ("butterfly_head", HeadKind::Butterfly)] {
        let m = fc6(512, 512, head);
        g.bench_function(name, |bch| bch.iter(|| black_box(m.predict(&data.images).unwrap())));
    }
    g.finish();
}

criterion_group!(benches, butterfly_vs_dense, model_forward);
criterion_main!(benches);
