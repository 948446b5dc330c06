use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use handrv_bench::{random_path, rng};
use handrv_core::{sdtw_banded, sdtw_match, sdtw_oracle};
use std::hint::black_box;

fn alignment(c: &mut Criterion) {
    let mut g = c.benchmark_group("sdtw");
    let mut r = rng(1);
    for (qn, rn) in [(10, 60), (30, 60), (30, 240)] {
        let q = random_path(&mut r, qn);
        let p = random_path(&mut r, rn);
        let id = format!("{qn}x{rn}");
        g.bench_with_input(BenchmarkId::new("match", &id), &(&q, &p), |b, (q, p)| {
            b.iter(|| sdtw_match(black_box(q), black_box(p)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("banded-8", &id), &(&q, &p), |b, (q, p)| {
            b.iter(|| sdtw_banded(black_box(q), black_box(p), 8).ok())
        });
    }
    let q = random_path(&mut r, 10);
    let p = random_path(&mut r, 40);
    g.bench_function("oracle/10x40", |b| {
        b.iter(|| sdtw_oracle(black_box(&q), black_box(&p)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, alignment);
criterion_main!(benches);
