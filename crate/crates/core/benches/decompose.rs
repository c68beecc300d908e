//! `decompose` with one worker against the default pool.

use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mpclo::io::load_instance;
use mpclo::mappings::Side;
use mpclo::model::MpcloInstance;
use mpclo::partition::{decompose, PartitionOptions, Window};

fn fixture(name: &str) -> MpcloInstance {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{name}.json"));
    load_instance(&path).expect("fixture loads")
}

fn bench(c: &mut Criterion) {
    let cases = [
        ("ex3_dual_1d", fixture("ex3"), Side::Dual, Window::interval(-3.0, 3.0), vec![201]),
        ("ex4_primal_2d", fixture("ex4"), Side::Primal, Window::rect((-1.3, 1.3), (-1.3, 1.3)), vec![25, 25]),
    ];
    let mut group = c.benchmark_group("decompose");
    group.sample_size(10);
    for (name, inst, side, window, grid) in &cases {
        for jobs in [1usize, 0] {
            let opts = PartitionOptions { jobs, ..PartitionOptions::default() };
            let label = if jobs == 1 { "sequential" } else { "parallel" };
            group.bench_with_input(BenchmarkId::new(*name, label), &opts, |b, opts| {
                b.iter(|| decompose(black_box(inst), *side, window, grid, opts).expect("decomposes"))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
