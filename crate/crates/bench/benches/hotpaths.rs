use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use corrff::corr::pearson_abs;
use corrff::graph::build_graph;
use corrff::lj::LjMixture;
use corrff::md::lattice_frame;
use corrff::model::{energy_forces_on, forward_tape, ModelConfig, ModelParams};
use corrff::tape::Tape;

fn fluid_frame(n: usize) -> corrff::Frame {
    let pot = LjMixture::default_preset();
    let box_len = 18.0 * (n as f64 / 96.0).cbrt();
    lattice_frame(&pot, "1:2", n, box_len, 3).unwrap()
}

fn bench_build_graph(c: &mut Criterion) {
    let frame = fluid_frame(96);
    c.bench_function("build_graph 96 atoms", |b| {
        b.iter(|| build_graph(std::hint::black_box(&frame), 4.5).unwrap())
    });
    let big = fluid_frame(768);
    c.bench_function("build_graph 768 atoms (cell list)", |b| {
        b.iter(|| build_graph(std::hint::black_box(&big), 4.5).unwrap())
    });
}

fn bench_forward(c: &mut Criterion) {
    let frame = fluid_frame(96);
    let params = ModelParams::init(ModelConfig::default(), 0);
    let graph = build_graph(&frame, params.config.r_max).unwrap();
    let mut tape = Tape::new();
    c.bench_function("forward 96 atoms", |b| {
        b.iter(|| {
            tape.clear();
            forward_tape(&mut tape, &params, &frame, &graph, false).unwrap()
        })
    });
    c.bench_function("energy+forces 96 atoms", |b| {
        b.iter(|| energy_forces_on(&mut tape, &params, &frame, &graph).unwrap())
    });
}

fn bench_pearson(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cols: Vec<Vec<f64>> = (0..16)
        .map(|_| (0..1024).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    c.bench_function("pearson_abs 16x1024", |b| {
        b.iter(|| pearson_abs(std::hint::black_box(&cols), 0).unwrap())
    });
}

criterion_group!(benches, bench_build_graph, bench_forward, bench_pearson);
criterion_main!(benches);
