use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64;
use transportlab::dynamics::{time_average_resolvent, EnergyGrid};
use transportlab::tracemap::{band_zeros, trace_orbit};
use transportlab::transfer::{norm_scan, transfer_product};
use transportlab::{PotentialSpec, WavePacket};

fn transfer(c: &mut Criterion) {
    let spec = PotentialSpec::fibonacci(1.0);
    let z = Complex64::new(0.3, 1e-2);
    c.bench_function("transfer_product 1000", |b| b.iter(|| transfer_product(&spec, black_box(1000), 0, z)));
    c.bench_function("norm_scan ±500", |b| b.iter(|| norm_scan(&spec, 0, -500, black_box(500), z).unwrap()));
}

fn resolvent(c: &mut Criterion) {
    let spec = PotentialSpec::fibonacci(1.0);
    let psi = WavePacket::delta(0);
    let time = 20.0;
    let grid = EnergyGrid::standard(spec.bound(), time);
    let mut group = c.benchmark_group("time_average_resolvent");
    group.sample_size(10);
    group.bench_function("T=20 L=120", |b| {
        b.iter(|| time_average_resolvent(&psi, &spec, black_box(time), 120, &grid).unwrap())
    });
    group.finish();
}

fn trace_map(c: &mut Criterion) {
    c.bench_function("trace_orbit k=20", |b| b.iter(|| trace_orbit(1.0, black_box(0.3), 20).unwrap()));
    let mut group = c.benchmark_group("band_zeros");
    group.sample_size(10);
    group.bench_function("k=10", |b| b.iter(|| band_zeros(black_box(2.0), 10).unwrap()));
    group.finish();
}

criterion_group!(kernels, transfer, resolvent, trace_map);
criterion_main!(kernels);
