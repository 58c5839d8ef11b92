// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::TAU;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use kqfc_bench::{stage_four, stage_four_system};
use kqfc_core::entanglement::{entanglement_bandwidth, optimize_angles};
use kqfc_core::fluctuations::output_spectrum;
use kqfc_core::steady_state::{solve_all, threshold_power, ThresholdOptions};
use kqfc_core::Preset;

fn steady(c: &mut Criterion) {
    let (nd, _) = stage_four(Preset::Anomalous);
    c.bench_function("solve_all", |b| b.iter(|| solve_all(black_box(&nd))));
    let p = Preset::Anomalous.resonator();
    c.bench_function("threshold_power", |b| {
        b.iter(|| threshold_power(black_box(&p), TAU * 3e9, 1, &ThresholdOptions::default()))
    });
}

fn spectra(c: &mut Criterion) {
    let lin = stage_four_system(Preset::Anomalous);
    let w = 2.0 * lin.kappa;
    c.bench_function("output_spectrum", |b| b.iter(|| output_spectrum(black_box(&lin), w)));
    let spec = output_spectrum(&lin, w).unwrap();
    c.bench_function("optimize_angles", |b| b.iter(|| optimize_angles(black_box(&spec))));
    let grid = lin.default_omega_grid();
    let mut g = c.benchmark_group("bandwidth");
    g.sample_size(10);
    g.bench_function("entanglement_bandwidth", |b| {
        b.iter(|| entanglement_bandwidth(black_box(&lin), &grid))
    });
    g.finish();
}

criterion_group!(benches, steady, spectra);
criterion_main!(benches);
