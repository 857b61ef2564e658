use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use iqlidar::dsp::{beat_spectrum, estimate_beat_frequency, window, DspConfig};
use iqlidar::{
    beat_frequency, build_depth_map, build_readout_schedule, readout_frame, round_trip_delay,
    simulate_pixel_beat, Acquisition, ArrayConfig, ChirpConfig, Drift, HybridConfig, NoiseConfig,
    ReadoutMode, Scene, WindowKind,
};

fn chirp() -> ChirpConfig {
    ChirpConfig::new(0.0, 10e9, 1e-3).unwrap()
}

fn pixel(fs: f64) -> iqlidar::IqTrace {
    simulate_pixel_beat(
        &chirp(),
        round_trip_delay(1.0).unwrap(),
        1.0,
        0.0,
        &Drift::none(),
        None,
        &HybridConfig::ideal(),
        fs,
    )
    .unwrap()
}

fn simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_pixel_beat");
    for samples in [1usize << 10, 1 << 14, 1 << 18] {
        let fs = samples as f64 / 1e-3;
        group.bench_with_input(BenchmarkId::from_parameter(samples), &fs, |b, &fs| {
            b.iter(|| pixel(black_box(fs)))
        });
    }
    group.finish();
}

fn spectrum(c: &mut Criterion) {
    let mut group = c.benchmark_group("beat_spectrum");
    for samples in [1usize << 10, 1 << 14, 1 << 18] {
        let windowed = window(&pixel(samples as f64 / 1e-3), WindowKind::Hann).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(samples), &windowed, |b, w| {
            b.iter(|| beat_spectrum(black_box(w), 2).unwrap())
        });
    }
    group.finish();
}

fn estimate(c: &mut Criterion) {
    let spec = beat_spectrum(&window(&pixel(16.384e6), WindowKind::Hann).unwrap(), 2).unwrap();
    let cfg = DspConfig::default().estimator();
    c.bench_function("estimate_beat_frequency/16384", |b| {
        b.iter(|| estimate_beat_frequency(black_box(&spec), &cfg))
    });
}

fn frame(c: &mut Criterion) {
    let scene = Scene::staircase(8, 1.0, 0.05, 1.0).unwrap();
    let mut acq = Acquisition::noiseless(chirp(), 4.0 * beat_frequency(scene.max_range(), 1e13));
    acq.linewidth = 100e3;
    acq.noise = NoiseConfig {
        sigma: 0.1,
        seed: 1,
    };
    let mut group = c.benchmark_group("frame_8x8");
    for mode in [ReadoutMode::RowColumn, ReadoutMode::Direct] {
        let schedule = build_readout_schedule(&ArrayConfig::new(8, mode)).unwrap();
        group.bench_function(BenchmarkId::new("readout", mode.name()), |b| {
            b.iter(|| readout_frame(&scene, &schedule, &acq, 0).unwrap())
        });
    }
    let schedule = build_readout_schedule(&ArrayConfig::new(8, ReadoutMode::RowColumn)).unwrap();
    let f = readout_frame(&scene, &schedule, &acq, 0).unwrap();
    group.bench_function("depth_map", |b| {
        b.iter(|| build_depth_map(black_box(&f), &DspConfig::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, simulate, spectrum, estimate, frame);
criterion_main!(benches);
