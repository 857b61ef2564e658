use std::f64::consts::PI;

use iqlidar::{chirp_phase, phase_noise_path, ChirpConfig, PhaseNoiseConfig};
use proptest::prelude::*;

const N: usize = 1_000_000;

fn increments(linewidth: f64, seed: u64) -> Vec<f64> {
    let cfg = PhaseNoiseConfig {
        linewidth,
        seed,
        dt: 1e-9,
    };
    phase_noise_path(N + 1, &cfg)
        .unwrap()
        .increments()
        .collect()
}

fn moments(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m = |p: i32| xs.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / n;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    (mean, m2, m3 / m2.powf(1.5), m4 / (m2 * m2))
}

#[test]
fn increment_variance_matches_linewidth() {
    // 2π · 100 kHz · 1 ns
    let expected = 6.283_185_307e-4;
    let (_, var, _, _) = moments(&increments(100e3, 1));
    assert!((var / expected - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn increments_pass_jarque_bera() {
    for seed in [1, 2, 3] {
        let (_, _, skew, kurt) = moments(&increments(100e3, seed));
        let jb = N as f64 / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
        // χ²(2) critical value at p = 0.01
        assert!(jb < 9.21, "seed {seed}: JB = {jb}");
    }
}

#[test]
fn quadrupled_linewidth_doubles_spread() {
    let (_, v1, _, _) = moments(&increments(50e3, 5));
    let (_, v4, _, _) = moments(&increments(200e3, 6));
    let ratio = (v4 / v1).sqrt();
    assert!((ratio - 2.0).abs() / 2.0 < 0.03, "{ratio}");
}

proptest! {
    #[test]
    fn second_difference_is_constant(
        bandwidth in 1e9f64..1e12,
        period in 1e-6f64..1e-2,
        f0 in 0.0f64..1e9,
        frac in 0.05f64..0.9,
    ) {
        let chirp = ChirpConfig::new(f0, bandwidth, period).unwrap();
        let h = period * 1e-3;
        let t = frac * period;
        let p = |t: f64| chirp_phase(t, &chirp).unwrap();
        let d2 = p(t + 2.0 * h) - 2.0 * p(t + h) + p(t);
        let expected = 2.0 * PI * chirp.slope() * h * h;
        // cancellation error scales with the phase magnitude at t
        let tol = 1e-9 * expected.abs() + 8.0 * f64::EPSILON * p(t + 2.0 * h).abs();
        prop_assert!((d2 - expected).abs() <= tol, "{} vs {}", d2, expected);
    }
}
