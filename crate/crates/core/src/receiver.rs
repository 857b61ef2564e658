//! 90° optical hybrid, balanced photodetection and per-pixel beat synthesis.
//!
//! Port convention: for inputs `E_s` (signal) and `E_lo` (reference) the four
//! hybrid outputs are
//!
//! ```text
//! E_k = (E_s + e^{jkπ/2} E_lo) / 2,   k = 0..3
//! ```
//!
//! and the two balanced pairs give `I + jQ = R_pd · E_s · conj(E_lo)`.
//! Quadrature-branch imperfections (phase error ε, current gain 1+α) act on
//! ports 1 and 3 only; common-mode errors cancel in the balanced pairs.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, WindowKind};
use crate::error::{Error, Result};
use crate::laser::{ChirpConfig, PhaseNoisePath, SweepDirection};
use crate::rng;
use crate::scene::{Drift, Echo};

/// Relative headroom on the complex-sampling rate, `fs > 2 f_b (1 + margin)`.
pub const SAMPLING_MARGIN: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HybridConfig {
    /// Deviation of the quadrature branch from 90°, rad.
    pub phase_error: f64,
    /// Q-branch current gain is `1 + amplitude_imbalance`.
    pub amplitude_imbalance: f64,
    /// Photodiode responsivity, A/W.
    pub responsivity: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self::ideal()
    }
}

impl HybridConfig {
    pub fn ideal() -> Self {
        Self {
            phase_error: 0.0,
            amplitude_imbalance: 0.0,
            responsivity: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phase_error.abs() < FRAC_PI_2) {
            return Err(Error::config(
                "hybrid.phase_error",
                "must satisfy |ε| < π/2",
            ));
        }
        if !(self.amplitude_imbalance > -1.0 && self.amplitude_imbalance.is_finite()) {
            return Err(Error::config("hybrid.amplitude_imbalance", "must be > -1"));
        }
        if !(self.responsivity > 0.0 && self.responsivity.is_finite()) {
            return Err(Error::config("hybrid.responsivity", "must be > 0"));
        }
        Ok(())
    }
}

/// Additive detector noise on each of I and Q.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Standard deviation per sample, current units.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("noise.sigma", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Per-sample noise σ that yields electrical SNR `snr_db` for a complex
/// baseband tone of magnitude `signal_magnitude`:
/// `SNR = |z|² / (2σ²)` since I and Q each carry σ².
pub fn sigma_for_snr(signal_magnitude: f64, snr_db: f64) -> f64 {
    signal_magnitude / (2.0 * 10f64.powf(snr_db / 10.0)).sqrt()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub row: usize,
    pub col: usize,
    pub chirp: usize,
}

/// Sampled I/Q photocurrents of one pixel over one chirp.
#[derive(Clone, Debug, PartialEq)]
pub struct IqTrace {
    pub i: Vec<f64>,
    pub q: Vec<f64>,
    pub fs: f64,
    pub meta: TraceMeta,
}

impl IqTrace {
    pub fn new(i: Vec<f64>, q: Vec<f64>, fs: f64) -> Result<Self> {
        if i.len() != q.len() {
            return Err(Error::Analysis(format!(
                "I and Q lengths differ ({} vs {})",
                i.len(),
                q.len()
            )));
        }
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::config("sampling.fs", "must be finite and > 0"));
        }
        Ok(Self {
            i,
            q,
            fs,
            meta: TraceMeta::default(),
        })
    }

    pub fn from_complex(z: &[Complex64], fs: f64) -> Result<Self> {
        Self::new(
            z.iter().map(|c| c.re).collect(),
            z.iter().map(|c| c.im).collect(),
            fs,
        )
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    pub fn sample(&self, k: usize) -> Complex64 {
        Complex64::new(self.i[k], self.q[k])
    }

    pub fn complex(&self) -> Vec<Complex64> {
        self.i
            .iter()
            .zip(&self.q)
            .map(|(&i, &q)| Complex64::new(i, q))
            .collect()
    }

    /// Adds `scale * other` sample-wise.
    pub fn add_scaled(&mut self, other: &IqTrace, scale: f64) {
        for (a, b) in self.i.iter_mut().zip(&other.i) {
            *a += scale * b;
        }
        for (a, b) in self.q.iter_mut().zip(&other.q) {
            *a += scale * b;
        }
    }
}

/// Four output fields of the 90° hybrid.
pub fn hybrid_outputs(e_s: Complex64, e_lo: Complex64, cfg: &HybridConfig) -> [Complex64; 4] {
    let quad = Complex64::from_polar(1.0, FRAC_PI_2 + cfg.phase_error);
    let gain = (1.0 + cfg.amplitude_imbalance).sqrt();
    [
        (e_s + e_lo) * 0.5,
        (e_s + quad * e_lo) * (0.5 * gain),
        (e_s - e_lo) * 0.5,
        (e_s - quad * e_lo) * (0.5 * gain),
    ]
}

/// Balanced pairs (0,2) and (1,3): `I = R(|E0|² − |E2|²)`, `Q = R(|E1|² − |E3|²)`.
pub fn balanced_detect(fields: &[Complex64; 4], responsivity: f64) -> (f64, f64) {
    let i = responsivity * (fields[0].norm_sqr() - fields[2].norm_sqr());
    let q = responsivity * (fields[1].norm_sqr() - fields[3].norm_sqr());
    (i, q)
}

/// Fixed parameters for synthesizing a pixel's beat over one chirp.
#[derive(Clone, Copy, Debug)]
pub struct BeatContext<'a> {
    pub chirp: &'a ChirpConfig,
    pub hybrid: &'a HybridConfig,
    pub fs: f64,
    /// Reference (LO) field amplitude.
    pub lo_amplitude: f64,
    pub drift: &'a Drift,
    /// Absolute start time of this chirp; drift is evaluated against it.
    pub chirp_start: f64,
    pub phase_noise: Option<&'a PhaseNoisePath>,
}

impl<'a> BeatContext<'a> {
    pub fn new(
        chirp: &'a ChirpConfig,
        hybrid: &'a HybridConfig,
        drift: &'a Drift,
        fs: f64,
    ) -> Self {
        Self {
            chirp,
            hybrid,
            fs,
            lo_amplitude: 1.0,
            drift,
            chirp_start: 0.0,
            phase_noise: None,
        }
    }

    /// Samples per chirp, `round(T·fs)`.
    pub fn samples_per_chirp(&self) -> usize {
        ((self.chirp.period * self.fs).round() as usize).max(1)
    }
}

/// Lowest sample rate accepted for a pixel whose farthest echo has delay `max_delay`.
pub fn required_sample_rate(slope: f64, max_delay: f64) -> f64 {
    2.0 * slope * max_delay * (1.0 + SAMPLING_MARGIN)
}

/// Checks the complex-sampling condition for a set of echo delays.
pub fn check_sampling(chirp: &ChirpConfig, max_delay: f64, fs: f64) -> Result<()> {
    let required = required_sample_rate(chirp.slope(), max_delay);
    if !(fs > required) || !(fs > 0.0) {
        return Err(Error::Undersampled {
            fs,
            required_fs: required,
        });
    }
    Ok(())
}

/// Synthesizes the I/Q trace of a pixel receiving any number of echoes.
///
/// Each echo contributes a baseband field with differential phase
///
/// ```text
/// Δφ(t) = 2π f0 τ + 2πγτ t − πγτ² + θ + drift(t) + φn(t) − φn(t−τ)
/// ```
///
/// (signs of the γ terms flip on a down-sweep). The sum is passed through
/// the hybrid and balanced detectors against a constant reference field.
/// The echo is treated as present over the whole chirp; `τ ≪ T` is assumed.
pub fn simulate_echoes(echoes: &[Echo], ctx: &BeatContext<'_>) -> Result<IqTrace> {
    let chirp = ctx.chirp;
    chirp.validate()?;
    ctx.hybrid.validate()?;
    let max_delay = echoes.iter().map(|e| e.delay).fold(0.0, f64::max);
    if !(max_delay < chirp.period) {
        return Err(Error::Domain(format!(
            "echo delay {max_delay} s must be shorter than the sweep period {} s",
            chirp.period
        )));
    }
    check_sampling(chirp, max_delay, ctx.fs)?;

    let gamma = chirp.slope();
    let sign = match chirp.direction {
        SweepDirection::Down => -1.0,
        _ => 1.0,
    };
    let start_freq = match chirp.direction {
        SweepDirection::Down => chirp.f0 + chirp.bandwidth,
        _ => chirp.f0,
    };
    // per echo: (constant phase, beat angular rate, delay, amplitude)
    let terms: Vec<(f64, f64, f64, f64)> = echoes
        .iter()
        .map(|e| {
            let tau = e.delay;
            let constant = 2.0 * PI * start_freq * tau - sign * PI * gamma * tau * tau + e.phase;
            (constant, sign * 2.0 * PI * gamma * tau, tau, e.amplitude)
        })
        .collect();

    let n = ctx.samples_per_chirp();
    let e_lo = Complex64::new(ctx.lo_amplitude, 0.0);
    let r_pd = ctx.hybrid.responsivity;
    let mut i_out = Vec::with_capacity(n);
    let mut q_out = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / ctx.fs;
        let drift = ctx.drift.phase(ctx.chirp_start, t);
        let noise_now = ctx.phase_noise.map(|p| p.phase_at(t));
        let mut e_s = Complex64::new(0.0, 0.0);
        for &(constant, rate, tau, amp) in &terms {
            let mut phi = constant + rate * t + drift;
            if let (Some(path), Some(now)) = (ctx.phase_noise, noise_now) {
                phi += now - path.phase_at(t - tau);
            }
            e_s += Complex64::from_polar(amp, phi);
        }
        let (i, q) = balanced_detect(&hybrid_outputs(e_s, e_lo, ctx.hybrid), r_pd);
        i_out.push(i);
        q_out.push(q);
    }
    IqTrace::new(i_out, q_out, ctx.fs)
}

/// Single-echo convenience wrapper around [`simulate_echoes`].
#[allow(clippy::too_many_arguments)]
pub fn simulate_pixel_beat(
    chirp: &ChirpConfig,
    delay: f64,
    amplitude: f64,
    phase: f64,
    drift: &Drift,
    noise_path: Option<&PhaseNoisePath>,
    hybrid: &HybridConfig,
    fs: f64,
) -> Result<IqTrace> {
    let mut ctx = BeatContext::new(chirp, hybrid, drift, fs);
    ctx.phase_noise = noise_path;
    simulate_echoes(
        &[Echo {
            delay,
            amplitude,
            phase,
        }],
        &ctx,
    )
}

/// Adds independent Gaussian noise of σ `noise.sigma` to I and Q, drawn from
/// the keyed stream `(noise.seed, stream)`.
pub fn add_detector_noise(trace: &mut IqTrace, noise: &NoiseConfig, stream: u64) {
    if noise.sigma == 0.0 {
        return;
    }
    let mut draws = vec![0.0; 2 * trace.len()];
    rng::standard_normals(noise.seed, stream, &mut draws);
    for (k, pair) in draws.chunks_exact(2).enumerate() {
        trace.i[k] += noise.sigma * pair[0];
        trace.q[k] += noise.sigma * pair[1];
    }
}

/// Image rejection predicted for quadrature phase error ε and gain 1+α:
/// `(1 + g² + 2g cos ε) / (1 + g² − 2g cos ε)` in dB, which reduces to
/// `cot²(ε/2)` for α = 0.
pub fn predicted_image_rejection_db(phase_error: f64, amplitude_imbalance: f64) -> f64 {
    let g = 1.0 + amplitude_imbalance;
    let c = phase_error.cos();
    10.0 * ((1.0 + g * g + 2.0 * g * c) / (1.0 + g * g - 2.0 * g * c)).log10()
}

/// Ratio of the tone power at `+f_b` to its mirror at `−f_b`, in dB.
///
/// The tone is located as the strongest bin in the positive half of a
/// Hann-windowed, 2× zero-padded spectrum. Power is summed over the peak
/// bin and its two neighbours and over the mirrored bins.
pub fn image_rejection_ratio(trace: &IqTrace) -> Result<f64> {
    let windowed = dsp::window(trace, WindowKind::Hann)?;
    let spec = dsp::beat_spectrum(&windowed, 2)?;
    let est = dsp::estimate_beat_frequency(&spec, &dsp::EstimatorConfig::default());
    if est.quality == dsp::PeakQuality::NoPeak {
        return Err(Error::Analysis(format!(
            "no detectable tone (peak SNR {:.1} dB)",
            est.peak_snr_db
        )));
    }
    let len = spec.len();
    let k = est.peak_bin;
    if k < 2 || k + 2 > len / 2 {
        return Err(Error::Analysis(format!(
            "tone at bin {k} too close to DC or Nyquist to separate from its image"
        )));
    }
    let wanted: f64 = (k - 1..=k + 1).map(|b| spec.power(b)).sum();
    let image: f64 = (k - 1..=k + 1).map(|b| spec.power(len - b)).sum();
    Ok(10.0 * (wanted / image).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laser::ChirpConfig;
    use crate::scene::{beat_frequency, round_trip_delay, DriftProfile, DriftSampling};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-15
    }

    #[test]
    fn hybrid_examples() {
        let ideal = HybridConfig::ideal();
        let lo = c(0.3, -0.7);
        let out = hybrid_outputs(c(0.0, 0.0), lo, &ideal);
        let j = c(0.0, 1.0);
        for (k, e) in out.iter().enumerate() {
            assert!(close(*e, j.powu(k as u32) * lo * 0.5));
        }

        let out = hybrid_outputs(c(1.0, 0.0), c(1.0, 0.0), &ideal);
        assert!(close(out[0], c(1.0, 0.0)));
        assert!(close(out[1], c(0.5, 0.5)));
        assert!(close(out[2], c(0.0, 0.0)));
        assert!(close(out[3], c(0.5, -0.5)));
    }

    #[test]
    fn balanced_examples() {
        let ideal = HybridConfig::ideal();
        let (i, q) = balanced_detect(&hybrid_outputs(c(1.0, 0.0), c(1.0, 0.0), &ideal), 1.0);
        assert!((i - 1.0).abs() < 1e-15 && q.abs() < 1e-15);
        let (i, q) = balanced_detect(&hybrid_outputs(c(0.0, 1.0), c(1.0, 0.0), &ideal), 1.0);
        assert!(i.abs() < 1e-15 && (q - 1.0).abs() < 1e-15);
    }

    #[test]
    fn carrier_cancels_without_signal() {
        let ideal = HybridConfig::ideal();
        for lo in [c(1.0, 0.0), c(-2.5, 0.1), c(0.0, 7.0)] {
            let (i, q) = balanced_detect(&hybrid_outputs(c(0.0, 0.0), lo, &ideal), 0.8);
            assert_eq!((i, q), (0.0, 0.0));
        }
    }

    #[test]
    fn hybrid_config_validation() {
        let mut h = HybridConfig::ideal();
        h.phase_error = 1.6;
        assert!(h.validate().is_err());
        h.phase_error = 0.0;
        h.amplitude_imbalance = -1.0;
        assert!(h.validate().is_err());
        h.amplitude_imbalance = 0.0;
        h.responsivity = 0.0;
        assert!(h.validate().is_err());
    }

    #[test]
    fn zero_delay_gives_constant_iq() {
        let chirp = ChirpConfig::new(0.0, 10e9, 1e-3).unwrap();
        let mut hybrid = HybridConfig::ideal();
        hybrid.responsivity = 0.9;
        let tr =
            simulate_pixel_beat(&chirp, 0.0, 0.5, 0.7, &Drift::none(), None, &hybrid, 1e6).unwrap();
        assert_eq!(tr.len(), 1000);
        let expect = (0.9 * 0.5 * 1.0f64).powi(2);
        for k in 0..tr.len() {
            assert!((tr.i[k] - tr.i[0]).abs() < 1e-15);
            assert!((tr.q[k] - tr.q[0]).abs() < 1e-15);
            let m = tr.i[k].powi(2) + tr.q[k].powi(2);
            assert!((m - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn undersampling_names_required_rate() {
        let chirp = ChirpConfig::new(0.0, 10e9, 1e-3).unwrap();
        let tau = round_trip_delay(1.0).unwrap();
        let err = simulate_pixel_beat(
            &chirp,
            tau,
            1.0,
            0.0,
            &Drift::none(),
            None,
            &HybridConfig::ideal(),
            100e3,
        )
        .unwrap_err();
        match err {
            Error::Undersampled { required_fs, .. } => {
                let expect = 2.0 * beat_frequency(1.0, 1e13) * 1.1;
                assert!((required_fs - expect).abs() < 1e-6);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn constant_drift_keeps_magnitude() {
        let chirp = ChirpConfig::new(0.0, 10e9, 1e-3).unwrap();
        let tau = round_trip_delay(1.0).unwrap();
        let h = HybridConfig::ideal();
        let a = simulate_pixel_beat(&chirp, tau, 1.0, 0.3, &Drift::none(), None, &h, 1e6).unwrap();
        let b = simulate_pixel_beat(&chirp, tau, 1.0, 0.3 + 1.234, &Drift::none(), None, &h, 1e6)
            .unwrap();
        for k in 0..a.len() {
            let (ma, mb) = (a.sample(k).norm(), b.sample(k).norm());
            assert!((ma - mb).abs() <= 1e-12 * ma);
        }
    }

    #[test]
    fn detector_noise_is_keyed() {
        let mut a = IqTrace::new(vec![0.0; 64], vec![0.0; 64], 1.0).unwrap();
        let mut b = a.clone();
        let noise = NoiseConfig {
            sigma: 0.1,
            seed: 5,
        };
        add_detector_noise(&mut a, &noise, 3);
        add_detector_noise(&mut b, &noise, 3);
        assert_eq!(a, b);
        let mut c = IqTrace::new(vec![0.0; 64], vec![0.0; 64], 1.0).unwrap();
        add_detector_noise(&mut c, &noise, 4);
        assert_ne!(a, c);
    }

    #[test]
    fn snr_helper() {
        let s = sigma_for_snr(1.0, 30.0);
        assert!((1.0 / (2.0 * s * s) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn closed_form_irr() {
        let expect = 10.0 * (1.0 / (0.05f64).tan().powi(2)).log10();
        assert!((predicted_image_rejection_db(0.1, 0.0) - expect).abs() < 1e-9);
        assert!((expect - 26.0).abs() < 0.05);
    }

    #[test]
    fn real_only_signal_has_full_image() {
        let chirp = ChirpConfig::new(0.0, 10e9, 1e-3).unwrap();
        let tau = round_trip_delay(1.0).unwrap();
        let mut tr = simulate_pixel_beat(
            &chirp,
            tau,
            1.0,
            0.0,
            &Drift::none(),
            None,
            &HybridConfig::ideal(),
            1e6,
        )
        .unwrap();
        tr.q.iter_mut().for_each(|q| *q = 0.0);
        let irr = image_rejection_ratio(&tr).unwrap();
        assert!(irr.abs() < 1e-9, "irr = {irr}");
    }

    #[test]
    fn silent_trace_has_no_irr() {
        let tr = IqTrace::new(vec![0.0; 256], vec![0.0; 256], 1e6).unwrap();
        assert!(matches!(
            image_rejection_ratio(&tr),
            Err(Error::Analysis(_))
        ));
    }

    #[test]
    fn per_chirp_drift_is_a_constant_phase() {
        let chirp = ChirpConfig::new(0.0, 10e9, 1e-3).unwrap();
        let tau = round_trip_delay(1.0).unwrap();
        let h = HybridConfig::ideal();
        let drift = Drift::new(DriftProfile::Ramp(1e3), DriftSampling::PerChirp);
        let mut ctx = BeatContext::new(&chirp, &h, &drift, 1e6);
        ctx.chirp_start = 2e-3;
        let echo = [Echo {
            delay: tau,
            amplitude: 1.0,
            phase: 0.0,
        }];
        let a = simulate_echoes(&echo, &ctx).unwrap();
        let echo_shifted = [Echo {
            delay: tau,
            amplitude: 1.0,
            phase: 2.0,
        }];
        let none = Drift::none();
        ctx.drift = &none;
        let b = simulate_echoes(&echo_shifted, &ctx).unwrap();
        for k in 0..a.len() {
            assert!((a.sample(k) - b.sample(k)).norm() < 1e-9);
        }
    }
}
