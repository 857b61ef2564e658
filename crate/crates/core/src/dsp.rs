//! Beat-spectrum analysis: windowing, FFT, sub-bin peak estimation, range
//! recovery, depth maps and repeat-frame accuracy statistics.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::array::Frame;
use crate::error::{Error, Result};
use crate::receiver::IqTrace;
use crate::scene::{Scene, SPEED_OF_LIGHT};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    Rect,
    #[default]
    Hann,
    Blackman,
}

impl WindowKind {
    /// Half-width of the main lobe in unpadded bins.
    fn main_lobe_bins(self) -> usize {
        match self {
            WindowKind::Rect => 1,
            WindowKind::Hann => 2,
            WindowKind::Blackman => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Rect => "rect",
            WindowKind::Hann => "hann",
            WindowKind::Blackman => "blackman",
        }
    }
}

/// Periodic (DFT-even) window of length `n`.
pub fn window_coefficients(kind: WindowKind, n: usize) -> Vec<f64> {
    let step = 2.0 * PI / n as f64;
    (0..n)
        .map(|k| {
            let x = step * k as f64;
            match kind {
                WindowKind::Rect => 1.0,
                WindowKind::Hann => 0.5 * (1.0 - x.cos()),
                WindowKind::Blackman => 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos(),
            }
        })
        .collect()
}

/// A trace after windowing, with the window's coherent gain (its mean).
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedTrace {
    pub trace: IqTrace,
    pub kind: WindowKind,
    pub coherent_gain: f64,
}

pub fn window(trace: &IqTrace, kind: WindowKind) -> Result<WindowedTrace> {
    if trace.is_empty() {
        return Err(Error::Analysis("cannot window an empty trace".into()));
    }
    let w = window_coefficients(kind, trace.len());
    let coherent_gain = w.iter().sum::<f64>() / w.len() as f64;
    let mut out = trace.clone();
    if kind != WindowKind::Rect {
        for (k, &wk) in w.iter().enumerate() {
            out.i[k] *= wk;
            out.q[k] *= wk;
        }
    }
    Ok(WindowedTrace {
        trace: out,
        kind,
        coherent_gain,
    })
}

/// Complex spectrum of `z = I + jQ`.
///
/// Bins are scaled by `1/L`, where `L` is the number of samples before
/// zero-padding, so an on-bin complex tone of amplitude `A` under a
/// rectangular window shows magnitude `A`. Both frequency halves are kept.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    pub fs: f64,
    /// Samples before padding.
    pub samples: usize,
    pub window: WindowKind,
    pub coherent_gain: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Bin spacing fs / N_fft, Hz.
    pub fn resolution(&self) -> f64 {
        self.fs / self.bins.len() as f64
    }

    /// Zero-padding factor N_fft / L.
    pub fn oversampling(&self) -> f64 {
        self.bins.len() as f64 / self.samples as f64
    }

    /// Signed frequency of bin `k`; the upper half maps to negative frequencies.
    pub fn frequency(&self, k: usize) -> f64 {
        let n = self.bins.len();
        if k < n.div_ceil(2) {
            k as f64 * self.resolution()
        } else {
            (k as f64 - n as f64) * self.resolution()
        }
    }

    pub fn power(&self, k: usize) -> f64 {
        self.bins[k].norm_sqr()
    }

    /// Amplitude of bin `k` corrected for the window's coherent gain.
    pub fn amplitude(&self, k: usize) -> f64 {
        self.bins[k].norm() / self.coherent_gain
    }

    /// Time-domain energy implied by Parseval, `(L²/N) Σ|X|²`.
    pub fn energy(&self) -> f64 {
        let l = self.samples as f64;
        let sum: f64 = self.bins.iter().map(|b| b.norm_sqr()).sum();
        l * l / self.bins.len() as f64 * sum
    }
}

/// FFT of a windowed trace, zero-padded to the next power of two at or
/// above `pad_factor · L`.
pub fn beat_spectrum(windowed: &WindowedTrace, pad_factor: usize) -> Result<Spectrum> {
    let trace = &windowed.trace;
    let l = trace.len();
    if l < 8 {
        return Err(Error::Analysis(format!(
            "trace has {l} samples, need at least 8"
        )));
    }
    if pad_factor == 0 {
        return Err(Error::config("dsp.pad_factor", "must be >= 1"));
    }
    let n = (l * pad_factor).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (k, b) in buf.iter_mut().take(l).enumerate() {
        *b = Complex64::new(trace.i[k], trace.q[k]);
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    fft.process(&mut buf);
    let scale = 1.0 / l as f64;
    for b in &mut buf {
        *b *= scale;
    }
    Ok(Spectrum {
        bins: buf,
        fs: trace.fs,
        samples: l,
        window: windowed.kind,
        coherent_gain: windowed.coherent_gain,
    })
}

/// Which half of the spectrum the peak search covers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchBand {
    #[default]
    Positive,
    Negative,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Minimum peak-to-median power ratio for a valid peak.
    pub snr_threshold_db: f64,
    /// A second peak outside the main lobe within this many dB of the
    /// strongest one marks the estimate ambiguous.
    pub ambiguity_db: f64,
    pub search: SearchBand,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            snr_threshold_db: 6.0,
            ambiguity_db: 3.0,
            search: SearchBand::Positive,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeakQuality {
    Ok,
    NoPeak,
    Ambiguous,
}

impl PeakQuality {
    pub fn name(self) -> &'static str {
        match self {
            PeakQuality::Ok => "ok",
            PeakQuality::NoPeak => "no-peak",
            PeakQuality::Ambiguous => "ambiguous",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(PeakQuality::Ok),
            "no-peak" => Some(PeakQuality::NoPeak),
            "ambiguous" => Some(PeakQuality::Ambiguous),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeatEstimate {
    pub frequency: f64,
    pub peak_snr_db: f64,
    pub quality: PeakQuality,
    pub peak_bin: usize,
    /// Parabolic offset from `peak_bin`, in padded bins.
    pub offset: f64,
}

fn band_range(len: usize, band: SearchBand) -> std::ops::Range<usize> {
    match band {
        SearchBand::Positive => 0..len / 2,
        SearchBand::Negative => len / 2..len,
        SearchBand::Full => 0..len,
    }
}

fn circular_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

fn is_local_max(spec: &Spectrum, k: usize) -> bool {
    let n = spec.len();
    let p = spec.power(k);
    p > spec.power((k + n - 1) % n) && p >= spec.power((k + 1) % n)
}

/// Strongest bin in the search band, refined by a 3-point parabola through
/// the log-power of bins `k*-1, k*, k*+1`.
///
/// Peak SNR is the peak power over the median power of all bins outside the
/// peak's main lobe. Two tones closer than the main-lobe width merge into
/// one peak and are reported as a single `Ok` estimate between them; a
/// separate peak within `ambiguity_db` of the strongest one flags the
/// estimate `Ambiguous`.
pub fn estimate_beat_frequency(spec: &Spectrum, cfg: &EstimatorConfig) -> BeatEstimate {
    let n = spec.len();
    let band = band_range(n, cfg.search);
    let mut peak_bin = band.start;
    let mut peak_power = spec.power(peak_bin);
    for k in band.clone() {
        let p = spec.power(k);
        if p > peak_power {
            peak_bin = k;
            peak_power = p;
        }
    }

    let lobe = (spec.window.main_lobe_bins() as f64 * spec.oversampling()).ceil() as usize;
    let mut off_peak: Vec<f64> = (0..n)
        .filter(|&k| circular_distance(k, peak_bin, n) > lobe)
        .map(|k| spec.power(k))
        .collect();
    let noise_floor = if off_peak.is_empty() {
        0.0
    } else {
        let mid = off_peak.len() / 2;
        *off_peak.select_nth_unstable_by(mid, f64::total_cmp).1
    };
    let peak_snr_db = if peak_power == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * (peak_power / noise_floor).log10()
    };

    let offset = parabolic_offset(
        spec.power((peak_bin + n - 1) % n),
        peak_power,
        spec.power((peak_bin + 1) % n),
    );
    let signed_bin = if peak_bin < n.div_ceil(2) {
        peak_bin as f64
    } else {
        peak_bin as f64 - n as f64
    };
    let frequency = (signed_bin + offset) * spec.resolution();

    let quality = if !(peak_snr_db >= cfg.snr_threshold_db) {
        PeakQuality::NoPeak
    } else {
        let rival = peak_power * 10f64.powf(-cfg.ambiguity_db / 10.0);
        let ambiguous = band.into_iter().any(|k| {
            circular_distance(k, peak_bin, n) > lobe
                && spec.power(k) >= rival
                && is_local_max(spec, k)
        });
        if ambiguous {
            PeakQuality::Ambiguous
        } else {
            PeakQuality::Ok
        }
    };

    BeatEstimate {
        frequency,
        peak_snr_db,
        quality,
        peak_bin,
        offset,
    }
}

/// Vertex of the parabola through `(−1, ln a), (0, ln b), (1, ln c)`.
fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return 0.0;
    }
    let (y0, y1, y2) = (a.ln(), b.ln(), c.ln());
    let denom = y0 - 2.0 * y1 + y2;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralPeak {
    pub bin: usize,
    pub frequency: f64,
    pub power: f64,
}

/// Local maxima of the positive half no more than `floor_db` below its
/// strongest bin, in frequency order.
pub fn find_peaks(spec: &Spectrum, floor_db: f64) -> Vec<SpectralPeak> {
    let half = spec.len() / 2;
    let max = (0..half).map(|k| spec.power(k)).fold(0.0, f64::max);
    if max == 0.0 {
        return Vec::new();
    }
    let floor = max * 10f64.powf(-floor_db / 10.0);
    (1..half - 1)
        .filter(|&k| is_local_max(spec, k) && spec.power(k) >= floor)
        .map(|k| SpectralPeak {
            bin: k,
            frequency: spec.frequency(k),
            power: spec.power(k),
        })
        .collect()
}

/// Inverse FMCW relation R = c f_b / (2γ).
pub fn range_from_beat(beat: f64, slope: f64) -> f64 {
    SPEED_OF_LIGHT * beat / (2.0 * slope)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspConfig {
    pub window: WindowKind,
    /// Zero-padding factor before rounding up to a power of two.
    pub pad_factor: usize,
    pub snr_threshold_db: f64,
    pub ambiguity_db: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        let est = EstimatorConfig::default();
        Self {
            window: WindowKind::Hann,
            pad_factor: 2,
            snr_threshold_db: est.snr_threshold_db,
            ambiguity_db: est.ambiguity_db,
        }
    }
}

impl DspConfig {
    /// Estimator settings; the search always covers positive frequencies.
    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            snr_threshold_db: self.snr_threshold_db,
            ambiguity_db: self.ambiguity_db,
            search: SearchBand::Positive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pad_factor == 0 || self.pad_factor > 64 {
            return Err(Error::config("dsp.pad_factor", "must lie in 1..=64"));
        }
        if !self.snr_threshold_db.is_finite() {
            return Err(Error::config("dsp.snr_threshold_db", "must be finite"));
        }
        if !(self.ambiguity_db.is_finite() && self.ambiguity_db >= 0.0) {
            return Err(Error::config("dsp.ambiguity_db", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeEstimate {
    pub range: f64,
    pub beat_frequency: f64,
    /// Chirp slope the range was computed with, Hz/s.
    pub slope: f64,
    pub peak_snr_db: f64,
    pub quality: PeakQuality,
}

impl RangeEstimate {
    pub fn from_beat(est: &BeatEstimate, slope: f64) -> Self {
        Self {
            range: range_from_beat(est.frequency, slope),
            beat_frequency: est.frequency,
            slope,
            peak_snr_db: est.peak_snr_db,
            quality: est.quality,
        }
    }
}

/// window → spectrum → peak → range for one trace.
pub fn estimate_range(trace: &IqTrace, dsp: &DspConfig, slope: f64) -> Result<RangeEstimate> {
    let windowed = window(trace, dsp.window)?;
    let spec = beat_spectrum(&windowed, dsp.pad_factor)?;
    let est = estimate_beat_frequency(&spec, &dsp.estimator());
    Ok(RangeEstimate::from_beat(&est, slope))
}

/// Per-pixel range estimates for one frame, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub n: usize,
    pub estimates: Vec<RangeEstimate>,
    pub frame_index: usize,
    pub laser_seed: u64,
    pub noise_seed: u64,
    pub slope: f64,
    pub bandwidth: f64,
}

impl DepthMap {
    pub fn get(&self, row: usize, col: usize) -> &RangeEstimate {
        &self.estimates[row * self.n + col]
    }

    pub fn ranges(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.range).collect()
    }
}

pub fn build_depth_map(frame: &Frame, dsp: &DspConfig) -> Result<DepthMap> {
    dsp.validate()?;
    frame.check_complete()?;
    let slope = frame.chirp.slope();
    let estimates = frame
        .traces
        .par_iter()
        .map(|t| estimate_range(t, dsp, slope))
        .collect::<Result<Vec<_>>>()?;
    Ok(DepthMap {
        n: frame.n,
        estimates,
        frame_index: frame.frame_index,
        laser_seed: frame.laser_seed,
        noise_seed: frame.noise_seed,
        slope,
        bandwidth: frame.chirp.bandwidth,
    })
}

/// Repeat-measurement statistics of one pixel.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PixelAccuracy {
    pub row: usize,
    pub col: usize,
    /// Strongest target's range, when the pixel has targets.
    pub truth: Option<f64>,
    /// Frames whose estimate was not flagged no-peak.
    pub valid: usize,
    pub mean_error: Option<f64>,
    pub sigma: Option<f64>,
    /// σ_R / R.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub n: usize,
    pub frames: usize,
    pub pixels: Vec<PixelAccuracy>,
    /// Root-mean-square of the per-pixel σ_R.
    pub pooled_sigma: Option<f64>,
    /// Pooled σ_R over the mean truth range.
    pub pooled_ratio: Option<f64>,
    pub bandwidth: f64,
    /// Nominal range resolution c / (2B).
    pub resolution: f64,
}

/// Mean and sample standard deviation, computed on data shifted by the
/// first value so identical inputs give exactly zero spread.
fn mean_and_sigma(xs: &[f64]) -> (f64, f64) {
    let shift = xs[0];
    let n = xs.len() as f64;
    let s1: f64 = xs.iter().map(|x| x - shift).sum();
    let s2: f64 = xs.iter().map(|x| (x - shift) * (x - shift)).sum();
    let mean = shift + s1 / n;
    let var = ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0);
    (mean, var.sqrt())
}

pub fn accuracy_report(maps: &[DepthMap], truth: &Scene) -> Result<AccuracyReport> {
    if maps.len() < 2 {
        return Err(Error::Report(format!(
            "need at least 2 frames, got {}",
            maps.len()
        )));
    }
    let n = truth.size();
    if let Some(m) = maps.iter().find(|m| m.n != n || m.estimates.len() != n * n) {
        return Err(Error::Report(format!(
            "depth map frame {} is {}x{}, scene is {n}x{n}",
            m.frame_index, m.n, m.n
        )));
    }
    let mut pixels = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let truth_range = truth.truth_range(row, col)?;
            let ranges: Vec<f64> = maps
                .iter()
                .map(|m| m.get(row, col))
                .filter(|e| e.quality != PeakQuality::NoPeak)
                .map(|e| e.range)
                .collect();
            let (mut mean_error, mut sigma, mut ratio) = (None, None, None);
            if let (Some(r), true) = (truth_range, ranges.len() >= 2) {
                let (mean, s) = mean_and_sigma(&ranges);
                mean_error = Some(mean - r);
                sigma = Some(s);
                ratio = Some(s / r);
            }
            pixels.push(PixelAccuracy {
                row,
                col,
                truth: truth_range,
                valid: ranges.len(),
                mean_error,
                sigma,
                ratio,
            });
        }
    }
    let stats: Vec<(f64, f64)> = pixels
        .iter()
        .filter_map(|p| Some((p.sigma?, p.truth?)))
        .collect();
    let (pooled_sigma, pooled_ratio) = if stats.is_empty() {
        (None, None)
    } else {
        let k = stats.len() as f64;
        let ps = (stats.iter().map(|(s, _)| s * s).sum::<f64>() / k).sqrt();
        let mean_truth = stats.iter().map(|(_, r)| r).sum::<f64>() / k;
        (Some(ps), Some(ps / mean_truth))
    };
    let bandwidth = maps[0].bandwidth;
    Ok(AccuracyReport {
        n,
        frames: maps.len(),
        pixels,
        pooled_sigma,
        pooled_ratio,
        bandwidth,
        resolution: SPEED_OF_LIGHT / (2.0 * bandwidth),
    })
}
