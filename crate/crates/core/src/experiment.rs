//! Experiment runners behind the command-line tool: simulate, sweep,
//! analyze and the built-in recipes.
//!
//! Outputs are a pure function of the configuration text and master seed.
//! Nothing time- or host-dependent is written, and worker count never
//! changes a byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::array::{build_readout_schedule, interconnect_count, readout_frame, ReadoutMode};
use crate::config::{parse_config, ExperimentConfig, MIN_AUTO_SAMPLES};
use crate::dsp::{self, accuracy_report, build_depth_map, AccuracyReport, DepthMap, DspConfig};
use crate::error::{Error, Result};
use crate::formats;
use crate::laser::ChirpConfig;
use crate::receiver::{image_rejection_ratio, simulate_echoes, BeatContext, HybridConfig};
use crate::scene::{beat_frequency, round_trip_delay, Drift, Echo, SPEED_OF_LIGHT};

pub const TOOL_NAME: &str = "iqlidar";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Peaks more than this far below the strongest one are not counted when
/// deciding whether two targets are resolved. Hann sidelobes sit near −31 dB.
pub const RESOLUTION_FLOOR_DB: f64 = 12.0;

/// Separations, in units of c/(2B), that must resolve.
pub const RESOLVED_FRACTIONS: [f64; 3] = [0.9, 1.0, 1.1];
/// Separation, in units of c/(2B), that must not resolve.
pub const UNRESOLVED_FRACTION: f64 = 0.25;

/// Nominal FMCW range resolution c/(2B).
pub fn nominal_resolution(bandwidth: f64) -> f64 {
    SPEED_OF_LIGHT / (2.0 * bandwidth)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Counts distinct spectral peaks produced by two equal, in-phase targets at
/// `base` and `base + separation` in one noiseless pixel.
///
/// The sample rate is `oversample` times the farther target's beat. Only
/// peaks within three unpadded bins of the two expected beats are counted.
pub fn two_target_peak_count(
    chirp: &ChirpConfig,
    hybrid: &HybridConfig,
    base: f64,
    separation: f64,
    oversample: f64,
    dsp: &DspConfig,
) -> Result<usize> {
    let far = base + separation;
    let slope = chirp.slope();
    let fs = (oversample * beat_frequency(far, slope)).max(MIN_AUTO_SAMPLES / chirp.period);
    let echoes = [
        Echo {
            delay: round_trip_delay(base)?,
            amplitude: 1.0,
            phase: 0.0,
        },
        Echo {
            delay: round_trip_delay(far)?,
            amplitude: 1.0,
            phase: 0.0,
        },
    ];
    let none = Drift::none();
    let trace = simulate_echoes(&echoes, &BeatContext::new(chirp, hybrid, &none, fs))?;
    let windowed = dsp::window(&trace, dsp.window)?;
    drop(trace);
    let spec = dsp::beat_spectrum(&windowed, dsp.pad_factor)?;
    drop(windowed);
    let guard = 3.0 / chirp.period;
    let (lo, hi) = (
        beat_frequency(base, slope) - guard,
        beat_frequency(far, slope) + guard,
    );
    Ok(dsp::find_peaks(&spec, RESOLUTION_FLOOR_DB)
        .iter()
        .filter(|p| p.frequency >= lo && p.frequency <= hi)
        .count())
}

pub fn two_targets_resolved(
    chirp: &ChirpConfig,
    hybrid: &HybridConfig,
    base: f64,
    separation: f64,
    oversample: f64,
    dsp: &DspConfig,
) -> Result<bool> {
    Ok(two_target_peak_count(chirp, hybrid, base, separation, oversample, dsp)? >= 2)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolutionCheck {
    /// c/(2B), m.
    pub nominal: f64,
    /// Smallest scanned separation from which every larger one resolves, m.
    pub measured: Option<f64>,
    /// Resolved at 0.9, 1.0 and 1.1 × c/(2B).
    pub resolved_near_nominal: bool,
    /// Not resolved at 0.25 × c/(2B).
    pub merged_at_quarter: bool,
}

impl ResolutionCheck {
    pub fn pass(&self) -> bool {
        self.resolved_near_nominal && self.merged_at_quarter
    }
}

/// Two-target resolution test for a chirp. Range resolution of a linear
/// chirp does not depend on range, so targets are placed at 64·c/(2B)
/// to keep the beat, and therefore the sample count, small.
pub fn resolution_check(
    chirp: &ChirpConfig,
    hybrid: &HybridConfig,
    dsp: &DspConfig,
) -> Result<ResolutionCheck> {
    let nominal = nominal_resolution(chirp.bandwidth);
    let base = 64.0 * nominal;
    let resolved = |frac: f64| two_targets_resolved(chirp, hybrid, base, frac * nominal, 4.0, dsp);
    let mut resolved_near_nominal = true;
    for frac in RESOLVED_FRACTIONS {
        resolved_near_nominal &= resolved(frac)?;
    }
    let merged_at_quarter = !resolved(UNRESOLVED_FRACTION)?;
    // scan 0.25..=1.50 in steps of 0.01 from the top down
    let mut measured = None;
    for step in (25..=150).rev() {
        let frac = step as f64 / 100.0;
        if !resolved(frac)? {
            break;
        }
        measured = Some(frac * nominal);
    }
    Ok(ResolutionCheck {
        nominal,
        measured,
        resolved_near_nominal,
        merged_at_quarter,
    })
}

/// Image rejection of the configured hybrid, measured on a noiseless single
/// target placed 64 resolution cells out.
pub fn measure_image_rejection(chirp: &ChirpConfig, hybrid: &HybridConfig) -> Result<f64> {
    let range = 64.0 * nominal_resolution(chirp.bandwidth);
    let fs = (4.0 * beat_frequency(range, chirp.slope())).max(MIN_AUTO_SAMPLES / chirp.period);
    let none = Drift::none();
    let echo = Echo {
        delay: round_trip_delay(range)?,
        amplitude: 1.0,
        phase: 0.0,
    };
    let trace = simulate_echoes(&[echo], &BeatContext::new(chirp, hybrid, &none, fs))?;
    image_rejection_ratio(&trace)
}

#[derive(Serialize)]
struct FrameSeeds {
    index: usize,
    laser_seed: u64,
    noise_seed: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    name: Option<&'a str>,
    master_seed: u64,
    fs_hz: f64,
    noise_sigma: f64,
    frames: Vec<FrameSeeds>,
    /// Normalized configuration; parsing it reproduces every artifact.
    config: String,
    artifacts: Vec<String>,
}

#[derive(Serialize)]
struct Summary {
    n: usize,
    readout: &'static str,
    frames: usize,
    interconnects_row_column: usize,
    interconnects_direct: usize,
    bandwidth_hz: f64,
    nominal_resolution_m: f64,
    frame_duration_s: f64,
    pixels_ok: usize,
    pixels_no_peak: usize,
    pixels_ambiguous: usize,
    pooled_sigma_m: Option<f64>,
    pooled_sigma_over_range: Option<f64>,
}

/// What a simulate or analyze run produced.
#[derive(Debug)]
pub struct RunOutput {
    pub maps: Vec<DepthMap>,
    pub report: Option<AccuracyReport>,
    pub artifacts: Vec<PathBuf>,
}

struct ArtifactWriter {
    root: PathBuf,
    written: Vec<String>,
}

impl ArtifactWriter {
    fn new(root: &Path) -> Result<Self> {
        ensure_dir(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            ensure_dir(parent)?;
        }
        formats::write_file(&path, bytes)?;
        self.written.push(rel.to_string());
        Ok(())
    }

    fn finish(mut self, cfg: &ExperimentConfig, command: &str) -> Result<Vec<PathBuf>> {
        self.write("config.toml", cfg.file.to_toml())?;
        let mut artifacts = self.written.clone();
        artifacts.push("manifest.json".into());
        artifacts.sort();
        let manifest = Manifest {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            command,
            name: cfg.file.name.as_deref(),
            master_seed: cfg.master_seed(),
            fs_hz: cfg.fs,
            noise_sigma: cfg.sigma,
            frames: (0..cfg.frames())
                .map(|f| FrameSeeds {
                    index: f,
                    laser_seed: cfg.laser_seed(f),
                    noise_seed: cfg.noise_seed(f),
                })
                .collect(),
            config: cfg.file.to_toml(),
            artifacts: artifacts.clone(),
        };
        let mut json = serde_json::to_string_pretty(&manifest).expect("manifest is plain data");
        json.push('\n');
        self.write("manifest.json", json)?;
        Ok(artifacts.iter().map(|a| self.root.join(a)).collect())
    }
}

fn write_products(
    cfg: &ExperimentConfig,
    maps: &[DepthMap],
    w: &mut ArtifactWriter,
) -> Result<Option<AccuracyReport>> {
    let first = &maps[0];
    w.write("depth_map.csv", formats::depth_map_csv(first))?;
    w.write("depth_map.bin", formats::depth_map_bin(first))?;
    for m in maps.iter().skip(1) {
        w.write(
            &format!("frames/depth_map_{:04}.csv", m.frame_index),
            formats::depth_map_csv(m),
        )?;
    }
    let report = if maps.len() >= 2 {
        let r = accuracy_report(maps, &cfg.scene)?;
        w.write("accuracy_report.csv", formats::accuracy_csv(&r))?;
        Some(r)
    } else {
        None
    };
    let count = |q: dsp::PeakQuality| first.estimates.iter().filter(|e| e.quality == q).count();
    let n = cfg.array.n;
    let summary = Summary {
        n,
        readout: cfg.array.readout.name(),
        frames: maps.len(),
        interconnects_row_column: interconnect_count(n, ReadoutMode::RowColumn)?,
        interconnects_direct: interconnect_count(n, ReadoutMode::Direct)?,
        bandwidth_hz: cfg.chirp.bandwidth,
        nominal_resolution_m: nominal_resolution(cfg.chirp.bandwidth),
        frame_duration_s: cfg.array.slots_per_frame() as f64 * cfg.chirp.cycle_duration(),
        pixels_ok: count(dsp::PeakQuality::Ok),
        pixels_no_peak: count(dsp::PeakQuality::NoPeak),
        pixels_ambiguous: count(dsp::PeakQuality::Ambiguous),
        pooled_sigma_m: report.as_ref().and_then(|r| r.pooled_sigma),
        pooled_sigma_over_range: report.as_ref().and_then(|r| r.pooled_ratio),
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summary is plain data");
    json.push('\n');
    w.write("summary.json", json)?;
    Ok(report)
}

/// Simulates every configured frame and writes depth maps, optional spectra
/// and traces, the accuracy report and a manifest under `out`.
pub fn run_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutput> {
    let mut w = ArtifactWriter::new(out)?;
    let schedule = build_readout_schedule(&cfg.array)?;
    let mut maps = Vec::with_capacity(cfg.frames());
    for f in 0..cfg.frames() {
        let frame = readout_frame(&cfg.scene, &schedule, &cfg.acquisition(f), f)?;
        if cfg.file.output.traces {
            w.write(
                &format!("traces/frame_{f:04}.iqt"),
                formats::encode_frame(&frame),
            )?;
        }
        if cfg.file.output.spectra && f == 0 {
            for t in &frame.traces {
                let spec =
                    dsp::beat_spectrum(&dsp::window(t, cfg.dsp.window)?, cfg.dsp.pad_factor)?;
                w.write(
                    &format!("spectra/pixel_r{:02}_c{:02}.csv", t.meta.row, t.meta.col),
                    formats::spectrum_csv(&spec),
                )?;
            }
        }
        maps.push(build_depth_map(&frame, &cfg.dsp)?);
    }
    let report = write_products(cfg, &maps, &mut w)?;
    let artifacts = w.finish(cfg, "simulate")?;
    Ok(RunOutput {
        maps,
        report,
        artifacts,
    })
}

/// Recomputes depth maps and statistics from the traces of a previous
/// `simulate` run in `input`. `override_cfg` replaces the stored
/// configuration, e.g. to try other DSP settings.
pub fn run_analyze(
    input: &Path,
    out: &Path,
    override_cfg: Option<&ExperimentConfig>,
) -> Result<RunOutput> {
    let cfg = match override_cfg {
        Some(c) => c.clone(),
        None => {
            let path = input.join("config.toml");
            let bytes = formats::read_file(&path)?;
            let text = String::from_utf8(bytes).map_err(|_| Error::Format {
                path: path.clone(),
                message: "not UTF-8".into(),
            })?;
            parse_config(&text)?
        }
    };
    let mut maps = Vec::with_capacity(cfg.frames());
    for f in 0..cfg.frames() {
        let path = input.join(format!("traces/frame_{f:04}.iqt"));
        let frame = formats::decode_frame(&formats::read_file(&path)?, &cfg.chirp, &path)?;
        if frame.n != cfg.array.n {
            return Err(Error::Frame(format!(
                "{} holds a {}x{} frame, config expects {}x{}",
                path.display(),
                frame.n,
                frame.n,
                cfg.array.n,
                cfg.array.n
            )));
        }
        maps.push(build_depth_map(&frame, &cfg.dsp)?);
    }
    let mut w = ArtifactWriter::new(out)?;
    let report = write_products(&cfg, &maps, &mut w)?;
    let artifacts = w.finish(&cfg, "analyze")?;
    Ok(RunOutput {
        maps,
        report,
        artifacts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Bandwidth,
    Snr,
    ArraySize,
    Leakage,
    Linewidth,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Bandwidth => "B",
            SweepParam::Snr => "snr",
            SweepParam::ArraySize => "N",
            SweepParam::Leakage => "leakage",
            SweepParam::Linewidth => "linewidth",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B" => Ok(SweepParam::Bandwidth),
            "snr" => Ok(SweepParam::Snr),
            "N" => Ok(SweepParam::ArraySize),
            "leakage" => Ok(SweepParam::Leakage),
            "linewidth" => Ok(SweepParam::Linewidth),
            other => Err(Error::Usage(format!(
                "unknown sweep parameter `{other}`, expected one of B, snr, N, leakage, linewidth"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub sigma: Option<f64>,
    pub sigma_over_range: Option<f64>,
    pub resolution: ResolutionCheck,
    pub irr_db: f64,
    pub interconnects_row_column: usize,
    pub interconnects_direct: usize,
}

fn apply_param(base: &ExperimentConfig, param: SweepParam, value: f64) -> Result<ExperimentConfig> {
    let mut file = base.file.clone();
    match param {
        SweepParam::Bandwidth => file.laser.bandwidth = value,
        SweepParam::Snr => {
            file.noise.sigma = None;
            file.noise.snr_db = Some(value);
        }
        SweepParam::ArraySize => {
            if !(value >= 1.0 && value.fract() == 0.0 && value <= 4096.0) {
                return Err(Error::Usage(format!(
                    "N must be a positive integer, got {value}"
                )));
            }
            file.array.n = value as usize;
        }
        SweepParam::Leakage => file.array.leakage = value,
        SweepParam::Linewidth => file.laser.linewidth = value,
    }
    file.sampling.frames = file.sampling.frames.max(2);
    ExperimentConfig::from_file(file)
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = format!(
        "{},sigma_r_m,sigma_r_over_r,resolution_m,measured_resolution_m,resolution_check,irr_db,\
         interconnects_row_column,interconnects_direct\n",
        param.name()
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.value,
            opt(r.sigma),
            opt(r.sigma_over_range),
            r.resolution.nominal,
            opt(r.resolution.measured),
            if r.resolution.pass() { "pass" } else { "fail" },
            r.irr_db,
            r.interconnects_row_column,
            r.interconnects_direct
        );
    }
    out
}

/// Re-runs the experiment once per value of `param` and writes
/// `sweep_<param>.csv` under `out`. Each point uses at least two frames.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
    out: &Path,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Usage("sweep needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let point = apply_param(cfg, param, value)?;
        let schedule = build_readout_schedule(&point.array)?;
        let maps = (0..point.frames())
            .map(|f| {
                let frame = readout_frame(&point.scene, &schedule, &point.acquisition(f), f)?;
                build_depth_map(&frame, &point.dsp)
            })
            .collect::<Result<Vec<_>>>()?;
        let report = accuracy_report(&maps, &point.scene)?;
        rows.push(SweepRow {
            value,
            sigma: report.pooled_sigma,
            sigma_over_range: report.pooled_ratio,
            resolution: resolution_check(&point.chirp, &point.hybrid, &point.dsp)?,
            irr_db: measure_image_rejection(&point.chirp, &point.hybrid)?,
            interconnects_row_column: interconnect_count(point.array.n, ReadoutMode::RowColumn)?,
            interconnects_direct: interconnect_count(point.array.n, ReadoutMode::Direct)?,
        });
    }
    let mut w = ArtifactWriter::new(out)?;
    w.write(
        &format!("sweep_{}.csv", param.name()),
        sweep_csv(param, &rows),
    )?;
    w.finish(cfg, "sweep")?;
    Ok(rows)
}

/// A built-in experiment.
#[derive(Clone, Copy, Debug)]
pub struct Recipe {
    pub name: &'static str,
    pub description: &'static str,
    pub config: &'static str,
}

impl Recipe {
    pub fn parse(&self) -> Result<ExperimentConfig> {
        parse_config(self.config)
    }
}

pub const RECIPES: &[Recipe] = &[
    Recipe {
        name: "paper_8x8_1m",
        description: "8x8 row-column array, flat target at 1 m, 10 GHz chirp, 100 kHz laser, 10 dB per-sample SNR",
        config: r#"name = "paper_8x8_1m"
seed = 1

[laser]
bandwidth = 10e9
period = 1e-3
linewidth = 100e3

[noise]
snr_db = 10.0

[array]
n = 8
readout = "row-column"

[scene]
kind = "flat"
range = 1.0

[sampling]
frames = 4
"#,
    },
    Recipe {
        name: "paper_resolution_250um",
        description: "single pixel, targets at 1.000 m and 1.00025 m, 600 GHz chirp",
        config: r#"name = "paper_resolution_250um"
seed = 2

[laser]
bandwidth = 600e9
period = 1e-3
linewidth = 0.0

[array]
n = 1
readout = "direct"

[scene]
kind = "targets"
targets = [
  { row = 0, col = 0, range = 1.0 },
  { row = 0, col = 0, range = 1.00025 },
]

[sampling]
frames = 1
"#,
    },
    Recipe {
        name: "drift_immunity_8x8",
        description: "8x8 staircase scene under a ±π sinusoidal relative-path drift held per chirp",
        config: r#"name = "drift_immunity_8x8"
seed = 3

[laser]
bandwidth = 10e9
period = 1e-3
linewidth = 0.0

[array]
n = 8

[scene]
kind = "staircase"
range = 1.0
step = 0.05
drift = "sinusoid"
drift_amplitude = 3.141592653589793
drift_frequency = 125.0
drift_sampling = "per-chirp"

[sampling]
frames = 1
"#,
    },
    Recipe {
        name: "iq_imbalance",
        description: "single pixel with a 0.1 rad hybrid phase error, spectra written",
        config: r#"name = "iq_imbalance"
seed = 4

[laser]
bandwidth = 10e9
period = 1e-3
linewidth = 0.0

[hybrid]
phase_error = 0.1

[array]
n = 1
readout = "direct"

[scene]
kind = "flat"
range = 1.0

[sampling]
frames = 1

[output]
spectra = true
"#,
    },
    Recipe {
        name: "column_leakage",
        description: "8x8 staircase with 10% same-column leakage on the row-column readout",
        config: r#"name = "column_leakage"
seed = 5

[laser]
bandwidth = 10e9
period = 1e-3
linewidth = 0.0

[array]
n = 8
leakage = 0.1

[scene]
kind = "staircase"
range = 1.0
step = 0.05

[sampling]
frames = 1

[output]
spectra = true
"#,
    },
];

pub fn recipe(name: &str) -> Result<&'static Recipe> {
    RECIPES.iter().find(|r| r.name == name).ok_or_else(|| {
        let names: Vec<&str> = RECIPES.iter().map(|r| r.name).collect();
        Error::Usage(format!(
            "unknown recipe `{name}`, available: {}",
            names.join(", ")
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recipes_parse() {
        for r in RECIPES {
            r.parse().unwrap_or_else(|e| panic!("{}: {e}", r.name));
        }
        assert!(recipe("nope").is_err());
    }

    #[test]
    fn sweep_params() {
        assert_eq!("B".parse::<SweepParam>().unwrap(), SweepParam::Bandwidth);
        assert!(matches!(
            "bandwidth".parse::<SweepParam>(),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn nominal_resolution_at_600_ghz() {
        let r = nominal_resolution(600e9);
        assert!((r - 249.8e-6).abs() < 0.1e-6, "{r}");
    }
}
