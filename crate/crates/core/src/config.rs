//! Experiment configuration file.
//!
//! TOML with flat sections. Every key is optional except `array.n`; missing
//! keys take the defaults below and unknown keys are rejected.
//!
//! ```toml
//! name = "example"          # optional label
//! seed = 42                 # master seed for every random stream
//!
//! [laser]
//! f0 = 0.0                  # Hz, baseband offset
//! bandwidth = 600e9         # Hz
//! period = 1e-3             # s
//! direction = "up"          # up | down | triangular
//! linewidth = 100e3         # Hz
//!
//! [hybrid]
//! phase_error = 0.0         # rad
//! amplitude_imbalance = 0.0
//! responsivity = 1.0        # A/W
//! lo_amplitude = 1.0
//!
//! [noise]
//! sigma = 0.0               # per-sample σ on I and Q, or:
//! # snr_db = 30.0           # per-sample electrical SNR of the strongest target
//!
//! [array]
//! n = 8
//! readout = "row-column"    # row-column | direct
//! leakage = 0.0
//!
//! [scene]
//! kind = "flat"             # empty | flat | staircase | targets
//! range = 1.0               # m (flat, staircase base)
//! step = 0.01               # m per column (staircase)
//! reflectivity = 1.0
//! targets = [{ row = 0, col = 0, range = 1.0, reflectivity = 1.0, phase = 0.0 }]
//! drift = "none"            # none | constant | ramp | sinusoid | random-walk
//! drift_amplitude = 0.0     # rad (constant, sinusoid)
//! drift_frequency = 0.0     # Hz (sinusoid)
//! drift_phase = 0.0         # rad (sinusoid)
//! drift_rate = 0.0          # rad/s (ramp)
//! drift_linewidth = 0.0     # Hz (random-walk)
//! drift_sampling = "continuous"   # continuous | per-chirp
//!
//! [sampling]
//! # fs = 1e6                # Hz; omitted means oversample × highest beat
//! oversample = 4.0
//! frames = 2
//!
//! [dsp]
//! window = "hann"           # rect | hann | blackman
//! pad_factor = 2
//! snr_threshold_db = 6.0
//! ambiguity_db = 3.0
//!
//! [output]
//! dir = "out"
//! spectra = false           # per-pixel spectrum CSVs for frame 0
//! traces = false            # raw I/Q trace files, one per frame
//! ```

use serde::{Deserialize, Serialize};

use crate::array::{Acquisition, ArrayConfig};
use crate::dsp::DspConfig;
use crate::error::{Error, Result};
use crate::laser::{phase_noise_path_stream, ChirpConfig, PhaseNoiseConfig, SweepDirection};
use crate::receiver::{required_sample_rate, sigma_for_snr, HybridConfig, NoiseConfig};
use crate::rng::derive_seed;
use crate::scene::{
    beat_frequency, round_trip_delay, Drift, DriftProfile, DriftSampling, Scene, Target,
};

/// Fewest samples per chirp an automatically chosen `fs` may give.
pub const MIN_AUTO_SAMPLES: f64 = 64.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaserSection {
    pub f0: f64,
    pub bandwidth: f64,
    pub period: f64,
    pub direction: SweepDirection,
    pub linewidth: f64,
}

impl Default for LaserSection {
    fn default() -> Self {
        Self {
            f0: 0.0,
            bandwidth: 600e9,
            period: 1e-3,
            direction: SweepDirection::Up,
            linewidth: 100e3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HybridSection {
    pub phase_error: f64,
    pub amplitude_imbalance: f64,
    pub responsivity: f64,
    pub lo_amplitude: f64,
}

impl Default for HybridSection {
    fn default() -> Self {
        Self {
            phase_error: 0.0,
            amplitude_imbalance: 0.0,
            responsivity: 1.0,
            lo_amplitude: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    Empty,
    #[default]
    Flat,
    Staircase,
    Targets,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftKind {
    #[default]
    None,
    Constant,
    Ramp,
    Sinusoid,
    RandomWalk,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftSamplingKind {
    #[default]
    Continuous,
    PerChirp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetEntry {
    pub row: usize,
    pub col: usize,
    pub range: f64,
    #[serde(default = "one")]
    pub reflectivity: f64,
    #[serde(default)]
    pub phase: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub kind: SceneKind,
    pub range: f64,
    pub step: f64,
    pub reflectivity: f64,
    pub drift: DriftKind,
    pub drift_amplitude: f64,
    pub drift_frequency: f64,
    pub drift_phase: f64,
    pub drift_rate: f64,
    pub drift_linewidth: f64,
    pub drift_sampling: DriftSamplingKind,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<TargetEntry>,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            kind: SceneKind::Flat,
            range: 1.0,
            step: 0.0,
            reflectivity: 1.0,
            drift: DriftKind::None,
            drift_amplitude: 0.0,
            drift_frequency: 0.0,
            drift_phase: 0.0,
            drift_rate: 0.0,
            drift_linewidth: 0.0,
            drift_sampling: DriftSamplingKind::Continuous,
            targets: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fs: Option<f64>,
    pub oversample: f64,
    pub frames: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            fs: None,
            oversample: 4.0,
            frames: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub spectra: bool,
    pub traces: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            spectra: false,
            traces: false,
        }
    }
}

/// The file as written, with defaults filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub laser: LaserSection,
    #[serde(default)]
    pub hybrid: HybridSection,
    #[serde(default)]
    pub noise: NoiseSection,
    pub array: ArrayConfig,
    #[serde(default)]
    pub scene: SceneSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub dsp: DspConfig,
    #[serde(default)]
    pub output: OutputSection,
}

impl ConfigFile {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config sections are plain data")
    }
}

/// Validated experiment with derived quantities resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub file: ConfigFile,
    pub chirp: ChirpConfig,
    pub hybrid: HybridConfig,
    pub array: ArrayConfig,
    pub dsp: DspConfig,
    pub scene: Scene,
    /// Sample rate actually used, Hz.
    pub fs: f64,
    /// Detector noise σ actually used.
    pub sigma: f64,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })?;
    ExperimentConfig::from_file(file)
}

fn finite(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(field, "must be finite"))
    }
}

impl ExperimentConfig {
    pub fn from_file(file: ConfigFile) -> Result<Self> {
        let l = &file.laser;
        let chirp = ChirpConfig {
            f0: l.f0,
            bandwidth: l.bandwidth,
            period: l.period,
            direction: l.direction,
        };
        chirp.validate()?;
        if !(l.linewidth >= 0.0 && l.linewidth.is_finite()) {
            return Err(Error::config("laser.linewidth", "must be finite and >= 0"));
        }

        let h = &file.hybrid;
        let hybrid = HybridConfig {
            phase_error: h.phase_error,
            amplitude_imbalance: h.amplitude_imbalance,
            responsivity: h.responsivity,
        };
        hybrid.validate()?;
        if !(h.lo_amplitude > 0.0 && h.lo_amplitude.is_finite()) {
            return Err(Error::config("hybrid.lo_amplitude", "must be > 0"));
        }

        file.array.validate()?;
        file.dsp.validate()?;
        let scene = build_scene(&file, &chirp)?;

        let s = &file.sampling;
        if s.frames == 0 {
            return Err(Error::config("sampling.frames", "must be >= 1"));
        }
        let max_delay = round_trip_delay(scene.max_range())?;
        let required = required_sample_rate(chirp.slope(), max_delay);
        let fs = match s.fs {
            Some(fs) => {
                if !(fs > 0.0 && fs.is_finite()) {
                    return Err(Error::config("sampling.fs", "must be finite and > 0"));
                }
                if !(fs > required) {
                    return Err(Error::Undersampled {
                        fs,
                        required_fs: required,
                    });
                }
                fs
            }
            None => {
                if !(s.oversample > required_sample_rate(1.0, 0.5) && s.oversample.is_finite()) {
                    return Err(Error::config(
                        "sampling.oversample",
                        format!("must exceed {}", required_sample_rate(1.0, 0.5)),
                    ));
                }
                let top = beat_frequency(scene.max_range(), chirp.slope());
                (s.oversample * top).max(MIN_AUTO_SAMPLES / chirp.period)
            }
        };
        if chirp.period * fs < 8.0 {
            return Err(Error::config(
                "sampling.fs",
                "must give at least 8 samples per chirp",
            ));
        }

        let sigma = match (file.noise.sigma, file.noise.snr_db) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "noise",
                    "set either `sigma` or `snr_db`, not both",
                ));
            }
            (Some(sigma), None) => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::config("noise.sigma", "must be finite and >= 0"));
                }
                sigma
            }
            (None, Some(snr)) => {
                let snr = finite("noise.snr_db", snr)?;
                let strongest = (0..scene.size())
                    .flat_map(|r| (0..scene.size()).map(move |c| (r, c)))
                    .flat_map(|(r, c)| {
                        scene
                            .targets(r, c)
                            .unwrap_or(&[])
                            .iter()
                            .map(|t| t.reflectivity)
                    })
                    .fold(0.0, f64::max);
                let strongest = if strongest > 0.0 { strongest } else { 1.0 };
                sigma_for_snr(h.responsivity * strongest * h.lo_amplitude, snr)
            }
            (None, None) => 0.0,
        };

        Ok(Self {
            chirp,
            hybrid,
            array: file.array.clone(),
            dsp: file.dsp.clone(),
            scene,
            fs,
            sigma,
            file,
        })
    }

    pub fn frames(&self) -> usize {
        self.file.sampling.frames
    }

    pub fn master_seed(&self) -> u64 {
        self.file.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Result<Self> {
        self.file.seed = seed;
        Self::from_file(self.file)
    }

    pub fn laser_seed(&self, frame: usize) -> u64 {
        derive_seed(self.file.seed, (frame as u64) << 1)
    }

    pub fn noise_seed(&self, frame: usize) -> u64 {
        derive_seed(self.file.seed, ((frame as u64) << 1) | 1)
    }

    pub fn acquisition(&self, frame: usize) -> Acquisition {
        Acquisition {
            chirp: self.chirp.clone(),
            hybrid: self.hybrid.clone(),
            lo_amplitude: self.file.hybrid.lo_amplitude,
            linewidth: self.file.laser.linewidth,
            laser_seed: self.laser_seed(frame),
            noise: NoiseConfig {
                sigma: self.sigma,
                seed: self.noise_seed(frame),
            },
            fs: self.fs,
        }
    }
}

fn build_scene(file: &ConfigFile, chirp: &ChirpConfig) -> Result<Scene> {
    let n = file.array.n;
    let sc = &file.scene;
    if !sc.targets.is_empty() && sc.kind != SceneKind::Targets {
        return Err(Error::config(
            "scene.targets",
            "only allowed with kind = \"targets\"",
        ));
    }
    let mut scene = match sc.kind {
        SceneKind::Empty => Scene::empty(n),
        SceneKind::Flat => Scene::flat(n, sc.range, sc.reflectivity)?,
        SceneKind::Staircase => {
            finite("scene.step", sc.step)?;
            Scene::staircase(n, sc.range, sc.step, sc.reflectivity)?
        }
        SceneKind::Targets => {
            let mut s = Scene::empty(n);
            for t in &sc.targets {
                s.add_target(t.row, t.col, Target::new(t.range, t.reflectivity, t.phase)?)
                    .map_err(|e| match e {
                        Error::Index { row, col, n } => Error::config(
                            "scene.targets",
                            format!("pixel ({row}, {col}) outside {n}x{n} array"),
                        ),
                        other => other,
                    })?;
            }
            s
        }
    };
    if scene.max_range() > 0.0 && !(round_trip_delay(scene.max_range())? < chirp.period) {
        return Err(Error::config(
            "scene.range",
            "round-trip delay must be shorter than laser.period",
        ));
    }

    let sampling = match sc.drift_sampling {
        DriftSamplingKind::Continuous => DriftSampling::Continuous,
        DriftSamplingKind::PerChirp => DriftSampling::PerChirp,
    };
    let profile = match sc.drift {
        DriftKind::None => DriftProfile::None,
        DriftKind::Constant => {
            DriftProfile::Constant(finite("scene.drift_amplitude", sc.drift_amplitude)?)
        }
        DriftKind::Ramp => DriftProfile::Ramp(finite("scene.drift_rate", sc.drift_rate)?),
        DriftKind::Sinusoid => DriftProfile::Sinusoid {
            amplitude: finite("scene.drift_amplitude", sc.drift_amplitude)?,
            frequency: finite("scene.drift_frequency", sc.drift_frequency)?,
            phase: finite("scene.drift_phase", sc.drift_phase)?,
        },
        DriftKind::RandomWalk => {
            // 64 steps per chirp across the whole frame
            let dt = chirp.period / 64.0;
            let frame = file.array.slots_per_frame() as f64 * chirp.cycle_duration();
            let count = (frame / dt).ceil() as usize + 2;
            let cfg = PhaseNoiseConfig {
                linewidth: sc.drift_linewidth,
                seed: derive_seed(file.seed, u64::MAX),
                dt,
            };
            cfg.validate()
                .map_err(|_| Error::config("scene.drift_linewidth", "must be finite and >= 0"))?;
            DriftProfile::Replay(phase_noise_path_stream(count, &cfg, 0, 0.0)?)
        }
    };
    scene.drift = Drift::new(profile, sampling);
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[laser]
bandwidth = 600e9
period = 1e-3

[array]
n = 8

[scene]
kind = "flat"
range = 1.0
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.array.n, 8);
        assert_eq!(cfg.file.laser.linewidth, 100e3);
        assert_eq!(cfg.dsp, DspConfig::default());
        assert_eq!(cfg.frames(), 2);
        assert_eq!(cfg.sigma, 0.0);
        let fb = beat_frequency(1.0, cfg.chirp.slope());
        assert!((cfg.fs - 4.0 * fb).abs() < 1e-3);
        assert_eq!(cfg.scene.targets(7, 7).unwrap().len(), 1);
    }

    #[test]
    fn low_fs_names_required_rate() {
        let text = format!("{MINIMAL}\n[sampling]\nfs = 1e6\n");
        let err = parse_config(&text).unwrap_err();
        let required = required_sample_rate(600e9 / 1e-3, round_trip_delay(1.0).unwrap());
        let msg = err.to_string();
        assert!(matches!(err, Error::Undersampled { .. }));
        assert!(msg.contains(&format!("{required}")), "{msg}");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("[lazer]\nbandwidth = 1e9\n[array]\nn = 2\n").unwrap_err();
        match &err {
            Error::Parse { line, message } => {
                assert!(message.contains("lazer"), "{message}");
                assert_eq!(*line, 1);
            }
            e => panic!("unexpected {e}"),
        }
        let err = parse_config("[array]\nn = 2\nlekage = 0.1\n").unwrap_err();
        match &err {
            Error::Parse { line, message } => {
                assert!(message.contains("lekage"));
                assert_eq!(*line, 3);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn syntax_error_has_line() {
        let err = parse_config("[array]\nn = 2\n\n[laser\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err:?}");
    }

    #[test]
    fn validation_names_field() {
        let err = parse_config("[laser]\nbandwidth = 0.0\n[array]\nn = 2\n").unwrap_err();
        assert!(err.to_string().contains("laser.bandwidth"));
        let err = parse_config("[array]\nn = 2\nleakage = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("array.leakage"));
        let err = parse_config("[array]\nn = 2\n[noise]\nsigma = 0.1\nsnr_db = 10\n").unwrap_err();
        assert!(err.is_config_error());
    }

    #[test]
    fn explicit_targets() {
        let text = r#"
[laser]
bandwidth = 10e9
[array]
n = 2
[scene]
kind = "targets"
targets = [
  { row = 0, col = 1, range = 1.5 },
  { row = 1, col = 1, range = 2.0, reflectivity = 0.5, phase = 0.25 },
]
"#;
        let cfg = parse_config(text).unwrap();
        assert!(cfg.scene.targets(0, 0).unwrap().is_empty());
        assert_eq!(cfg.scene.targets(1, 1).unwrap()[0].reflectivity, 0.5);
        let bad = text.replace("row = 1, col = 1", "row = 2, col = 1");
        assert!(parse_config(&bad)
            .unwrap_err()
            .to_string()
            .contains("scene.targets"));
    }

    #[test]
    fn snr_sets_sigma() {
        let cfg = parse_config("[laser]\nbandwidth = 10e9\n[array]\nn = 1\n[noise]\nsnr_db = 20\n")
            .unwrap();
        assert!((cfg.sigma - sigma_for_snr(1.0, 20.0)).abs() < 1e-15);
    }

    #[test]
    fn normalized_toml_round_trips() {
        let cfg = parse_config(MINIMAL).unwrap();
        let again = parse_config(&cfg.file.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn frame_seeds_differ() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_ne!(cfg.laser_seed(0), cfg.laser_seed(1));
        assert_ne!(cfg.noise_seed(0), cfg.laser_seed(0));
    }
}
