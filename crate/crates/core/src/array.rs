//! N×N aperture with row-column addressing and time-multiplexed readout.
//!
//! In row-column mode one row is selected per time slot and all N column
//! lines are read in parallel for one full chirp, so a frame takes N chirp
//! periods over 2N interconnects. Direct mode wires every pixel out and
//! reads the whole array during a single chirp.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laser::{phase_noise_path_stream, ChirpConfig, PhaseNoiseConfig};
use crate::receiver::{
    add_detector_noise, check_sampling, simulate_echoes, BeatContext, HybridConfig, IqTrace,
    NoiseConfig, TraceMeta,
};
use crate::rng::{pixel_stream, StreamPurpose};
use crate::scene::{round_trip_delay, scene_response, Scene};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadoutMode {
    #[default]
    RowColumn,
    Direct,
}

impl ReadoutMode {
    pub fn name(self) -> &'static str {
        match self {
            ReadoutMode::RowColumn => "row-column",
            ReadoutMode::Direct => "direct",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    /// Pixels per side.
    pub n: usize,
    #[serde(default)]
    pub readout: ReadoutMode,
    /// Fraction of each unselected pixel's signal that couples onto its
    /// column line.
    #[serde(default)]
    pub leakage: f64,
}

impl ArrayConfig {
    pub fn new(n: usize, readout: ReadoutMode) -> Self {
        Self {
            n,
            readout,
            leakage: 0.0,
        }
    }

    pub fn with_leakage(mut self, leakage: f64) -> Self {
        self.leakage = leakage;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("array.n", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.leakage) {
            return Err(Error::config("array.leakage", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn slots_per_frame(&self) -> usize {
        match self.readout {
            ReadoutMode::RowColumn => self.n,
            ReadoutMode::Direct => 1,
        }
    }
}

/// Electrical interconnects needed to read an N×N array: 2N row/column
/// lines for row-column addressing, N² for direct wiring. Row-column uses
/// fewer lines from N = 3 upward.
pub fn interconnect_count(n: usize, mode: ReadoutMode) -> Result<usize> {
    if n == 0 {
        return Err(Error::Domain("array size must be >= 1".into()));
    }
    Ok(match mode {
        ReadoutMode::RowColumn => 2 * n,
        ReadoutMode::Direct => n * n,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slot {
    pub index: usize,
    /// Rows selected during the slot.
    pub rows: Vec<usize>,
    /// Column lines sampled.
    pub columns: Vec<usize>,
    pub chirp_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutSchedule {
    pub n: usize,
    pub mode: ReadoutMode,
    pub leakage: f64,
    pub slots: Vec<Slot>,
}

impl ReadoutSchedule {
    pub fn frame_duration(&self, chirp: &ChirpConfig) -> f64 {
        self.slots.len() as f64 * chirp.cycle_duration()
    }

    /// `(row, col, slot)` for every pixel read, in schedule order.
    pub fn reads(&self) -> impl Iterator<Item = (usize, usize, &Slot)> + '_ {
        self.slots.iter().flat_map(|s| {
            s.rows
                .iter()
                .flat_map(move |&r| s.columns.iter().map(move |&c| (r, c, s)))
        })
    }
}

/// Rows are activated in ascending order, slot `r` on chirp `r`.
pub fn build_readout_schedule(cfg: &ArrayConfig) -> Result<ReadoutSchedule> {
    cfg.validate()?;
    let n = cfg.n;
    let columns: Vec<usize> = (0..n).collect();
    let slots = match cfg.readout {
        ReadoutMode::RowColumn => (0..n)
            .map(|r| Slot {
                index: r,
                rows: vec![r],
                columns: columns.clone(),
                chirp_index: r,
            })
            .collect(),
        ReadoutMode::Direct => vec![Slot {
            index: 0,
            rows: (0..n).collect(),
            columns,
            chirp_index: 0,
        }],
    };
    Ok(ReadoutSchedule {
        n,
        mode: cfg.readout,
        leakage: cfg.leakage,
        slots,
    })
}

/// Source, receiver and sampling settings shared by every pixel of a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Acquisition {
    pub chirp: ChirpConfig,
    pub hybrid: HybridConfig,
    pub lo_amplitude: f64,
    /// Laser linewidth, Hz.
    pub linewidth: f64,
    pub laser_seed: u64,
    pub noise: NoiseConfig,
    pub fs: f64,
}

impl Acquisition {
    pub fn noiseless(chirp: ChirpConfig, fs: f64) -> Self {
        Self {
            chirp,
            hybrid: HybridConfig::ideal(),
            lo_amplitude: 1.0,
            linewidth: 0.0,
            laser_seed: 0,
            noise: NoiseConfig::noiseless(),
            fs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chirp.validate()?;
        self.hybrid.validate()?;
        self.noise.validate()?;
        if !(self.lo_amplitude > 0.0 && self.lo_amplitude.is_finite()) {
            return Err(Error::config("hybrid.lo_amplitude", "must be > 0"));
        }
        if !(self.linewidth >= 0.0 && self.linewidth.is_finite()) {
            return Err(Error::config("laser.linewidth", "must be finite and >= 0"));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::config("sampling.fs", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// All pixel traces of one frame, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub n: usize,
    pub chirp: ChirpConfig,
    pub traces: Vec<IqTrace>,
    pub frame_index: usize,
    pub laser_seed: u64,
    pub noise_seed: u64,
}

impl Frame {
    pub fn trace(&self, row: usize, col: usize) -> &IqTrace {
        &self.traces[row * self.n + col]
    }

    pub fn check_complete(&self) -> Result<()> {
        if self.n == 0 || self.traces.len() != self.n * self.n {
            return Err(Error::Frame(format!(
                "expected {} traces for a {}x{} array, found {}",
                self.n * self.n,
                self.n,
                self.n,
                self.traces.len()
            )));
        }
        for (idx, t) in self.traces.iter().enumerate() {
            let (row, col) = (idx / self.n, idx % self.n);
            if t.meta.row != row || t.meta.col != col {
                return Err(Error::Frame(format!(
                    "trace {idx} is labelled ({}, {}), expected ({row}, {col})",
                    t.meta.row, t.meta.col
                )));
            }
            if t.is_empty() || t.i.len() != t.q.len() {
                return Err(Error::Frame(format!(
                    "trace ({row}, {col}) is empty or ragged"
                )));
            }
        }
        Ok(())
    }
}

/// Noise-free photocurrent of one pixel during a chirp starting at `chirp_start`.
fn pixel_signal(
    scene: &Scene,
    row: usize,
    col: usize,
    acq: &Acquisition,
    chirp_start: f64,
) -> Result<IqTrace> {
    let echoes = scene_response(row, col, scene)?;
    let pixel = row * scene.size() + col;
    let max_delay = echoes.iter().map(|e| e.delay).fold(0.0, f64::max);
    let path = if acq.linewidth > 0.0 && !echoes.is_empty() {
        let dt = 1.0 / acq.fs;
        let lead = (max_delay / dt).ceil() + 1.0;
        let count = ((acq.chirp.period / dt).ceil() + lead) as usize + 2;
        let cfg = PhaseNoiseConfig {
            linewidth: acq.linewidth,
            seed: acq.laser_seed,
            dt,
        };
        Some(phase_noise_path_stream(
            count,
            &cfg,
            pixel_stream(pixel, StreamPurpose::LaserPhase),
            -lead * dt,
        )?)
    } else {
        None
    };
    let ctx = BeatContext {
        chirp: &acq.chirp,
        hybrid: &acq.hybrid,
        fs: acq.fs,
        lo_amplitude: acq.lo_amplitude,
        drift: &scene.drift,
        chirp_start,
        phase_noise: path.as_ref(),
    };
    simulate_echoes(&echoes, &ctx)
}

/// Simulates one frame following `schedule`.
///
/// Each selected pixel is synthesized during its slot's chirp. In
/// row-column mode with leakage `L > 0`, a read column also picks up `L`
/// times the signal of every unselected pixel in the same column. Detector
/// noise is keyed by pixel, so a pixel's noise does not depend on which
/// slot reads it.
pub fn readout_frame(
    scene: &Scene,
    schedule: &ReadoutSchedule,
    acq: &Acquisition,
    frame_index: usize,
) -> Result<Frame> {
    acq.validate()?;
    let n = schedule.n;
    if scene.size() != n {
        return Err(Error::config(
            "array.n",
            format!("schedule is {n}x{n} but scene is {0}x{0}", scene.size()),
        ));
    }
    check_sampling(&acq.chirp, round_trip_delay(scene.max_range())?, acq.fs)?;
    scene
        .drift
        .validate_for(schedule.frame_duration(&acq.chirp))?;

    let leak = schedule.mode == ReadoutMode::RowColumn && schedule.leakage > 0.0;
    let per_slot: Vec<Vec<(usize, IqTrace)>> = schedule
        .slots
        .par_iter()
        .map(|slot| {
            let chirp_start = slot.chirp_index as f64 * acq.chirp.cycle_duration();
            slot.columns
                .par_iter()
                .map(|&col| {
                    let column: Option<Vec<IqTrace>> = if leak {
                        Some(
                            (0..n)
                                .map(|r| pixel_signal(scene, r, col, acq, chirp_start))
                                .collect::<Result<_>>()?,
                        )
                    } else {
                        None
                    };
                    slot.rows
                        .iter()
                        .map(|&row| {
                            let mut trace = match &column {
                                Some(col_traces) => {
                                    let mut t = col_traces[row].clone();
                                    for (r, other) in col_traces.iter().enumerate() {
                                        if r != row {
                                            t.add_scaled(other, schedule.leakage);
                                        }
                                    }
                                    t
                                }
                                None => pixel_signal(scene, row, col, acq, chirp_start)?,
                            };
                            let pixel = row * n + col;
                            add_detector_noise(
                                &mut trace,
                                &acq.noise,
                                pixel_stream(pixel, StreamPurpose::DetectorNoise),
                            );
                            trace.meta = TraceMeta {
                                row,
                                col,
                                chirp: slot.chirp_index,
                            };
                            Ok((pixel, trace))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
                .map(|v| v.into_iter().flatten().collect())
        })
        .collect::<Result<_>>()?;

    let mut slots: Vec<Option<IqTrace>> = vec![None; n * n];
    for (pixel, trace) in per_slot.into_iter().flatten() {
        if slots[pixel].replace(trace).is_some() {
            return Err(Error::Frame(format!(
                "pixel {pixel} read twice in one frame"
            )));
        }
    }
    let traces = slots
        .into_iter()
        .enumerate()
        .map(|(p, t)| {
            t.ok_or_else(|| Error::Frame(format!("pixel ({}, {}) never read", p / n, p % n)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Frame {
        n,
        chirp: acq.chirp.clone(),
        traces,
        frame_index,
        laser_seed: acq.laser_seed,
        noise_seed: acq.noise.seed,
    })
}
