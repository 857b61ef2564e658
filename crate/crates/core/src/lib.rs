//! Simulation and signal processing for an FMCW coherent imager with a
//! 90° hybrid IQ receiver and a row-column multiplexed pixel array.
//!
//! The pipeline runs `laser` → `scene` → `receiver` → `array` → `dsp`;
//! `config` and `experiment` wire it to files on disk.

// `!(x > y)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod config;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod laser;
pub mod receiver;
pub mod rng;
pub mod scene;

pub use array::{
    build_readout_schedule, interconnect_count, readout_frame, Acquisition, ArrayConfig, Frame,
    ReadoutMode, ReadoutSchedule, Slot,
};
pub use dsp::{
    accuracy_report, beat_spectrum, build_depth_map, estimate_beat_frequency, range_from_beat,
    window, AccuracyReport, DepthMap, DspConfig, PeakQuality, RangeEstimate, Spectrum, WindowKind,
};
pub use error::{Error, Result};
pub use laser::{
    chirp_phase, chirp_slope, phase_noise_path, ChirpConfig, PhaseNoiseConfig, PhaseNoisePath,
    SweepDirection,
};
pub use receiver::{
    balanced_detect, hybrid_outputs, image_rejection_ratio, simulate_pixel_beat, HybridConfig,
    IqTrace, NoiseConfig,
};
pub use scene::{
    beat_frequency, round_trip_delay, scene_response, Drift, DriftProfile, DriftSampling, Echo,
    Scene, Target, SPEED_OF_LIGHT,
};
