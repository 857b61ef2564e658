//! Swept laser source: FMCW chirp phase and Wiener-process phase noise.
//!
//! The chirp is described in baseband form. Setting `f0 = 0` lets the
//! simulation run at beat-frequency sample rates; coherent detection only
//! ever sees phase differences between the two arms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepDirection {
    #[default]
    Up,
    Down,
    /// Up-sweep over `[0, T]` followed by a down-sweep over `[T, 2T]`.
    Triangular,
}

/// Linear frequency sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChirpConfig {
    /// Start frequency, Hz.
    pub f0: f64,
    /// Sweep bandwidth, Hz.
    pub bandwidth: f64,
    /// Sweep period, s.
    pub period: f64,
    #[serde(default)]
    pub direction: SweepDirection,
}

impl ChirpConfig {
    pub fn new(f0: f64, bandwidth: f64, period: f64) -> Result<Self> {
        let cfg = Self {
            f0,
            bandwidth,
            period,
            direction: SweepDirection::Up,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_direction(mut self, direction: SweepDirection) -> Self {
        self.direction = direction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::config("laser.bandwidth", "must be finite and > 0"));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::config("laser.period", "must be finite and > 0"));
        }
        if !(self.f0.is_finite() && self.f0 >= 0.0) {
            return Err(Error::config("laser.f0", "must be finite and >= 0"));
        }
        let slope = self.bandwidth / self.period;
        if !(slope.is_finite() && slope > 0.0) {
            return Err(Error::config(
                "laser.bandwidth / laser.period",
                "slope must be finite and > 0",
            ));
        }
        Ok(())
    }

    /// Chirp slope B/T in Hz/s. Assumes a validated config.
    pub fn slope(&self) -> f64 {
        self.bandwidth / self.period
    }

    /// Length of the time span covered by one sweep cycle.
    pub fn cycle_duration(&self) -> f64 {
        match self.direction {
            SweepDirection::Triangular => 2.0 * self.period,
            _ => self.period,
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let limit = self.cycle_duration();
        if !(t >= 0.0 && t <= limit) {
            return Err(Error::OutOfRange { t, limit });
        }
        Ok(())
    }

    /// Optical phase accumulated since the start of the sweep, radians.
    pub fn phase(&self, t: f64) -> Result<f64> {
        self.validate()?;
        self.check_time(t)?;
        let g = self.slope();
        let up = |t: f64| 2.0 * PI * self.f0 * t + PI * g * t * t;
        let down = |t: f64| 2.0 * PI * (self.f0 + self.bandwidth) * t - PI * g * t * t;
        Ok(match self.direction {
            SweepDirection::Up => up(t),
            SweepDirection::Down => down(t),
            SweepDirection::Triangular if t <= self.period => up(t),
            SweepDirection::Triangular => up(self.period) + down(t - self.period),
        })
    }

    /// Instantaneous frequency, Hz.
    pub fn frequency(&self, t: f64) -> Result<f64> {
        self.validate()?;
        self.check_time(t)?;
        let g = self.slope();
        Ok(match self.direction {
            SweepDirection::Up => self.f0 + g * t,
            SweepDirection::Down => self.f0 + self.bandwidth - g * t,
            SweepDirection::Triangular if t <= self.period => self.f0 + g * t,
            SweepDirection::Triangular => self.f0 + self.bandwidth - g * (t - self.period),
        })
    }
}

/// Chirp slope γ = B/T.
pub fn chirp_slope(cfg: &ChirpConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(cfg.slope())
}

/// Chirp phase φ(t) = 2π f0 t + π γ t² on the up-sweep (folded for
/// triangular sweeps).
pub fn chirp_phase(t: f64, cfg: &ChirpConfig) -> Result<f64> {
    cfg.phase(t)
}

/// Lorentzian-linewidth laser phase noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseNoiseConfig {
    /// Full width at half maximum, Hz.
    pub linewidth: f64,
    pub seed: u64,
    /// Sample interval, s.
    pub dt: f64,
}

impl PhaseNoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.linewidth.is_finite() && self.linewidth >= 0.0) {
            return Err(Error::config("laser.linewidth", "must be finite and >= 0"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config("phase_noise.dt", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Variance of one phase increment, 2π Δν dt (rad²).
    pub fn increment_variance(&self) -> f64 {
        2.0 * PI * self.linewidth * self.dt
    }
}

/// One realization of the random-walk laser phase.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseNoisePath {
    pub samples: Vec<f64>,
    pub dt: f64,
    /// Time of `samples[0]`, s.
    pub t0: f64,
}

impl PhaseNoisePath {
    pub fn zeros(n: usize, dt: f64, t0: f64) -> Self {
        Self {
            samples: vec![0.0; n.max(1)],
            dt,
            t0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + (self.samples.len().saturating_sub(1)) as f64 * self.dt
    }

    /// Phase at time `t`, linearly interpolated between samples. Times
    /// outside the path hold the nearest end value.
    pub fn phase_at(&self, t: f64) -> f64 {
        let last = self.samples.len() - 1;
        let x = (t - self.t0) / self.dt;
        if x <= 0.0 {
            return self.samples[0];
        }
        if x >= last as f64 {
            return self.samples[last];
        }
        let k = x.floor() as usize;
        let frac = x - k as f64;
        let a = self.samples[k];
        let b = self.samples[k + 1];
        a + frac * (b - a)
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.windows(2).map(|w| w[1] - w[0])
    }
}

/// Phase-noise path with `n` samples starting at t = 0 on stream 0.
pub fn phase_noise_path(n: usize, cfg: &PhaseNoiseConfig) -> Result<PhaseNoisePath> {
    phase_noise_path_stream(n, cfg, 0, 0.0)
}

/// Phase-noise path drawn from the keyed stream `(cfg.seed, stream)`.
pub fn phase_noise_path_stream(
    n: usize,
    cfg: &PhaseNoiseConfig,
    stream: u64,
    t0: f64,
) -> Result<PhaseNoisePath> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::config("phase_noise.n", "must be >= 1"));
    }
    if cfg.linewidth == 0.0 {
        return Ok(PhaseNoisePath::zeros(n, cfg.dt, t0));
    }
    let sigma = cfg.increment_variance().sqrt();
    let mut samples = vec![0.0; n];
    rng::standard_normals(cfg.seed, stream, &mut samples[1..]);
    let mut acc = 0.0;
    for s in samples.iter_mut().skip(1) {
        acc += sigma * *s;
        *s = acc;
    }
    Ok(PhaseNoisePath {
        samples,
        dt: cfg.dt,
        t0,
    })
}
