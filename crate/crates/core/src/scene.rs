//! Point-target scenes and the relative-path drift disturbance.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::laser::PhaseNoisePath;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    /// One-way range, m.
    pub range: f64,
    /// Field amplitude reflectivity in [0, 1].
    pub reflectivity: f64,
    /// Static path phase, rad.
    pub phase: f64,
}

impl Target {
    pub fn new(range: f64, reflectivity: f64, phase: f64) -> Result<Self> {
        let t = Self {
            range,
            reflectivity,
            phase,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(Error::config("scene.range", "must be finite and > 0"));
        }
        if !(0.0..=1.0).contains(&self.reflectivity) {
            return Err(Error::config("scene.reflectivity", "must lie in [0, 1]"));
        }
        if !self.phase.is_finite() {
            return Err(Error::config("scene.phase", "must be finite"));
        }
        Ok(())
    }
}

/// Delayed copy of the chirp arriving at a pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Echo {
    /// Round-trip delay, s.
    pub delay: f64,
    pub amplitude: f64,
    /// Static phase, rad.
    pub phase: f64,
}

/// Time-varying relative phase between signal and reference arms.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum DriftProfile {
    #[default]
    None,
    Constant(f64),
    /// Linear ramp, rad/s.
    Ramp(f64),
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    Replay(PhaseNoisePath),
}

impl DriftProfile {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            DriftProfile::None => 0.0,
            DriftProfile::Constant(p) => *p,
            DriftProfile::Ramp(rate) => rate * t,
            DriftProfile::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude * (2.0 * PI * frequency * t + phase).sin(),
            DriftProfile::Replay(path) => path.phase_at(t),
        }
    }
}

/// How the drift is evaluated inside one chirp.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DriftSampling {
    /// Evaluated at every sample time.
    #[default]
    Continuous,
    /// Held at its value at the start of each chirp. Models drift that is
    /// slow compared with the sweep period.
    PerChirp,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Drift {
    pub profile: DriftProfile,
    pub sampling: DriftSampling,
}

impl Drift {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(profile: DriftProfile, sampling: DriftSampling) -> Self {
        Self { profile, sampling }
    }

    pub fn is_none(&self) -> bool {
        matches!(self.profile, DriftProfile::None)
    }

    /// Drift phase at local time `t` of a chirp that started at `chirp_start`.
    pub fn phase(&self, chirp_start: f64, t: f64) -> f64 {
        match self.sampling {
            DriftSampling::Continuous => self.profile.at(chirp_start + t),
            DriftSampling::PerChirp => self.profile.at(chirp_start),
        }
    }

    /// Checks that a replayed path spans `[0, duration]`.
    pub fn validate_for(&self, duration: f64) -> Result<()> {
        if let DriftProfile::Replay(path) = &self.profile {
            if path.t0 > 0.0 || path.end_time() < duration {
                return Err(Error::config(
                    "scene.drift",
                    format!("replayed path must cover the frame duration {duration} s"),
                ));
            }
        }
        Ok(())
    }
}

/// Per-pixel targets on an N×N grid plus the shared signal-arm drift.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    n: usize,
    pixels: Vec<Vec<Target>>,
    pub drift: Drift,
}

impl Scene {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            pixels: vec![Vec::new(); n * n],
            drift: Drift::none(),
        }
    }

    /// Every pixel sees one target at `range`.
    pub fn flat(n: usize, range: f64, reflectivity: f64) -> Result<Self> {
        let target = Target::new(range, reflectivity, 0.0)?;
        let mut scene = Self::empty(n);
        for p in &mut scene.pixels {
            p.push(target.clone());
        }
        Ok(scene)
    }

    /// Range grows linearly with column index: `base + col * step`.
    pub fn staircase(n: usize, base: f64, step: f64, reflectivity: f64) -> Result<Self> {
        let mut scene = Self::empty(n);
        for row in 0..n {
            for col in 0..n {
                scene.add_target(
                    row,
                    col,
                    Target::new(base + col as f64 * step, reflectivity, 0.0)?,
                )?;
            }
        }
        Ok(scene)
    }

    pub fn with_drift(mut self, drift: Drift) -> Self {
        self.drift = drift;
        self
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn index(&self, row: usize, col: usize) -> Result<usize> {
        if row >= self.n || col >= self.n {
            return Err(Error::Index {
                row,
                col,
                n: self.n,
            });
        }
        Ok(row * self.n + col)
    }

    pub fn add_target(&mut self, row: usize, col: usize, target: Target) -> Result<()> {
        target.validate()?;
        let idx = self.index(row, col)?;
        self.pixels[idx].push(target);
        Ok(())
    }

    pub fn targets(&self, row: usize, col: usize) -> Result<&[Target]> {
        let idx = self.index(row, col)?;
        Ok(&self.pixels[idx])
    }

    /// Largest target range in the scene, 0 for an empty scene.
    pub fn max_range(&self) -> f64 {
        self.pixels
            .iter()
            .flatten()
            .map(|t| t.range)
            .fold(0.0, f64::max)
    }

    /// Reference range for accuracy statistics: the strongest target, first
    /// one on ties.
    pub fn truth_range(&self, row: usize, col: usize) -> Result<Option<f64>> {
        let targets = self.targets(row, col)?;
        let mut best: Option<&Target> = None;
        for t in targets {
            if best.is_none_or(|b| t.reflectivity > b.reflectivity) {
                best = Some(t);
            }
        }
        Ok(best.map(|t| t.range))
    }
}

/// Round-trip delay τ = 2R/c.
pub fn round_trip_delay(range: f64) -> Result<f64> {
    if !(range >= 0.0) {
        return Err(Error::Domain(format!("range must be >= 0, got {range}")));
    }
    Ok(2.0 * range / SPEED_OF_LIGHT)
}

/// FMCW beat frequency f_b = γτ = 2γR/c.
pub fn beat_frequency(range: f64, slope: f64) -> f64 {
    slope * (2.0 * range / SPEED_OF_LIGHT)
}

/// Echoes seen by one pixel, in target insertion order.
pub fn scene_response(row: usize, col: usize, scene: &Scene) -> Result<Vec<Echo>> {
    scene
        .targets(row, col)?
        .iter()
        .map(|t| {
            Ok(Echo {
                delay: round_trip_delay(t.range)?,
                amplitude: t.reflectivity,
                phase: t.phase,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_examples() {
        assert_eq!(round_trip_delay(0.0).unwrap(), 0.0);
        let tau = round_trip_delay(1.0).unwrap();
        assert!((tau - 2.0 / 299_792_458.0).abs() < 1e-24);
        assert!((tau - 6.671_28e-9).abs() < 1e-14);
        assert_eq!(round_trip_delay(SPEED_OF_LIGHT / 2.0).unwrap(), 1.0);
        assert!(matches!(round_trip_delay(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn beat_examples() {
        let fb = beat_frequency(1.0, 1e13);
        assert!((fb - 66_712.819).abs() < 1e-3, "fb = {fb}");
        assert_eq!(beat_frequency(0.0, 1e13), 0.0);
        assert_eq!(beat_frequency(2.0, 1e13), 2.0 * fb);
    }

    #[test]
    fn response_examples() {
        let mut scene = Scene::empty(2);
        assert!(scene_response(0, 0, &scene).unwrap().is_empty());
        scene
            .add_target(1, 0, Target::new(1.0, 1.0, 0.0).unwrap())
            .unwrap();
        let r = scene_response(1, 0, &scene).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].delay - 6.671_28e-9).abs() < 1e-14);
        assert_eq!((r[0].amplitude, r[0].phase), (1.0, 0.0));

        scene
            .add_target(1, 0, Target::new(2.0, 0.5, 0.3).unwrap())
            .unwrap();
        let r = scene_response(1, 0, &scene).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[1].amplitude, 0.5);
        assert_eq!(r, scene_response(1, 0, &scene).unwrap());
    }

    #[test]
    fn out_of_bounds_pixel() {
        let scene = Scene::empty(2);
        assert!(matches!(
            scene_response(2, 0, &scene),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn target_invariants() {
        assert!(Target::new(0.0, 1.0, 0.0).is_err());
        assert!(Target::new(1.0, 1.5, 0.0).is_err());
        assert!(Target::new(1.0, -0.1, 0.0).is_err());
    }

    #[test]
    fn per_chirp_drift_holds() {
        let d = Drift::new(
            DriftProfile::Sinusoid {
                amplitude: PI,
                frequency: 100.0,
                phase: 0.0,
            },
            DriftSampling::PerChirp,
        );
        assert_eq!(d.phase(1e-3, 0.0), d.phase(1e-3, 0.9e-3));
        let c = Drift::new(d.profile.clone(), DriftSampling::Continuous);
        assert_ne!(c.phase(1e-3, 0.0), c.phase(1e-3, 0.9e-3));
    }

    #[test]
    fn truth_is_strongest_target() {
        let mut scene = Scene::empty(1);
        assert_eq!(scene.truth_range(0, 0).unwrap(), None);
        scene
            .add_target(0, 0, Target::new(1.0, 0.5, 0.0).unwrap())
            .unwrap();
        scene
            .add_target(0, 0, Target::new(2.0, 0.9, 0.0).unwrap())
            .unwrap();
        scene
            .add_target(0, 0, Target::new(3.0, 0.9, 0.0).unwrap())
            .unwrap();
        assert_eq!(scene.truth_range(0, 0).unwrap(), Some(2.0));
    }
}
