//! Synthetic worn / not-worn IMU traces for smart eyewear.
//!
//! Worn sessions: gravity near upright with slow pose drift, plus head motion
//! made of a few band-limited sinusoids on every axis, plus sensor noise.
//! Not-worn sessions: the frame lies still at an arbitrary orientation, so the
//! accelerometer sees a constant gravity vector and the gyroscope a small bias,
//! both with low noise. Values are clipped to the full-scale ranges.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Window;
use crate::trace::{Label, Trace, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub odr_hz: f64,
    pub minutes_per_class: f64,
    /// Independent recording sessions per class.
    pub sessions: usize,
    pub window_len: usize,
    pub fsr_accel_g: f32,
    pub fsr_gyro_dps: f32,
    /// Head-motion band (Hz).
    pub motion_band_hz: (f64, f64),
    /// Per-component amplitude ranges.
    pub motion_gyro_dps: (f64, f64),
    pub motion_accel_g: (f64, f64),
    pub motion_components: usize,
    pub worn_noise_accel_g: f64,
    pub worn_noise_gyro_dps: f64,
    pub still_noise_accel_g: f64,
    pub still_noise_gyro_dps: f64,
    pub still_gyro_bias_dps: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            odr_hz: 26.0,
            minutes_per_class: 3.0,
            sessions: 12,
            window_len: 26,
            fsr_accel_g: 2.0,
            fsr_gyro_dps: 250.0,
            motion_band_hz: (0.3, 3.0),
            motion_gyro_dps: (3.0, 25.0),
            motion_accel_g: (0.01, 0.08),
            motion_components: 3,
            worn_noise_accel_g: 0.01,
            worn_noise_gyro_dps: 1.0,
            still_noise_accel_g: 0.004,
            still_noise_gyro_dps: 0.3,
            still_gyro_bias_dps: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.odr_hz,
            self.minutes_per_class,
            self.fsr_accel_g as f64,
            self.fsr_gyro_dps as f64,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig(
                "odr, duration and full-scale ranges must be positive".into(),
            ));
        }
        if self.sessions == 0 || self.window_len == 0 {
            return Err(Error::InvalidConfig(
                "sessions and window_len must be positive".into(),
            ));
        }
        if self.motion_band_hz.0 <= 0.0 || self.motion_band_hz.1 < self.motion_band_hz.0 {
            return Err(Error::InvalidConfig(
                "motion band must be a positive interval".into(),
            ));
        }
        let ranges = [self.motion_gyro_dps, self.motion_accel_g];
        if ranges.iter().any(|(lo, hi)| *lo < 0.0 || hi < lo) {
            return Err(Error::InvalidConfig(
                "amplitude ranges must be non-negative intervals".into(),
            ));
        }
        let sigmas = [
            self.worn_noise_accel_g,
            self.worn_noise_gyro_dps,
            self.still_noise_accel_g,
            self.still_noise_gyro_dps,
            self.still_gyro_bias_dps,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidConfig(
                "noise levels must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn samples_per_class(&self) -> usize {
        (self.minutes_per_class * 60.0 * self.odr_hz).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrace {
    pub name: String,
    pub label: Label,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub window: Window,
    pub label: Label,
}

/// Mixes a base seed with a stream id (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated non-negative")
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

struct Component {
    freq_hz: f64,
    phase: f64,
    gyro: [f64; 3],
    accel: [f64; 3],
}

/// One continuous session of `len` samples, seeded independently.
pub fn synth_trace(cfg: &SynthConfig, label: Label, len: usize, seed: u64) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1.0 / cfg.odr_hz;
    let (acc_fsr, gyr_fsr) = (cfg.fsr_accel_g, cfg.fsr_gyro_dps);
    let mut rows = Vec::with_capacity(len);
    match label {
        Label::Worn => {
            let pitch0 = rng.random_range(-25.0f64..25.0).to_radians();
            let roll0 = rng.random_range(-15.0f64..15.0).to_radians();
            let drift_hz = rng.random_range(0.02..0.1);
            let drift_amp = rng.random_range(2.0f64..6.0).to_radians();
            let comps: Vec<Component> = (0..cfg.motion_components.max(1))
                .map(|_| Component {
                    freq_hz: uniform(&mut rng, cfg.motion_band_hz),
                    phase: rng.random_range(0.0..2.0 * PI),
                    gyro: [0; 3].map(|_| uniform(&mut rng, cfg.motion_gyro_dps) * sign(&mut rng)),
                    accel: [0; 3].map(|_| uniform(&mut rng, cfg.motion_accel_g) * sign(&mut rng)),
                })
                .collect();
            let na = normal(cfg.worn_noise_accel_g);
            let ng = normal(cfg.worn_noise_gyro_dps);
            for t in 0..len {
                let time = t as f64 * dt;
                let drift = drift_amp * (2.0 * PI * drift_hz * time).sin();
                let (pitch, roll) = (pitch0 + drift, roll0 + 0.5 * drift);
                let gravity = [
                    -pitch.sin(),
                    pitch.cos() * roll.sin(),
                    pitch.cos() * roll.cos(),
                ];
                let mut values = [0.0f32; 6];
                for axis in 0..3 {
                    let mut a = gravity[axis];
                    let mut g = 0.0;
                    for c in &comps {
                        let s = (2.0 * PI * c.freq_hz * time + c.phase + axis as f64).sin();
                        a += c.accel[axis] * s;
                        g += c.gyro[axis] * s;
                    }
                    a += na.sample(&mut rng);
                    g += ng.sample(&mut rng);
                    values[axis] = (a as f32).clamp(-acc_fsr, acc_fsr);
                    values[3 + axis] = (g as f32).clamp(-gyr_fsr, gyr_fsr);
                }
                rows.push(TraceRow {
                    t: t as u64,
                    values,
                });
            }
        }
        Label::NotWorn => {
            // Uniform direction on the sphere.
            let z: f64 = rng.random_range(-1.0..1.0);
            let phi = rng.random_range(0.0..2.0 * PI);
            let r = (1.0 - z * z).sqrt();
            let gravity = [r * phi.cos(), r * phi.sin(), z];
            let bias = [0; 3].map(|_| rng.random_range(-1.0..=1.0) * cfg.still_gyro_bias_dps);
            let na = normal(cfg.still_noise_accel_g);
            let ng = normal(cfg.still_noise_gyro_dps);
            for t in 0..len {
                let mut values = [0.0f32; 6];
                for axis in 0..3 {
                    let a = gravity[axis] + na.sample(&mut rng);
                    let g = bias[axis] + ng.sample(&mut rng);
                    values[axis] = (a as f32).clamp(-acc_fsr, acc_fsr);
                    values[3 + axis] = (g as f32).clamp(-gyr_fsr, gyr_fsr);
                }
                rows.push(TraceRow {
                    t: t as u64,
                    values,
                });
            }
        }
    }
    Trace { rows }
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Balanced sessions for both classes, named `<label>_<session>.csv`.
pub fn generate_traces(cfg: &SynthConfig) -> Result<Vec<LabeledTrace>> {
    cfg.validate()?;
    let total = cfg.samples_per_class();
    let mut out = Vec::with_capacity(2 * cfg.sessions);
    for label in [Label::Worn, Label::NotWorn] {
        for s in 0..cfg.sessions {
            let start = total * s / cfg.sessions;
            let end = total * (s + 1) / cfg.sessions;
            let stream = (label.class() as u64) << 32 | s as u64;
            out.push(LabeledTrace {
                name: format!("{}_{:02}.csv", label.as_str(), s),
                label,
                trace: synth_trace(cfg, label, end - start, derive_seed(cfg.seed, stream)),
            });
        }
    }
    Ok(out)
}

pub fn window_traces(traces: &[LabeledTrace], window_len: usize) -> Vec<LabeledWindow> {
    traces
        .iter()
        .flat_map(|lt| {
            lt.trace
                .windows(window_len)
                .into_iter()
                .map(move |window| LabeledWindow {
                    window,
                    label: lt.label,
                })
        })
        .collect()
}

pub fn generate_dataset(cfg: &SynthConfig) -> Result<Vec<LabeledWindow>> {
    Ok(window_traces(&generate_traces(cfg)?, cfg.window_len))
}

/// A long single-label trace, e.g. an hour of wear for replay.
pub fn long_trace(cfg: &SynthConfig, label: Label, duration_s: f64, seed: u64) -> Trace {
    let len = (duration_s * cfg.odr_hz).round() as usize;
    synth_trace(cfg, label, len, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel_variance(windows: &[LabeledWindow], label: Label, c: usize) -> f64 {
        // Mean within-window variance, so the random still orientation does not count.
        let per: Vec<f64> = windows
            .iter()
            .filter(|w| w.label == label)
            .map(|w| {
                let xs: Vec<f64> = w
                    .window
                    .samples
                    .iter()
                    .map(|s| s.channels[c] as f64)
                    .collect();
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
            })
            .collect();
        per.iter().sum::<f64>() / per.len() as f64
    }

    #[test]
    fn window_counts() {
        let data = generate_dataset(&SynthConfig::default()).unwrap();
        let worn = data.iter().filter(|w| w.label == Label::Worn).count();
        assert_eq!(worn, 180);
        assert_eq!(data.len() - worn, 180);
        assert!(data.iter().all(|w| w.window.len() == 26));
    }

    #[test]
    fn seeded() {
        let cfg = SynthConfig::default();
        assert_eq!(
            generate_dataset(&cfg).unwrap(),
            generate_dataset(&cfg).unwrap()
        );
        let other = SynthConfig { seed: 7, ..cfg };
        assert_ne!(
            generate_dataset(&cfg).unwrap(),
            generate_dataset(&other).unwrap()
        );
    }

    #[test]
    fn worn_varies_more() {
        let data = generate_dataset(&SynthConfig::default()).unwrap();
        for c in 0..6 {
            let w = channel_variance(&data, Label::Worn, c);
            let n = channel_variance(&data, Label::NotWorn, c);
            assert!(w > n, "channel {c}: worn {w} vs not worn {n}");
        }
    }

    #[test]
    fn clipped_to_full_scale() {
        let cfg = SynthConfig {
            motion_gyro_dps: (400.0, 500.0),
            motion_accel_g: (3.0, 4.0),
            ..SynthConfig::default()
        };
        let tr = synth_trace(&cfg, Label::Worn, 500, 1);
        for r in &tr.rows {
            assert!(r.values[..3].iter().all(|v| v.abs() <= 2.0));
            assert!(r.values[3..].iter().all(|v| v.abs() <= 250.0));
        }
    }

    #[test]
    fn invalid_config() {
        let cfg = SynthConfig {
            sessions: 0,
            ..SynthConfig::default()
        };
        assert!(generate_dataset(&cfg).is_err());
        let cfg = SynthConfig {
            odr_hz: -1.0,
            ..SynthConfig::default()
        };
        assert!(generate_dataset(&cfg).is_err());
    }
}
