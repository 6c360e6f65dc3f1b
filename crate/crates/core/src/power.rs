//! Closed-form current, energy and battery-life arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::DeviceProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Host collects samples and runs the whole network width-first.
    RegularWf,
    /// Host collects samples and runs the whole network depth-first.
    RegularDf,
    /// Sensor core runs `g` and the exit gate; host runs `h` when woken.
    Ours,
}

impl Pipeline {
    pub fn as_str(&self) -> &'static str {
        match self {
            Pipeline::RegularWf => "regular_wf",
            Pipeline::RegularDf => "regular_df",
            Pipeline::Ours => "ours",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scenario {
    pub pipeline: Pipeline,
    /// Fraction of windows where the gate wakes the host; ignored by the
    /// regular pipelines.
    pub wake_fraction: f64,
}

impl Scenario {
    pub fn new(pipeline: Pipeline, wake_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&wake_fraction) {
            return Err(Error::InvalidConfig(format!(
                "wake fraction must lie in [0, 1], got {wake_fraction}"
            )));
        }
        Ok(Scenario {
            pipeline,
            wake_fraction,
        })
    }

    pub fn regular_wf() -> Self {
        Scenario {
            pipeline: Pipeline::RegularWf,
            wake_fraction: 1.0,
        }
    }
}

/// Average system current in mA. The ours pipeline interpolates linearly
/// between the all-suppressed and all-activated measurements.
pub fn average_current(scenario: &Scenario, profile: &DeviceProfile) -> f64 {
    let c = &profile.currents_ma;
    match scenario.pipeline {
        Pipeline::RegularWf => c.mcu_regular_wf + c.imu_only,
        Pipeline::RegularDf => c.mcu_regular_df + c.imu_only,
        Pipeline::Ours => {
            let p = scenario.wake_fraction;
            p * (c.mcu_ours_active + c.imu_plus_ispu)
                + (1.0 - p) * (c.mcu_ours_sleep + c.imu_plus_ispu)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reduction {
    pub raw_pct: f64,
    pub pct: i64,
}

/// Saving relative to the regular width-first pipeline.
pub fn reduction_pct(scenario: &Scenario, profile: &DeviceProfile) -> Reduction {
    let base = average_current(&Scenario::regular_wf(), profile);
    let raw_pct = 100.0 * (base - average_current(scenario, profile)) / base;
    Reduction {
        raw_pct,
        pct: raw_pct.round() as i64,
    }
}

/// `I·V·t` with current in mA.
pub fn energy_joules(current_ma: f64, voltage_v: f64, duration_s: f64) -> f64 {
    current_ma / 1000.0 * voltage_v * duration_s
}

pub fn battery_life_hours(capacity_mah: f64, current_ma: f64) -> f64 {
    capacity_mah / current_ma
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerReport {
    pub pipeline: Pipeline,
    pub wake_fraction: f64,
    pub avg_current_ma: f64,
    pub reduction_vs_regular_pct: i64,
    pub reduction_vs_regular_raw_pct: f64,
    pub duration_s: f64,
    pub energy_j: f64,
    pub battery_life_h: f64,
    pub battery_life_rounded_h: i64,
}

pub fn power_report(scenario: &Scenario, profile: &DeviceProfile, duration_s: f64) -> PowerReport {
    let i = average_current(scenario, profile);
    let red = reduction_pct(scenario, profile);
    let life = battery_life_hours(profile.battery_mah, i);
    PowerReport {
        pipeline: scenario.pipeline,
        wake_fraction: scenario.wake_fraction,
        avg_current_ma: i,
        reduction_vs_regular_pct: red.pct,
        reduction_vs_regular_raw_pct: red.raw_pct,
        duration_s,
        energy_j: energy_joules(i, profile.voltage_v, duration_s),
        battery_life_h: life,
        battery_life_rounded_h: life.round() as i64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ours(p: f64) -> Scenario {
        Scenario::new(Pipeline::Ours, p).unwrap()
    }

    #[test]
    fn measured_currents() {
        let prof = DeviceProfile::default();
        assert!((average_current(&Scenario::regular_wf(), &prof) - 5.4).abs() < 1e-12);
        let df = Scenario::new(Pipeline::RegularDf, 0.3).unwrap();
        assert!((average_current(&df, &prof) - 6.5).abs() < 1e-12);
        assert_eq!(average_current(&ours(1.0), &prof), 4.8);
        assert_eq!(average_current(&ours(0.0), &prof), 4.6);
    }

    #[test]
    fn reductions() {
        let prof = DeviceProfile::default();
        assert_eq!(reduction_pct(&ours(1.0), &prof).pct, 11);
        assert_eq!(reduction_pct(&ours(0.0), &prof).pct, 15);
        assert_eq!(reduction_pct(&Scenario::regular_wf(), &prof).pct, 0);
    }

    #[test]
    fn energy_and_battery() {
        assert!((energy_joules(5.4, 1.8, 3600.0) - 34.992).abs() < 1e-9);
        assert!((energy_joules(4.8, 1.8, 3600.0) - 31.104).abs() < 1e-9);
        assert!((energy_joules(4.6, 1.8, 3600.0) - 29.808).abs() < 1e-9);
        assert!((battery_life_hours(200.0, 5.4) - 37.037).abs() < 1e-3);
        assert!((battery_life_hours(200.0, 4.8) - 41.667).abs() < 1e-3);
        assert_eq!(battery_life_hours(200.0, 200.0), 1.0);
    }

    #[test]
    fn wake_fraction_validated() {
        assert!(Scenario::new(Pipeline::Ours, 1.1).is_err());
        assert!(Scenario::new(Pipeline::Ours, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn current_affine_monotone(p in 0.0f64..1.0, q in 0.0f64..1.0) {
            let prof = DeviceProfile::default();
            let (lo, hi) = if p < q { (p, q) } else { (q, p) };
            let a = average_current(&ours(lo), &prof);
            let b = average_current(&ours(hi), &prof);
            prop_assert!(a <= b + 1e-12);
            let expected = 4.6 + 0.2 * lo;
            prop_assert!((a - expected).abs() < 1e-12);
        }

        #[test]
        fn energy_linear(i in 0.1f64..10.0, v in 0.5f64..5.0, t in 1.0f64..1e5, k in 0.1f64..10.0) {
            let e = energy_joules(i, v, t);
            for scaled in [energy_joules(k * i, v, t), energy_joules(i, k * v, t), energy_joules(i, v, k * t)] {
                prop_assert!((scaled - k * e).abs() <= 1e-9 * scaled.abs().max(1.0));
            }
        }
    }
}
