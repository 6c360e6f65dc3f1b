//! Trace replay through the sensor → exit gate → host pipeline.
//!
//! Time is logical: the sample with index `t` arrives at `t · 1000 / odr` ms.
//! The sensor core handles one trigger at a time; a sample that arrives while
//! the previous trigger is still running is lost. Depth-first pays the
//! per-push cost on every sample. Width-first only stores samples until the
//! window is full and then pays for the whole window on the last push.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exit::{ee_decide, Gate};
use crate::model::{forward_g, forward_h, FeatureVector, Network, Window};
use crate::partition::{
    feasibility, per_trigger_time, split, store_trigger_time, CostModelParams, DeviceProfile,
    ExecMode, PartitionReport,
};
use crate::power::{average_current, energy_joules, Pipeline, Scenario};
use crate::stream::{PushResult, StreamState};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayOptions {
    pub pipeline: Pipeline,
    pub params: CostModelParams,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions {
            pipeline: Pipeline::Ours,
            params: CostModelParams::reference(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowDecision {
    pub window: usize,
    pub first_t: u64,
    pub last_t: u64,
    pub gate: Gate,
    /// Exit-head probability of the activate class.
    pub confidence: f32,
    /// Class chosen by `h` when the host ran.
    pub host_class: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub pipeline: Pipeline,
    pub mode: ExecMode,
    pub odr_hz: f64,
    pub window_len: usize,
    pub samples_total: usize,
    pub windows_total: usize,
    pub wakeups: usize,
    pub suppressions: usize,
    pub samples_lost: usize,
    pub trailing_partial: usize,
    pub host_interrupts: usize,
    pub wake_fraction: f64,
    pub per_trigger_ms: f64,
    pub avg_current_ma: f64,
    pub duration_s: f64,
    pub energy_j: f64,
    pub decisions: Vec<WindowDecision>,
}

impl SimReport {
    /// Summary without the per-window log.
    pub fn summary_csv(&self) -> String {
        format!(
            "pipeline,mode,odr_hz,window_len,samples_total,windows_total,wakeups,suppressions,\
             samples_lost,trailing_partial,host_interrupts,wake_fraction,per_trigger_ms,\
             avg_current_ma,duration_s,energy_j\n{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.pipeline.as_str(),
            self.mode.as_str(),
            self.odr_hz,
            self.window_len,
            self.samples_total,
            self.windows_total,
            self.wakeups,
            self.suppressions,
            self.samples_lost,
            self.trailing_partial,
            self.host_interrupts,
            self.wake_fraction,
            self.per_trigger_ms,
            self.avg_current_ma,
            self.duration_s,
            self.energy_j
        )
    }
}

pub fn replay(
    trace: &Trace,
    network: &Network,
    mode: ExecMode,
    profile: &DeviceProfile,
) -> Result<SimReport> {
    replay_with(trace, network, mode, profile, &ReplayOptions::default())
}

pub fn replay_with(
    trace: &Trace,
    network: &Network,
    mode: ExecMode,
    profile: &DeviceProfile,
    opts: &ReplayOptions,
) -> Result<SimReport> {
    profile.validate()?;
    if network.channels() != crate::trace::TRACE_CHANNELS {
        return Err(Error::ModelMismatch(format!(
            "trace has {} channels, model expects {}",
            crate::trace::TRACE_CHANNELS,
            network.channels()
        )));
    }
    let window_len = network.window_len();
    let params = opts.params.at_clock(profile.clock_hz);
    let (g, _) = split(network, network.split_index())?;
    let push_ms = per_trigger_time(&g, ExecMode::DepthFirst, window_len, &params);
    let window_ms = per_trigger_time(&g, ExecMode::WidthFirst, window_len, &params);
    let store_ms = store_trigger_time(&params);
    // Regular pipelines stream raw samples to the host; the sensor core idles.
    let sensor_computes = opts.pipeline == Pipeline::Ours;
    let period_ms = profile.odr_period_ms();

    let mut stream = StreamState::new(network, true);
    let mut buffer: Vec<crate::model::Sample> = Vec::with_capacity(window_len);
    let mut busy_until = f64::NEG_INFINITY;
    let mut lost = 0usize;
    let mut accepted = 0usize;
    let mut in_window = 0usize;
    let mut first_t = 0u64;
    let mut decisions = Vec::new();

    for row in &trace.rows {
        let arrival = row.t as f64 * period_ms;
        if sensor_computes && arrival < busy_until {
            lost += 1;
            continue;
        }
        accepted += 1;
        if in_window == 0 {
            first_t = row.t;
        }
        in_window += 1;
        let completes = in_window == window_len;
        let sample = crate::model::Sample::new(row.t, row.values.to_vec());
        let features: Option<FeatureVector> = match mode {
            ExecMode::DepthFirst => match stream.push(&sample)? {
                PushResult::WindowComplete(f) => Some(f),
                PushResult::InProgress => None,
            },
            ExecMode::WidthFirst => {
                buffer.push(sample);
                if completes {
                    let w = Window::new(std::mem::take(&mut buffer));
                    Some(forward_g(network, &w)?)
                } else {
                    None
                }
            }
        };
        let cost = match (mode, completes) {
            (ExecMode::DepthFirst, _) => push_ms,
            (ExecMode::WidthFirst, true) => window_ms,
            (ExecMode::WidthFirst, false) => store_ms,
        };
        busy_until = arrival + cost;

        if let Some(f) = features {
            let d = ee_decide(network.exit_head(), &f)?;
            let gate = if sensor_computes {
                d.gate
            } else {
                Gate::Activate
            };
            let host_class = match gate {
                Gate::Activate => Some(argmax(&forward_h(network, &f)?)),
                Gate::Suppress => None,
            };
            decisions.push(WindowDecision {
                window: decisions.len(),
                first_t,
                last_t: row.t,
                gate,
                confidence: d.confidence,
                host_class,
            });
            in_window = 0;
        }
    }

    let windows_total = decisions.len();
    let wakeups = decisions
        .iter()
        .filter(|d| d.gate == Gate::Activate)
        .count();
    let wake_fraction = if windows_total == 0 {
        0.0
    } else {
        wakeups as f64 / windows_total as f64
    };
    let host_interrupts = match opts.pipeline {
        Pipeline::Ours => wakeups,
        _ => accepted / profile.fifo_depth_samples as usize,
    };
    let scenario = Scenario::new(opts.pipeline, wake_fraction)?;
    let avg_current_ma = average_current(&scenario, profile);
    let duration_s = trace.len() as f64 / profile.odr_hz;
    let report = SimReport {
        pipeline: opts.pipeline,
        mode,
        odr_hz: profile.odr_hz,
        window_len,
        samples_total: trace.len(),
        windows_total,
        wakeups,
        suppressions: windows_total - wakeups,
        samples_lost: lost,
        trailing_partial: in_window,
        host_interrupts,
        wake_fraction,
        per_trigger_ms: match mode {
            ExecMode::DepthFirst => push_ms,
            ExecMode::WidthFirst => window_ms,
        },
        avg_current_ma,
        duration_s,
        energy_j: energy_joules(avg_current_ma, profile.voltage_v, duration_s),
        decisions,
    };
    debug_assert_eq!(
        report.windows_total * window_len + report.samples_lost + report.trailing_partial,
        report.samples_total
    );
    Ok(report)
}

fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Sensor-side feasibility of `network`'s `g` for each window length and mode.
pub fn sweep_window(
    network: &Network,
    window_lens: &[usize],
    modes: &[ExecMode],
    profile: &DeviceProfile,
    params: &CostModelParams,
) -> Result<Vec<PartitionReport>> {
    let (g, _) = split(network, network.split_index())?;
    let mut rows = Vec::with_capacity(window_lens.len() * modes.len());
    for &mode in modes {
        for &t in window_lens {
            g.workload(t)?;
            rows.push(feasibility(&g, mode, t, profile, params));
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[PartitionReport]) -> String {
    let mut s = String::from(PartitionReport::CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}
