//! Sensor/host partitioning and the memory/timing cost model.
//!
//! Costs are counted in scalar operations (one multiply-accumulate or one
//! max-compare each) and converted to time by an affine cycle model,
//! `cycles = ops·cycles_per_op + fixed_overhead_cycles`. Memory is counted in
//! stored values times `bytes_per_value` plus a runtime overhead constant.
//!
//! Depth-first charges the weights and the persistent accumulators of the
//! streaming engine; its worst-case trigger is the push that completes a
//! window, which touches every stage once. Width-first runs the same kernels
//! once per window over a buffered copy of the raw window, so it is charged the
//! depth-first working set plus `T·N_in` values, and a full-window op count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exit::ExitHead;
use crate::model::{
    build_network, forward_chain, LayerSpec, LayerWeights, Network, NetworkSpec, Shape, Tensor,
    Weights,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    WidthFirst,
    DepthFirst,
}

impl ExecMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExecMode::WidthFirst => "width_first",
            ExecMode::DepthFirst => "depth_first",
        }
    }
}

impl std::str::FromStr for ExecMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "width_first" | "wf" => Ok(ExecMode::WidthFirst),
            "depth_first" | "df" => Ok(ExecMode::DepthFirst),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

/// Measured average currents in mA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Currents {
    pub mcu_regular_wf: f64,
    pub mcu_regular_df: f64,
    pub imu_only: f64,
    pub mcu_ours_active: f64,
    pub mcu_ours_sleep: f64,
    pub imu_plus_ispu: f64,
}

impl Default for Currents {
    fn default() -> Self {
        Currents {
            mcu_regular_wf: 4.8,
            mcu_regular_df: 5.9,
            imu_only: 0.6,
            mcu_ours_active: 4.0,
            mcu_ours_sleep: 3.8,
            imu_plus_ispu: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceProfile {
    pub clock_hz: f64,
    pub data_ram_bytes: u64,
    pub program_ram_bytes: u64,
    pub odr_hz: f64,
    pub fifo_depth_samples: u32,
    pub voltage_v: f64,
    pub battery_mah: f64,
    pub currents_ma: Currents,
}

impl Default for DeviceProfile {
    fn default() -> Self {
        DeviceProfile {
            clock_hz: 10e6,
            data_ram_bytes: 8192,
            program_ram_bytes: 32768,
            odr_hz: 26.0,
            fifo_depth_samples: 5,
            voltage_v: 1.8,
            battery_mah: 200.0,
            currents_ma: Currents::default(),
        }
    }
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        let c = &self.currents_ma;
        let reals = [
            ("clock_hz", self.clock_hz),
            ("odr_hz", self.odr_hz),
            ("voltage_v", self.voltage_v),
            ("battery_mah", self.battery_mah),
            ("currents_ma.mcu_regular_wf", c.mcu_regular_wf),
            ("currents_ma.mcu_regular_df", c.mcu_regular_df),
            ("currents_ma.imu_only", c.imu_only),
            ("currents_ma.mcu_ours_active", c.mcu_ours_active),
            ("currents_ma.mcu_ours_sleep", c.mcu_ours_sleep),
            ("currents_ma.imu_plus_ispu", c.imu_plus_ispu),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.data_ram_bytes == 0 || self.fifo_depth_samples == 0 {
            return Err(Error::InvalidConfig(
                "data_ram_bytes and fifo_depth_samples must be positive".into(),
            ));
        }
        if self.data_ram_bytes >= self.program_ram_bytes {
            return Err(Error::InvalidConfig(format!(
                "data_ram_bytes ({}) must be smaller than program_ram_bytes ({})",
                self.data_ram_bytes, self.program_ram_bytes
            )));
        }
        Ok(())
    }

    pub fn odr_period_ms(&self) -> f64 {
        1000.0 / self.odr_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModelParams {
    pub bytes_per_value: u64,
    pub cycles_per_op: f64,
    pub fixed_overhead_cycles: f64,
    pub runtime_overhead_bytes: f64,
    pub clock_hz: f64,
}

/// Measured points the cost model is fitted to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationAnchors {
    pub depth_first_ms: f64,
    pub width_first_ms: f64,
    pub width_first_window_len: usize,
    pub depth_first_mem_bytes: f64,
    pub clock_hz: f64,
    pub bytes_per_value: u64,
}

impl CalibrationAnchors {
    /// 6.3 ms depth-first trigger, 23 ms width-first over a 6 s window at
    /// 26 Hz, 3.8 kB depth-first footprint, 10 MHz core, `f32` values.
    pub fn reference() -> Self {
        CalibrationAnchors {
            depth_first_ms: 6.3,
            width_first_ms: 23.0,
            width_first_window_len: 156,
            depth_first_mem_bytes: 3891.0,
            clock_hz: 10e6,
            bytes_per_value: 4,
        }
    }
}

impl CostModelParams {
    /// Solves the two-parameter cycle model and the overhead constant from the
    /// anchors, on the sensor-side part of `reference`.
    pub fn calibrate(reference: &Part, anchors: &CalibrationAnchors) -> Result<Self> {
        let df = reference.workload(reference.nominal_len())?;
        let wf = reference.workload(anchors.width_first_window_len)?;
        let (df_ops, wf_ops) = (df.ops_per_push as f64, wf.ops_per_window as f64);
        if wf_ops <= df_ops {
            return Err(Error::InvalidConfig(
                "calibration needs more width-first than depth-first work".into(),
            ));
        }
        let to_cycles = |ms: f64| ms * anchors.clock_hz / 1000.0;
        let cycles_per_op = (to_cycles(anchors.width_first_ms) - to_cycles(anchors.depth_first_ms))
            / (wf_ops - df_ops);
        let fixed_overhead_cycles = to_cycles(anchors.depth_first_ms) - cycles_per_op * df_ops;
        let runtime_overhead_bytes = anchors.depth_first_mem_bytes
            - ((df.weight_values + df.state_values) * anchors.bytes_per_value) as f64;
        if cycles_per_op <= 0.0 || fixed_overhead_cycles < 0.0 || runtime_overhead_bytes < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "anchors give a non-physical model: {cycles_per_op} cycles/op, \
                 {fixed_overhead_cycles} fixed cycles, {runtime_overhead_bytes} overhead bytes"
            )));
        }
        Ok(CostModelParams {
            bytes_per_value: anchors.bytes_per_value,
            cycles_per_op,
            fixed_overhead_cycles,
            runtime_overhead_bytes,
            clock_hz: anchors.clock_hz,
        })
    }

    /// Parameters fitted to the reference architecture and anchors.
    pub fn reference() -> Self {
        let spec = NetworkSpec::reference();
        let weights = Weights::zeros(&spec).expect("reference spec is valid");
        let net = build_network(spec, weights).expect("reference spec is valid");
        let (g, _) = split(&net, net.split_index()).expect("reference split is valid");
        Self::calibrate(&g, &CalibrationAnchors::reference()).expect("reference anchors are valid")
    }

    /// Same fit at a different core clock (cycle counts are clock-independent).
    pub fn at_clock(mut self, clock_hz: f64) -> Self {
        self.clock_hz = clock_hz;
        self
    }
}

/// A contiguous slice of a network's layer chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub layers: Vec<LayerSpec>,
    pub weights: Vec<LayerWeights<f32>>,
    pub input_shape: Shape,
    /// Exit head evaluated after this part (sensor side only).
    pub exit_head: Option<ExitHead>,
}

/// Static work and storage of a part at a given window length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Workload {
    pub weight_values: u64,
    pub state_values: u64,
    pub window_values: u64,
    pub ops_per_push: u64,
    pub ops_per_window: u64,
}

impl Part {
    pub fn output_shape(&self) -> Result<Shape> {
        self.shape_at_len(self.nominal_len())
    }

    /// Window length this part was cut with (0 for flat-input parts).
    pub fn nominal_len(&self) -> usize {
        match self.input_shape {
            Shape::Map { len, .. } => len,
            Shape::Flat(_) => 0,
        }
    }

    fn input_at_len(&self, window_len: usize) -> Shape {
        match self.input_shape {
            Shape::Map {
                features, channels, ..
            } => Shape::Map {
                features,
                channels,
                len: window_len,
            },
            flat => flat,
        }
    }

    fn shape_at_len(&self, window_len: usize) -> Result<Shape> {
        let mut shape = self.input_at_len(window_len);
        for (i, l) in self.layers.iter().enumerate() {
            shape = shape.through(l, &format!("part layer {i}"))?;
        }
        Ok(shape)
    }

    pub fn forward(&self, input: Tensor<f32>) -> Result<Tensor<f32>> {
        if input.shape() != self.input_shape {
            return Err(Error::mismatch(
                "part input",
                format!("{:?}", self.input_shape),
                format!("{:?}", input.shape()),
            ));
        }
        forward_chain(self.layers.iter().zip(&self.weights), input)
    }

    /// Storage and op counts with the window length set to `window_len`.
    pub fn workload(&self, window_len: usize) -> Result<Workload> {
        let mut shape = self.input_at_len(window_len);
        let mut w = Workload {
            weight_values: 0,
            state_values: 0,
            window_values: match shape {
                Shape::Map { channels, len, .. } => (channels * len) as u64,
                Shape::Flat(_) => 0,
            },
            ops_per_push: 0,
            ops_per_window: 0,
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let next = shape.through(layer, &format!("part layer {i}"))?;
            w.weight_values += layer.param_count() as u64;
            match (*layer, shape, next) {
                (
                    LayerSpec::Conv1d {
                        filters,
                        kernel_len,
                        ..
                    },
                    _,
                    Shape::Map {
                        channels, len: out, ..
                    },
                ) => {
                    let live = kernel_len.min(out) as u64;
                    let lanes = (filters * channels) as u64;
                    w.state_values += lanes * live;
                    w.ops_per_push += lanes * live;
                    w.ops_per_window += lanes * (kernel_len * out) as u64;
                }
                (
                    LayerSpec::MaxPoolChannels { .. },
                    Shape::Map {
                        features,
                        channels,
                        len,
                    },
                    _,
                ) => {
                    w.state_values += features as u64;
                    w.ops_per_push += (features * channels) as u64;
                    w.ops_per_window += (features * channels * len) as u64;
                }
                (
                    LayerSpec::Dense {
                        in_dim, out_dim, ..
                    },
                    Shape::Map {
                        features, channels, ..
                    },
                    _,
                ) => {
                    w.state_values += out_dim as u64;
                    w.ops_per_push += (out_dim * features * channels) as u64;
                    w.ops_per_window += (out_dim * in_dim) as u64;
                }
                (
                    LayerSpec::Dense {
                        in_dim, out_dim, ..
                    },
                    Shape::Flat(_),
                    _,
                ) => {
                    w.ops_per_push += (out_dim * in_dim) as u64;
                    w.ops_per_window += (out_dim * in_dim) as u64;
                }
                _ => unreachable!("rejected by Shape::through"),
            }
            shape = next;
        }
        if let Some(head) = &self.exit_head {
            let params = (2 * head.in_dim() + 2) as u64;
            w.weight_values += params;
            w.ops_per_push += (2 * head.in_dim()) as u64;
            w.ops_per_window += (2 * head.in_dim()) as u64;
        }
        Ok(w)
    }
}

/// Cuts `network` before layer `index`; the exit head travels with `g` when
/// `index` is the network's declared split.
pub fn split(network: &Network, index: usize) -> Result<(Part, Part)> {
    let spec = network.spec();
    let n = spec.layers.len();
    if index == 0 || index >= n {
        return Err(Error::InvalidSplit { index, layers: n });
    }
    let w = &network.weights().layers;
    let g = Part {
        layers: spec.layers[..index].to_vec(),
        weights: w[..index].to_vec(),
        input_shape: network.shape_at(0),
        exit_head: (index == network.split_index()).then(|| network.exit_head().clone()),
    };
    let h = Part {
        layers: spec.layers[index..].to_vec(),
        weights: w[index..].to_vec(),
        input_shape: network.shape_at(index),
        exit_head: None,
    };
    Ok((g, h))
}

/// Rejoins two parts; `g`'s output must feed `h`'s input.
pub fn concat(g: &Part, h: &Part) -> Result<Part> {
    let out = g.output_shape()?;
    if out != h.input_shape {
        return Err(Error::mismatch(
            "part boundary",
            format!("{:?}", h.input_shape),
            format!("{out:?}"),
        ));
    }
    Ok(Part {
        layers: g.layers.iter().chain(&h.layers).cloned().collect(),
        weights: g.weights.iter().chain(&h.weights).cloned().collect(),
        input_shape: g.input_shape,
        exit_head: None,
    })
}

pub fn memory_footprint(
    part: &Part,
    mode: ExecMode,
    window_len: usize,
    params: &CostModelParams,
) -> u64 {
    let w = part
        .workload(window_len)
        .expect("window length valid for this part");
    let mut values = w.weight_values + w.state_values;
    if mode == ExecMode::WidthFirst {
        values += w.window_values;
    }
    (values as f64 * params.bytes_per_value as f64 + params.runtime_overhead_bytes).round() as u64
}

/// Worst-case time of one trigger in milliseconds: a single push for
/// depth-first, the full-window evaluation for width-first.
pub fn per_trigger_time(
    part: &Part,
    mode: ExecMode,
    window_len: usize,
    params: &CostModelParams,
) -> f64 {
    let w = part
        .workload(window_len)
        .expect("window length valid for this part");
    let ops = match mode {
        ExecMode::DepthFirst => w.ops_per_push,
        ExecMode::WidthFirst => w.ops_per_window,
    };
    ops_to_ms(ops as f64, params)
}

/// Time of a trigger that only stores the incoming sample.
pub fn store_trigger_time(params: &CostModelParams) -> f64 {
    ops_to_ms(0.0, params)
}

fn ops_to_ms(ops: f64, params: &CostModelParams) -> f64 {
    round_ns((ops * params.cycles_per_op + params.fixed_overhead_cycles) / params.clock_hz * 1000.0)
}

/// Rounds milliseconds to nanosecond resolution.
fn round_ns(ms: f64) -> f64 {
    (ms * 1e6).round() / 1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxOdr {
    /// `1000 / per_trigger_ms`.
    pub exact_hz: f64,
    /// Floored to one decimal.
    pub hz: f64,
    /// Floored to an integer.
    pub reported_hz: u64,
}

pub fn max_odr(per_trigger_ms: f64) -> MaxOdr {
    let exact_hz = 1000.0 / per_trigger_ms;
    // The epsilon keeps values like 1000/1000 from flooring to 0.9.
    let hz = ((exact_hz * 10.0) + 1e-9).floor() / 10.0;
    MaxOdr {
        exact_hz,
        hz,
        reported_hz: (exact_hz + 1e-9).floor() as u64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionReport {
    pub mode: ExecMode,
    pub window_len: usize,
    pub window_s: f64,
    pub mem_bytes: u64,
    pub per_trigger_ms: f64,
    pub max_odr_hz: f64,
    pub reported_odr_hz: u64,
    pub ram_ok: bool,
    pub timing_ok_at_odr: bool,
}

impl PartitionReport {
    pub const CSV_HEADER: &'static str =
        "mode,window_s,mem_bytes,per_trigger_ms,max_odr_hz,ram_ok,timing_ok";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.mode.as_str(),
            self.window_s,
            self.mem_bytes,
            self.per_trigger_ms,
            self.max_odr_hz,
            self.ram_ok,
            self.timing_ok_at_odr
        )
    }
}

pub fn feasibility(
    part: &Part,
    mode: ExecMode,
    window_len: usize,
    profile: &DeviceProfile,
    params: &CostModelParams,
) -> PartitionReport {
    let params = params.at_clock(profile.clock_hz);
    let mem_bytes = memory_footprint(part, mode, window_len, &params);
    let per_trigger_ms = per_trigger_time(part, mode, window_len, &params);
    let odr = max_odr(per_trigger_ms);
    PartitionReport {
        mode,
        window_len,
        window_s: window_len as f64 / profile.odr_hz,
        mem_bytes,
        per_trigger_ms,
        max_odr_hz: odr.hz,
        reported_odr_hz: odr.reported_hz,
        ram_ok: mem_bytes <= profile.data_ram_bytes,
        timing_ok_at_odr: per_trigger_ms < profile.odr_period_ms(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureMap;

    fn reference() -> (Network, Part, Part) {
        let spec = NetworkSpec::reference();
        let net = build_network(spec.clone(), Weights::zeros(&spec).unwrap()).unwrap();
        let (g, h) = split(&net, 3).unwrap();
        (net, g, h)
    }

    #[test]
    fn split_bounds() {
        let (net, g, h) = reference();
        assert_eq!(g.output_shape().unwrap(), Shape::Flat(16));
        assert_eq!(h.input_shape, Shape::Flat(16));
        assert!(g.exit_head.is_some());
        assert_eq!(
            split(&net, 0).unwrap_err(),
            Error::InvalidSplit {
                index: 0,
                layers: 4
            }
        );
        assert!(split(&net, 4).is_err());
    }

    #[test]
    fn reference_workload() {
        let (_, g, _) = reference();
        let w = g.workload(26).unwrap();
        assert_eq!(w.weight_values, 80 + 64 + 34);
        assert_eq!(w.state_values, 384 + 288 + 16);
        assert_eq!(w.ops_per_push, 384 + 288 + 96 + 32);
        let w = g.workload(156).unwrap();
        assert_eq!(w.ops_per_window, 768 * 156 - 3040);
    }

    #[test]
    fn window_buffer_arithmetic() {
        let (_, g, _) = reference();
        let p = CostModelParams::reference();
        let df = memory_footprint(&g, ExecMode::DepthFirst, 156, &p);
        let wf = memory_footprint(&g, ExecMode::WidthFirst, 156, &p);
        assert_eq!(wf - df, 156 * 6 * 4);
        assert_eq!(wf - df, 3744);
    }

    #[test]
    fn empty_part_costs_overhead_only() {
        let p = CostModelParams::reference();
        let empty = Part {
            layers: vec![],
            weights: vec![],
            input_shape: Shape::Flat(16),
            exit_head: None,
        };
        assert_eq!(
            memory_footprint(&empty, ExecMode::DepthFirst, 26, &p),
            p.runtime_overhead_bytes.round() as u64
        );
        let t = per_trigger_time(&empty, ExecMode::DepthFirst, 26, &p);
        assert_eq!(t, store_trigger_time(&p));
        assert!((t - p.fixed_overhead_cycles / p.clock_hz * 1000.0).abs() < 1e-6);
    }

    #[test]
    fn max_odr_values() {
        assert_eq!(max_odr(6.3).hz, 158.7);
        assert_eq!(max_odr(6.3).reported_hz, 158);
        assert_eq!(max_odr(23.0).hz, 43.4);
        assert_eq!(max_odr(23.0).reported_hz, 43);
        assert_eq!(max_odr(1000.0).hz, 1.0);
        assert_eq!(max_odr(1000.0).reported_hz, 1);
    }

    #[test]
    fn concat_checks_boundary() {
        let (_, g, h) = reference();
        assert!(concat(&h, &g).is_err());
        let whole = concat(&g, &h).unwrap();
        assert_eq!(whole.layers.len(), 4);
        let x = Tensor::Map(FeatureMap::<f32>::zeros(1, 6, 26));
        assert_eq!(whole.forward(x).unwrap().into_flat(), vec![0.5, 0.5]);
    }

    #[test]
    fn profile_validation() {
        assert!(DeviceProfile::default().validate().is_ok());
        let p = DeviceProfile {
            data_ram_bytes: 40000,
            ..DeviceProfile::default()
        };
        assert!(p.validate().is_err());
        let mut p = DeviceProfile::default();
        p.currents_ma.imu_only = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn nonphysical_anchors_rejected() {
        let (_, g, _) = reference();
        let mut a = CalibrationAnchors::reference();
        a.depth_first_mem_bytes = 100.0;
        assert!(CostModelParams::calibrate(&g, &a).is_err());
    }
}
