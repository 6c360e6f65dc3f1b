//! Depth-first executor for `g`.
//!
//! Every pushed sample updates the partial sums it participates in and any
//! value that completes is forwarded downstream in the same call, so the raw
//! window is never stored. A convolution keeps a ring of `min(K, L_out)`
//! accumulators per (filter, channel); for `K = T` this is one accumulator
//! updated `y ← y + c_i·x` as each sample arrives.
//!
//! Partial sums are accumulated oldest sample first, in the same order as
//! [`conv1d_width_first`](crate::model::conv1d_width_first), so the streamed
//! features are bit-identical to the width-first reference.

use crate::error::{Error, Result};
use crate::model::{
    dense_forward, finish_conv, finish_vector, Activation, FeatureVector, LayerSpec, LayerWeights,
    Network, Sample, Shape,
};
use crate::partition::{memory_footprint, split, CostModelParams, ExecMode};

#[derive(Debug, Clone, PartialEq)]
enum Stage {
    Conv {
        filters: usize,
        kernel_len: usize,
        activation: Activation,
        in_features: usize,
        channels: usize,
        out_len: usize,
        slots: usize,
        acc: Vec<f32>,
        taps: Vec<u16>,
    },
    Pool {
        features: usize,
        channels: usize,
        in_len: usize,
        running: Vec<f32>,
    },
    /// Dense layer consuming a feature map, accumulated column by column.
    StreamDense {
        out_dim: usize,
        in_dim: usize,
        activation: Activation,
        width: usize,
        in_len: usize,
        acc: Vec<f32>,
    },
    Dense {
        out_dim: usize,
        activation: Activation,
    },
}

enum Emit {
    Column(usize, Vec<f32>),
    Flat(Vec<f32>),
    Nothing,
}

impl Stage {
    fn build(spec: &LayerSpec, input: Shape) -> Stage {
        match (*spec, input) {
            (
                LayerSpec::Conv1d {
                    filters,
                    kernel_len,
                    activation,
                },
                Shape::Map {
                    features,
                    channels,
                    len,
                },
            ) => {
                let out_len = len - kernel_len + 1;
                let slots = kernel_len.min(out_len);
                Stage::Conv {
                    filters,
                    kernel_len,
                    activation,
                    in_features: features,
                    channels,
                    out_len,
                    slots,
                    acc: vec![0.0; filters * channels * slots],
                    taps: vec![0; filters * channels * slots],
                }
            }
            (
                LayerSpec::MaxPoolChannels { .. },
                Shape::Map {
                    features,
                    channels,
                    len,
                },
            ) => Stage::Pool {
                features,
                channels,
                in_len: len,
                running: vec![f32::NEG_INFINITY; features],
            },
            (
                LayerSpec::Dense {
                    in_dim,
                    out_dim,
                    activation,
                },
                Shape::Map {
                    features,
                    channels,
                    len,
                },
            ) => Stage::StreamDense {
                out_dim,
                in_dim,
                activation,
                width: features * channels,
                in_len: len,
                acc: vec![0.0; out_dim],
            },
            (
                LayerSpec::Dense {
                    out_dim,
                    activation,
                    ..
                },
                Shape::Flat(_),
            ) => Stage::Dense {
                out_dim,
                activation,
            },
            _ => unreachable!("shape chain validated by build_network"),
        }
    }

    /// Values held across pushes.
    fn state_values(&self) -> usize {
        match self {
            Stage::Conv { acc, .. } => acc.len(),
            Stage::Pool { running, .. } => running.len(),
            Stage::StreamDense { acc, .. } => acc.len(),
            Stage::Dense { .. } => 0,
        }
    }

    fn reset(&mut self) {
        match self {
            Stage::Conv { acc, taps, .. } => {
                acc.fill(0.0);
                taps.fill(0);
            }
            Stage::Pool { running, .. } => running.fill(f32::NEG_INFINITY),
            Stage::StreamDense { acc, .. } => acc.fill(0.0),
            Stage::Dense { .. } => {}
        }
    }

    fn step(&mut self, weights: &LayerWeights<f32>, input: Emit) -> Emit {
        match (self, weights, input) {
            (
                Stage::Conv {
                    filters,
                    kernel_len,
                    activation,
                    in_features,
                    channels,
                    out_len,
                    slots,
                    acc,
                    taps,
                },
                LayerWeights::Conv1d { coeffs, bias },
                Emit::Column(s, column),
            ) => {
                let (k, c_n, slots) = (*kernel_len, *channels, *slots);
                let lo = s.saturating_sub(k - 1);
                let hi = s.min(*out_len - 1);
                let mut done = None;
                for tau in lo..=hi {
                    let tap = tau + k - 1 - s;
                    let slot = tau % slots;
                    let completes = tap == 0;
                    let mut out = if completes {
                        vec![0.0; *filters * c_n]
                    } else {
                        Vec::new()
                    };
                    for j in 0..*filters {
                        let src = if *in_features == 1 { 0 } else { j };
                        let coef = coeffs[j * k + tap];
                        for c in 0..c_n {
                            let a = (j * c_n + c) * slots + slot;
                            if tap == k - 1 {
                                acc[a] = 0.0;
                                taps[a] = 0;
                            }
                            acc[a] += coef * column[src * c_n + c];
                            taps[a] += 1;
                            debug_assert!(taps[a] as usize <= k);
                            if completes {
                                debug_assert_eq!(taps[a] as usize, k);
                                out[j * c_n + c] = finish_conv(acc[a], bias[j], *activation);
                            }
                        }
                    }
                    if completes {
                        done = Some(Emit::Column(tau, out));
                    }
                }
                done.unwrap_or(Emit::Nothing)
            }
            (
                Stage::Pool {
                    features,
                    channels,
                    in_len,
                    running,
                },
                LayerWeights::MaxPoolChannels,
                Emit::Column(tau, column),
            ) => {
                for f in 0..*features {
                    let row = &column[f * *channels..(f + 1) * *channels];
                    let m = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                    running[f] = running[f].max(m);
                }
                if tau + 1 == *in_len {
                    Emit::Flat(running.clone())
                } else {
                    Emit::Nothing
                }
            }
            (
                Stage::StreamDense {
                    out_dim,
                    in_dim,
                    activation,
                    width,
                    in_len,
                    acc,
                },
                LayerWeights::Dense { matrix, bias },
                Emit::Column(tau, column),
            ) => {
                let base = tau * *width;
                for (k, a) in acc.iter_mut().enumerate() {
                    let row = &matrix[k * *in_dim + base..k * *in_dim + base + *width];
                    for (w, x) in row.iter().zip(&column) {
                        *a += *w * *x;
                    }
                }
                if tau + 1 == *in_len {
                    let pre = (0..*out_dim).map(|k| acc[k] + bias[k]).collect();
                    Emit::Flat(finish_vector(pre, *activation))
                } else {
                    Emit::Nothing
                }
            }
            (
                Stage::Dense {
                    out_dim,
                    activation,
                },
                LayerWeights::Dense { matrix, bias },
                Emit::Flat(x),
            ) => Emit::Flat(
                dense_forward(*out_dim, *activation, matrix, bias, &x)
                    .expect("shapes validated by build_network"),
            ),
            (_, _, Emit::Nothing) => Emit::Nothing,
            _ => unreachable!("stage/input pairing validated by build_network"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PushResult {
    InProgress,
    WindowComplete(FeatureVector),
}

/// Per-stream accumulators for depth-first execution of a network's `g`.
#[derive(Debug, Clone)]
pub struct StreamState<'n> {
    network: &'n Network,
    stages: Vec<Stage>,
    samples_consumed: usize,
    window_features: Option<FeatureVector>,
    auto_reset: bool,
}

impl PartialEq for StreamState<'_> {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.network, other.network)
            && self.stages == other.stages
            && self.samples_consumed == other.samples_consumed
            && self.window_features == other.window_features
            && self.auto_reset == other.auto_reset
    }
}

/// Fresh stream with auto-reset after each completed window.
pub fn init_stream(network: &Network) -> StreamState<'_> {
    StreamState::new(network, true)
}

pub fn push_sample(state: &mut StreamState<'_>, sample: &Sample) -> Result<PushResult> {
    state.push(sample)
}

pub fn reset(state: &mut StreamState<'_>) {
    state.reset()
}

impl<'n> StreamState<'n> {
    pub fn new(network: &'n Network, auto_reset: bool) -> Self {
        let stages = network
            .g_layers()
            .enumerate()
            .map(|(i, (spec, _))| Stage::build(spec, network.shape_at(i)))
            .collect();
        StreamState {
            network,
            stages,
            samples_consumed: 0,
            window_features: None,
            auto_reset,
        }
    }

    pub fn network(&self) -> &'n Network {
        self.network
    }

    pub fn samples_consumed(&self) -> usize {
        self.samples_consumed
    }

    /// Features of the completed window, present only while a completed
    /// window is held (auto-reset off).
    pub fn features(&self) -> Option<&FeatureVector> {
        self.window_features.as_ref()
    }

    /// Number of scalars persisted between pushes.
    pub fn state_values(&self) -> usize {
        self.stages.iter().map(Stage::state_values).sum()
    }

    pub fn reset(&mut self) {
        for s in &mut self.stages {
            s.reset();
        }
        self.samples_consumed = 0;
        self.window_features = None;
    }

    pub fn push(&mut self, sample: &Sample) -> Result<PushResult> {
        let net = self.network;
        let t = net.window_len();
        if sample.channels.len() != net.channels() {
            return Err(Error::ChannelMismatch {
                expected: net.channels(),
                actual: sample.channels.len(),
            });
        }
        if sample.channels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sample {}", sample.index)));
        }
        if self.samples_consumed == t {
            if self.auto_reset {
                self.reset();
            } else {
                return Err(Error::WindowOverrun { window_len: t });
            }
        }

        let mut signal = Emit::Column(self.samples_consumed, sample.channels.clone());
        let weights = &net.weights().layers;
        for (stage, w) in self.stages.iter_mut().zip(weights) {
            signal = stage.step(w, signal);
            if matches!(signal, Emit::Nothing) {
                break;
            }
        }
        self.samples_consumed += 1;

        match signal {
            Emit::Flat(values) => {
                debug_assert_eq!(self.samples_consumed, t);
                let features = FeatureVector { values };
                if self.auto_reset {
                    self.reset();
                } else {
                    self.window_features = Some(features.clone());
                }
                Ok(PushResult::WindowComplete(features))
            }
            _ => {
                debug_assert!(self.samples_consumed < t);
                Ok(PushResult::InProgress)
            }
        }
    }
}

/// Depth-first data-memory footprint of the sensor side (g plus exit head)
/// under the reference cost model.
pub fn peak_memory_bytes(network: &Network) -> u64 {
    let (g, _) = split(network, network.split_index()).expect("declared split is valid");
    memory_footprint(
        &g,
        ExecMode::DepthFirst,
        network.window_len(),
        &CostModelParams::reference(),
    )
}
