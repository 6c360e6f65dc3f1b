//! Network data model and the width-first reference executor.
//!
//! A network is a linear chain of layers `f = h ∘ g`, cut at `split_index`.
//! Activations flow as [`Tensor`]s: a feature map indexed `[feature][channel][time]`
//! or a flat vector. Convolutions are temporal and depthwise: a layer reading a
//! single-feature map applies each of its `n` filters to that map; a layer
//! reading an `n`-feature map applies filter `j` to feature `j`. Filters are
//! shared across input channels, so an `n`-filter layer over `N_in` channels
//! yields an `n × N_in` map per output step.
//!
//! The math here is generic over [`Float`] so the trainer can run the same
//! code in `f64`; inference uses `f32`.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exit::ExitHead;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d {
        filters: usize,
        kernel_len: usize,
        activation: Activation,
    },
    MaxPoolChannels {
        pool: usize,
    },
    Dense {
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel_len: usize, activation: Activation) -> Self {
        LayerSpec::Conv1d {
            filters,
            kernel_len,
            activation,
        }
    }

    pub fn dense(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        LayerSpec::Dense {
            in_dim,
            out_dim,
            activation,
        }
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv1d {
                filters,
                kernel_len,
                ..
            } => filters * kernel_len + filters,
            LayerSpec::MaxPoolChannels { .. } => 0,
            LayerSpec::Dense {
                in_dim, out_dim, ..
            } => in_dim * out_dim + out_dim,
        }
    }
}

/// Parameters of one layer. Conv coefficients are row-major `[filter][tap]`,
/// where tap `i` multiplies the sample `i` steps older than the newest sample
/// under the kernel. Dense matrices are row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerWeights<F = f32> {
    Conv1d { coeffs: Vec<F>, bias: Vec<F> },
    MaxPoolChannels,
    Dense { matrix: Vec<F>, bias: Vec<F> },
}

impl<F: Float> LayerWeights<F> {
    pub fn zeros(spec: &LayerSpec) -> Self {
        match *spec {
            LayerSpec::Conv1d {
                filters,
                kernel_len,
                ..
            } => LayerWeights::Conv1d {
                coeffs: vec![F::zero(); filters * kernel_len],
                bias: vec![F::zero(); filters],
            },
            LayerSpec::MaxPoolChannels { .. } => LayerWeights::MaxPoolChannels,
            LayerSpec::Dense {
                in_dim, out_dim, ..
            } => LayerWeights::Dense {
                matrix: vec![F::zero(); in_dim * out_dim],
                bias: vec![F::zero(); out_dim],
            },
        }
    }

    pub fn cast<G: Float>(&self) -> LayerWeights<G> {
        let conv = |v: &[F]| v.iter().map(|&x| G::from(x).unwrap()).collect();
        match self {
            LayerWeights::Conv1d { coeffs, bias } => LayerWeights::Conv1d {
                coeffs: conv(coeffs),
                bias: conv(bias),
            },
            LayerWeights::MaxPoolChannels => LayerWeights::MaxPoolChannels,
            LayerWeights::Dense { matrix, bias } => LayerWeights::Dense {
                matrix: conv(matrix),
                bias: conv(bias),
            },
        }
    }

    /// All scalars in a fixed order (coefficients then bias).
    pub fn values(&self) -> impl Iterator<Item = &F> {
        let (a, b): (&[F], &[F]) = match self {
            LayerWeights::Conv1d { coeffs, bias } => (coeffs, bias),
            LayerWeights::MaxPoolChannels => (&[], &[]),
            LayerWeights::Dense { matrix, bias } => (matrix, bias),
        };
        a.iter().chain(b.iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut F> {
        let (a, b): (&mut [F], &mut [F]) = match self {
            LayerWeights::Conv1d { coeffs, bias } => (coeffs, bias),
            LayerWeights::MaxPoolChannels => (&mut [], &mut []),
            LayerWeights::Dense { matrix, bias } => (matrix, bias),
        };
        a.iter_mut().chain(b.iter_mut())
    }

    fn check(&self, spec: &LayerSpec, location: &str) -> Result<()> {
        let (want_a, want_b, got_a, got_b) = match (spec, self) {
            (
                LayerSpec::Conv1d {
                    filters,
                    kernel_len,
                    ..
                },
                LayerWeights::Conv1d { coeffs, bias },
            ) => (filters * kernel_len, *filters, coeffs.len(), bias.len()),
            (LayerSpec::MaxPoolChannels { .. }, LayerWeights::MaxPoolChannels) => (0, 0, 0, 0),
            (
                LayerSpec::Dense {
                    in_dim, out_dim, ..
                },
                LayerWeights::Dense { matrix, bias },
            ) => (in_dim * out_dim, *out_dim, matrix.len(), bias.len()),
            _ => {
                return Err(Error::mismatch(
                    location,
                    "weights of the same layer kind",
                    "weights of another kind",
                ))
            }
        };
        if want_a != got_a || want_b != got_b {
            return Err(Error::mismatch(
                location,
                format!("{want_a} weights + {want_b} biases"),
                format!("{got_a} weights + {got_b} biases"),
            ));
        }
        if self.values().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("weights of {location}")));
        }
        Ok(())
    }
}

/// Static shape of an activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Map {
        features: usize,
        channels: usize,
        len: usize,
    },
    Flat(usize),
}

impl Shape {
    pub fn flat_len(&self) -> usize {
        match *self {
            Shape::Map {
                features,
                channels,
                len,
            } => features * channels * len,
            Shape::Flat(n) => n,
        }
    }

    pub fn window(channels: usize, len: usize) -> Self {
        Shape::Map {
            features: 1,
            channels,
            len,
        }
    }

    /// Output shape of `layer` applied to `self`; `location` names the layer in errors.
    pub fn through(&self, layer: &LayerSpec, location: &str) -> Result<Shape> {
        match (*layer, *self) {
            (
                LayerSpec::Conv1d {
                    filters,
                    kernel_len,
                    ..
                },
                Shape::Map {
                    features,
                    channels,
                    len,
                },
            ) => {
                if filters == 0 || kernel_len == 0 {
                    return Err(Error::mismatch(
                        location,
                        "positive filters and kernel_len",
                        0,
                    ));
                }
                if features != 1 && features != filters {
                    return Err(Error::mismatch(
                        location,
                        format!("1 or {filters} input features"),
                        features,
                    ));
                }
                if kernel_len > len {
                    return Err(Error::mismatch(
                        location,
                        format!("input length >= kernel_len {kernel_len}"),
                        len,
                    ));
                }
                Ok(Shape::Map {
                    features: filters,
                    channels,
                    len: len - kernel_len + 1,
                })
            }
            (LayerSpec::Conv1d { .. }, Shape::Flat(n)) => Err(Error::mismatch(
                location,
                "a feature map",
                format!("flat vector of {n}"),
            )),
            (
                LayerSpec::MaxPoolChannels { pool },
                Shape::Map {
                    features, channels, ..
                },
            ) => {
                if pool != channels {
                    return Err(Error::mismatch(
                        location,
                        format!("pool size equal to channel count {channels}"),
                        pool,
                    ));
                }
                Ok(Shape::Flat(features))
            }
            (LayerSpec::MaxPoolChannels { .. }, Shape::Flat(n)) => Err(Error::mismatch(
                location,
                "a feature map",
                format!("flat vector of {n}"),
            )),
            (
                LayerSpec::Dense {
                    in_dim, out_dim, ..
                },
                shape,
            ) => {
                if shape.flat_len() != in_dim {
                    return Err(Error::mismatch(location, in_dim, shape.flat_len()));
                }
                if out_dim == 0 {
                    return Err(Error::mismatch(location, "positive out_dim", 0));
                }
                Ok(Shape::Flat(out_dim))
            }
        }
    }
}

/// Feature map stored `[feature][channel][time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<F> {
    pub features: usize,
    pub channels: usize,
    pub len: usize,
    pub data: Vec<F>,
}

impl<F: Float> FeatureMap<F> {
    pub fn zeros(features: usize, channels: usize, len: usize) -> Self {
        FeatureMap {
            features,
            channels,
            len,
            data: vec![F::zero(); features * channels * len],
        }
    }

    #[inline]
    pub fn idx(&self, f: usize, c: usize, t: usize) -> usize {
        (f * self.channels + c) * self.len + t
    }

    #[inline]
    pub fn get(&self, f: usize, c: usize, t: usize) -> F {
        self.data[self.idx(f, c, t)]
    }

    /// Time-major flattening `[t][f][c]`, the order Dense layers consume maps in.
    pub fn flatten(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.data.len());
        for t in 0..self.len {
            for f in 0..self.features {
                for c in 0..self.channels {
                    out.push(self.get(f, c, t));
                }
            }
        }
        out
    }

    pub fn unflatten(values: &[F], features: usize, channels: usize, len: usize) -> Self {
        let mut map = Self::zeros(features, channels, len);
        let mut it = values.iter();
        for t in 0..len {
            for f in 0..features {
                for c in 0..channels {
                    let i = map.idx(f, c, t);
                    map.data[i] = *it.next().expect("length checked by caller");
                }
            }
        }
        map
    }

    pub fn shape(&self) -> Shape {
        Shape::Map {
            features: self.features,
            channels: self.channels,
            len: self.len,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tensor<F> {
    Map(FeatureMap<F>),
    Flat(Vec<F>),
}

impl<F: Float> Tensor<F> {
    pub fn shape(&self) -> Shape {
        match self {
            Tensor::Map(m) => m.shape(),
            Tensor::Flat(v) => Shape::Flat(v.len()),
        }
    }

    pub fn into_flat(self) -> Vec<F> {
        match self {
            Tensor::Map(m) => m.flatten(),
            Tensor::Flat(v) => v,
        }
    }

    /// Reinterprets a flat vector as `shape`; used at partition boundaries.
    pub fn from_flat(values: Vec<F>, shape: Shape) -> Result<Self> {
        if values.len() != shape.flat_len() {
            return Err(Error::mismatch(
                "tensor reshape",
                shape.flat_len(),
                values.len(),
            ));
        }
        Ok(match shape {
            Shape::Map {
                features,
                channels,
                len,
            } => Tensor::Map(FeatureMap::unflatten(&values, features, channels, len)),
            Shape::Flat(_) => Tensor::Flat(values),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: u64,
    pub channels: Vec<f32>,
}

impl Sample {
    pub fn new(index: u64, channels: Vec<f32>) -> Self {
        Sample { index, channels }
    }
}

/// `T` consecutive samples, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub samples: Vec<Sample>,
}

impl Window {
    pub fn new(samples: Vec<Sample>) -> Self {
        Window { samples }
    }

    /// Builds a window from channel rows, indexing samples from `start`.
    pub fn from_rows(start: u64, rows: &[Vec<f32>]) -> Self {
        Window {
            samples: rows
                .iter()
                .enumerate()
                .map(|(i, r)| Sample::new(start + i as u64, r.clone()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn scaled(&self, alpha: f32) -> Self {
        Window {
            samples: self
                .samples
                .iter()
                .map(|s| Sample::new(s.index, s.channels.iter().map(|v| v * alpha).collect()))
                .collect(),
        }
    }

    pub fn to_map<F: Float>(&self, channels: usize) -> Result<FeatureMap<F>> {
        let mut map = FeatureMap::zeros(1, channels, self.samples.len());
        for (t, s) in self.samples.iter().enumerate() {
            if s.channels.len() != channels {
                return Err(Error::ChannelMismatch {
                    expected: channels,
                    actual: s.channels.len(),
                });
            }
            for (c, &v) in s.channels.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("sample {}", s.index)));
                }
                let i = map.idx(0, c, t);
                map.data[i] = F::from(v).unwrap();
            }
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub odr_hz: f64,
    pub window_len: usize,
    pub channels: usize,
    pub layers: Vec<LayerSpec>,
    pub split_index: usize,
    pub ee_threshold: f32,
}

impl NetworkSpec {
    /// The reference sensor network: two 16-filter temporal convolutions, a
    /// max-pool across the six IMU channels (16 features), and a two-class
    /// softmax classifier as `h`. One-second windows at 26 Hz.
    pub fn reference() -> Self {
        NetworkSpec {
            odr_hz: 26.0,
            window_len: 26,
            channels: 6,
            layers: vec![
                LayerSpec::conv(16, 4, Activation::Relu),
                LayerSpec::conv(16, 3, Activation::Relu),
                LayerSpec::MaxPoolChannels { pool: 6 },
                LayerSpec::dense(16, 2, Activation::Softmax),
            ],
            split_index: 3,
            ee_threshold: 0.5,
        }
    }

    pub fn with_window_len(mut self, window_len: usize) -> Self {
        self.window_len = window_len;
        self
    }
}

/// Coefficients for every layer plus the exit head.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub layers: Vec<LayerWeights<f32>>,
    pub exit: LayerWeights<f32>,
}

impl Weights {
    /// All-zero weights matching `spec` (exit head sized from g's output).
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let shapes = shape_chain(spec)?;
        Ok(Weights {
            layers: spec.layers.iter().map(LayerWeights::zeros).collect(),
            exit: LayerWeights::zeros(&exit_spec(shapes[spec.split_index].flat_len())),
        })
    }
}

pub(crate) fn exit_spec(in_dim: usize) -> LayerSpec {
    LayerSpec::dense(in_dim, 2, Activation::Softmax)
}

fn shape_chain(spec: &NetworkSpec) -> Result<Vec<Shape>> {
    if spec.channels == 0 || spec.window_len == 0 {
        return Err(Error::mismatch(
            "network input",
            "positive channels and window_len",
            0,
        ));
    }
    if spec.split_index == 0 || spec.split_index >= spec.layers.len() {
        return Err(Error::InvalidSplit {
            index: spec.split_index,
            layers: spec.layers.len(),
        });
    }
    let mut shapes = vec![Shape::window(spec.channels, spec.window_len)];
    for (i, layer) in spec.layers.iter().enumerate() {
        let next = shapes[i].through(layer, &format!("layer {i}"))?;
        shapes.push(next);
    }
    Ok(shapes)
}

/// A validated, immutable network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    weights: Weights,
    shapes: Vec<Shape>,
    exit_head: ExitHead,
}

pub fn build_network(spec: NetworkSpec, weights: Weights) -> Result<Network> {
    let shapes = shape_chain(&spec)?;
    let g_out = shapes[spec.split_index];
    if !matches!(g_out, Shape::Flat(_)) {
        return Err(Error::mismatch(
            format!("layer {} (end of g)", spec.split_index - 1),
            "a flat feature vector",
            "a feature map",
        ));
    }
    if weights.layers.len() != spec.layers.len() {
        return Err(Error::mismatch(
            "weights",
            format!("{} layers", spec.layers.len()),
            format!("{} layers", weights.layers.len()),
        ));
    }
    for (i, (l, w)) in spec.layers.iter().zip(&weights.layers).enumerate() {
        w.check(l, &format!("layer {i}"))?;
    }
    weights
        .exit
        .check(&exit_spec(g_out.flat_len()), "exit head")?;
    if !spec.odr_hz.is_finite() || spec.odr_hz <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "odr_hz must be positive, got {}",
            spec.odr_hz
        )));
    }
    let exit_head = ExitHead::new(weights.exit.clone(), g_out.flat_len(), spec.ee_threshold)?;
    Ok(Network {
        spec,
        weights,
        shapes,
        exit_head,
    })
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn exit_head(&self) -> &ExitHead {
        &self.exit_head
    }

    pub fn window_len(&self) -> usize {
        self.spec.window_len
    }

    pub fn channels(&self) -> usize {
        self.spec.channels
    }

    pub fn split_index(&self) -> usize {
        self.spec.split_index
    }

    /// Shape entering layer `i`; index `layers.len()` is the final output.
    pub fn shape_at(&self, i: usize) -> Shape {
        self.shapes[i]
    }

    pub fn feature_dim(&self) -> usize {
        self.shapes[self.spec.split_index].flat_len()
    }

    pub fn output_dim(&self) -> usize {
        self.shapes[self.spec.layers.len()].flat_len()
    }

    /// g's layers and weights.
    pub fn g_layers(&self) -> impl Iterator<Item = (&LayerSpec, &LayerWeights<f32>)> {
        let s = self.spec.split_index;
        self.spec.layers[..s].iter().zip(&self.weights.layers[..s])
    }

    /// Same network with different weights; revalidated.
    pub fn with_weights(&self, weights: Weights) -> Result<Network> {
        build_network(self.spec.clone(), weights)
    }
}

#[inline]
fn activate<F: Float>(x: F, act: Activation) -> F {
    match act {
        Activation::Relu => {
            if x > F::zero() {
                x
            } else {
                F::zero()
            }
        }
        // Softmax is a vector operation and handled by the caller.
        Activation::None | Activation::Softmax => x,
    }
}

/// Numerically stable softmax.
pub fn softmax<F: Float>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().copied().fold(F::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn finish_vector<F: Float>(mut pre: Vec<F>, act: Activation) -> Vec<F> {
    match act {
        Activation::Softmax => softmax(&pre),
        _ => {
            for v in pre.iter_mut() {
                *v = activate(*v, act);
            }
            pre
        }
    }
}

/// Applies bias then activation to a completed convolution sum.
#[inline]
pub(crate) fn finish_conv<F: Float>(acc: F, bias: F, act: Activation) -> F {
    activate(acc + bias, act)
}

/// Valid-mode temporal convolution, width-first:
/// `out[j][c][τ] = act(Σ_i coeffs[j][i]·x[src(j)][c][τ+K−1−i] + bias[j])`.
///
/// Terms are summed oldest sample first, the same order the streaming engine
/// accumulates them in.
pub fn conv1d_width_first<F: Float>(
    filters: usize,
    kernel_len: usize,
    activation: Activation,
    coeffs: &[F],
    bias: &[F],
    input: &FeatureMap<F>,
) -> Result<FeatureMap<F>> {
    if input.len < kernel_len {
        return Err(Error::InputTooShort {
            len: input.len,
            kernel_len,
        });
    }
    if input.features != 1 && input.features != filters {
        return Err(Error::mismatch(
            "conv1d input",
            format!("1 or {filters} features"),
            input.features,
        ));
    }
    if coeffs.len() != filters * kernel_len || bias.len() != filters {
        return Err(Error::mismatch(
            "conv1d weights",
            filters * kernel_len,
            coeffs.len(),
        ));
    }
    let out_len = input.len - kernel_len + 1;
    let mut out = FeatureMap::zeros(filters, input.channels, out_len);
    for j in 0..filters {
        let src = if input.features == 1 { 0 } else { j };
        let taps = &coeffs[j * kernel_len..(j + 1) * kernel_len];
        for c in 0..input.channels {
            let row = &input.data[input.idx(src, c, 0)..input.idx(src, c, 0) + input.len];
            for tau in 0..out_len {
                let mut acc = F::zero();
                for m in 0..kernel_len {
                    acc = acc + taps[kernel_len - 1 - m] * row[tau + m];
                }
                let o = out.idx(j, c, tau);
                out.data[o] = finish_conv(acc, bias[j], activation);
            }
        }
    }
    Ok(out)
}

/// Max across the channel axis of an `n × channels` block (row-major).
pub fn maxpool_channels<F: Float>(input: &[F], channels: usize) -> Result<Vec<F>> {
    if channels == 0 || !input.len().is_multiple_of(channels) {
        return Err(Error::mismatch(
            "maxpool_channels",
            format!("a multiple of {channels} values"),
            input.len(),
        ));
    }
    Ok(input
        .chunks(channels)
        .map(|row| row.iter().copied().fold(F::neg_infinity(), F::max))
        .collect())
}

/// Pools the channel axis at every step, then keeps the maximum across steps.
pub fn maxpool_layer<F: Float>(pool: usize, input: &FeatureMap<F>) -> Result<Vec<F>> {
    if pool != input.channels {
        return Err(Error::mismatch("maxpool", input.channels, pool));
    }
    let mut out = vec![F::neg_infinity(); input.features];
    let mut block = vec![F::zero(); input.features * input.channels];
    for t in 0..input.len {
        for f in 0..input.features {
            for c in 0..input.channels {
                block[f * input.channels + c] = input.get(f, c, t);
            }
        }
        for (o, v) in out
            .iter_mut()
            .zip(maxpool_channels(&block, input.channels)?)
        {
            *o = o.max(v);
        }
    }
    Ok(out)
}

pub fn dense_forward<F: Float>(
    out_dim: usize,
    activation: Activation,
    matrix: &[F],
    bias: &[F],
    input: &[F],
) -> Result<Vec<F>> {
    let in_dim = input.len();
    if matrix.len() != in_dim * out_dim || bias.len() != out_dim {
        return Err(Error::mismatch("dense", in_dim * out_dim, matrix.len()));
    }
    let pre = (0..out_dim)
        .map(|k| {
            let row = &matrix[k * in_dim..(k + 1) * in_dim];
            let mut acc = F::zero();
            for (w, x) in row.iter().zip(input) {
                acc = acc + *w * *x;
            }
            acc + bias[k]
        })
        .collect();
    Ok(finish_vector(pre, activation))
}

pub fn forward_layer<F: Float>(
    spec: &LayerSpec,
    weights: &LayerWeights<F>,
    input: Tensor<F>,
) -> Result<Tensor<F>> {
    match (spec, weights, input) {
        (
            &LayerSpec::Conv1d {
                filters,
                kernel_len,
                activation,
            },
            LayerWeights::Conv1d { coeffs, bias },
            Tensor::Map(m),
        ) => Ok(Tensor::Map(conv1d_width_first(
            filters, kernel_len, activation, coeffs, bias, &m,
        )?)),
        (&LayerSpec::MaxPoolChannels { pool }, LayerWeights::MaxPoolChannels, Tensor::Map(m)) => {
            Ok(Tensor::Flat(maxpool_layer(pool, &m)?))
        }
        (
            &LayerSpec::Dense {
                in_dim,
                out_dim,
                activation,
            },
            LayerWeights::Dense { matrix, bias },
            input,
        ) => {
            let x = input.into_flat();
            if x.len() != in_dim {
                return Err(Error::mismatch("dense input", in_dim, x.len()));
            }
            Ok(Tensor::Flat(dense_forward(
                out_dim, activation, matrix, bias, &x,
            )?))
        }
        (spec, _, input) => Err(Error::mismatch(
            format!("{spec:?}"),
            "matching weights and input",
            format!("{:?}", input.shape()),
        )),
    }
}

/// Width-first evaluation of a layer chain.
pub fn forward_chain<'a, F: Float + 'a>(
    layers: impl IntoIterator<Item = (&'a LayerSpec, &'a LayerWeights<F>)>,
    input: Tensor<F>,
) -> Result<Tensor<F>> {
    layers
        .into_iter()
        .try_fold(input, |x, (spec, w)| forward_layer(spec, w, x))
}

/// Feature extraction `g` over a full window, width-first. This is the
/// reference the streaming engine is checked against.
pub fn forward_g(network: &Network, window: &Window) -> Result<FeatureVector> {
    if window.len() != network.window_len() {
        return Err(Error::mismatch(
            "window",
            format!("{} samples", network.window_len()),
            window.len(),
        ));
    }
    let input = Tensor::Map(window.to_map::<f32>(network.channels())?);
    let out = forward_chain(network.g_layers(), input)?;
    Ok(FeatureVector {
        values: out.into_flat(),
    })
}

/// Task head `h` on g's features.
pub fn forward_h(network: &Network, features: &FeatureVector) -> Result<Vec<f32>> {
    if features.len() != network.feature_dim() {
        return Err(Error::mismatch(
            "features",
            network.feature_dim(),
            features.len(),
        ));
    }
    let s = network.split_index();
    let layers = network.spec.layers[s..]
        .iter()
        .zip(&network.weights.layers[s..]);
    let out = forward_chain(layers, Tensor::Flat(features.values.clone()))?;
    Ok(out.into_flat())
}
