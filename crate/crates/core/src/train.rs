//! Two-step training: `f = h ∘ g` end to end, then the exit head on frozen `g`.
//!
//! Plain mini-batch SGD on softmax cross-entropy. Training runs in `f64` on a
//! copy of the parameters and writes back `f32`. Max-pool gradients go to the
//! first maximum in (time, channel) scan order, so ties resolve to the earliest
//! step and then the lowest channel index.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{derive_seed, LabeledWindow};
use crate::error::{Error, Result};
use crate::exit::{ee_decide, ExitHead, Gate};
use crate::model::{
    conv1d_width_first, dense_forward, exit_spec, finish_vector, forward_g, Activation, FeatureMap,
    FeatureVector, LayerSpec, LayerWeights, Network, NetworkSpec, Shape, Tensor, Weights,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of windows held out for evaluation.
    pub holdout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 0.01,
            batch_size: 16,
            seed: 42,
            holdout: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(
                "learning rate must be non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(Error::InvalidConfig("holdout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Uniform in ±sqrt(6 / (fan_in + fan_out)), biases zero.
pub fn init_layer(spec: &LayerSpec, rng: &mut ChaCha8Rng) -> LayerWeights<f32> {
    let mut w = LayerWeights::zeros(spec);
    let (fan_in, fan_out) = match *spec {
        LayerSpec::Conv1d { kernel_len, .. } => (kernel_len, kernel_len),
        LayerSpec::Dense {
            in_dim, out_dim, ..
        } => (in_dim, out_dim),
        LayerSpec::MaxPoolChannels { .. } => return w,
    };
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    match &mut w {
        LayerWeights::Conv1d { coeffs: m, .. } | LayerWeights::Dense { matrix: m, .. } => {
            for v in m.iter_mut() {
                *v = rng.random_range(-limit..=limit);
            }
        }
        LayerWeights::MaxPoolChannels => {}
    }
    w
}

pub fn init_weights(spec: &NetworkSpec, seed: u64) -> Result<Weights> {
    let zeros = Weights::zeros(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .layers
        .iter()
        .map(|l| init_layer(l, &mut rng))
        .collect();
    let in_dim = match &zeros.exit {
        LayerWeights::Dense { matrix, .. } => matrix.len() / 2,
        _ => unreachable!(),
    };
    let exit = init_layer(&exit_spec(in_dim), &mut rng);
    Ok(Weights { layers, exit })
}

enum Cache {
    Conv {
        input: FeatureMap<f64>,
        pre: Vec<f64>,
    },
    Pool {
        in_shape: Shape,
        argmax: Vec<usize>,
    },
    Dense {
        input: Vec<f64>,
        in_shape: Shape,
        pre: Vec<f64>,
        out: Vec<f64>,
    },
}

impl Cache {
    /// Discrete activation pattern (ReLU signs, pool winners).
    fn pattern(&self, acts: Activation, out: &mut Vec<u64>) {
        match self {
            Cache::Conv { pre, .. } | Cache::Dense { pre, .. } if acts == Activation::Relu => {
                out.extend(pre.iter().map(|&z| (z > 0.0) as u64))
            }
            Cache::Pool { argmax, .. } => out.extend(argmax.iter().map(|&i| i as u64)),
            _ => {}
        }
    }
}

fn layer_activation(spec: &LayerSpec) -> Activation {
    match *spec {
        LayerSpec::Conv1d { activation, .. } | LayerSpec::Dense { activation, .. } => activation,
        LayerSpec::MaxPoolChannels { .. } => Activation::None,
    }
}

fn forward_cached(
    layers: &[LayerSpec],
    params: &[LayerWeights<f64>],
    input: Tensor<f64>,
) -> Result<(Vec<f64>, Vec<Cache>)> {
    let mut x = input;
    let mut caches = Vec::with_capacity(layers.len());
    for (spec, w) in layers.iter().zip(params) {
        match (*spec, w, x) {
            (
                LayerSpec::Conv1d {
                    filters,
                    kernel_len,
                    activation,
                },
                LayerWeights::Conv1d { coeffs, bias },
                Tensor::Map(m),
            ) => {
                if activation == Activation::Softmax {
                    return Err(Error::InvalidConfig(
                        "softmax on a convolution is not trainable".into(),
                    ));
                }
                let pre =
                    conv1d_width_first(filters, kernel_len, Activation::None, coeffs, bias, &m)?;
                let mut out = pre.clone();
                out.data = finish_vector(out.data, activation);
                caches.push(Cache::Conv {
                    input: m,
                    pre: pre.data,
                });
                x = Tensor::Map(out);
            }
            (
                LayerSpec::MaxPoolChannels { pool },
                LayerWeights::MaxPoolChannels,
                Tensor::Map(m),
            ) => {
                if pool != m.channels {
                    return Err(Error::mismatch("maxpool", m.channels, pool));
                }
                let mut best = vec![f64::NEG_INFINITY; m.features];
                let mut argmax = vec![0usize; m.features];
                for t in 0..m.len {
                    for f in 0..m.features {
                        for c in 0..m.channels {
                            let v = m.get(f, c, t);
                            if v > best[f] {
                                best[f] = v;
                                argmax[f] = m.idx(f, c, t);
                            }
                        }
                    }
                }
                caches.push(Cache::Pool {
                    in_shape: m.shape(),
                    argmax,
                });
                x = Tensor::Flat(best);
            }
            (
                LayerSpec::Dense {
                    out_dim,
                    activation,
                    ..
                },
                LayerWeights::Dense { matrix, bias },
                input,
            ) => {
                let in_shape = input.shape();
                let flat = input.into_flat();
                let pre = dense_forward(out_dim, Activation::None, matrix, bias, &flat)?;
                let out = finish_vector(pre.clone(), activation);
                caches.push(Cache::Dense {
                    input: flat,
                    in_shape,
                    pre,
                    out: out.clone(),
                });
                x = Tensor::Flat(out);
            }
            (spec, _, x) => {
                return Err(Error::mismatch(
                    format!("{spec:?}"),
                    "matching input",
                    format!("{:?}", x.shape()),
                ))
            }
        }
    }
    Ok((x.into_flat(), caches))
}

/// Gradient w.r.t. pre-activations given the gradient w.r.t. outputs.
fn through_activation(act: Activation, pre: &[f64], out: &[f64], dout: &[f64]) -> Vec<f64> {
    match act {
        Activation::None => dout.to_vec(),
        Activation::Relu => pre
            .iter()
            .zip(dout)
            .map(|(&z, &d)| if z > 0.0 { d } else { 0.0 })
            .collect(),
        Activation::Softmax => {
            let dot: f64 = out.iter().zip(dout).map(|(p, d)| p * d).sum();
            out.iter().zip(dout).map(|(p, d)| p * (d - dot)).collect()
        }
    }
}

/// Accumulates parameter gradients into `grads`; `dpre_last` is the gradient
/// w.r.t. the last layer's pre-activation.
fn backward(
    layers: &[LayerSpec],
    params: &[LayerWeights<f64>],
    caches: &[Cache],
    dpre_last: Vec<f64>,
    grads: &mut [LayerWeights<f64>],
) {
    let mut dout: Option<Vec<f64>> = None;
    for li in (0..layers.len()).rev() {
        let act = layer_activation(&layers[li]);
        let dx = match (&layers[li], &params[li], &caches[li], &mut grads[li]) {
            (
                &LayerSpec::Conv1d {
                    filters,
                    kernel_len: k,
                    ..
                },
                LayerWeights::Conv1d { coeffs, .. },
                Cache::Conv { input, pre },
                LayerWeights::Conv1d {
                    coeffs: gc,
                    bias: gb,
                },
            ) => {
                let dz = match dout.take() {
                    Some(d) => through_activation(act, pre, &[], &d),
                    None => dpre_last.clone(),
                };
                let out_len = input.len - k + 1;
                let mut dx = vec![0.0; input.data.len()];
                for j in 0..filters {
                    let src = if input.features == 1 { 0 } else { j };
                    for c in 0..input.channels {
                        for tau in 0..out_len {
                            let g = dz[(j * input.channels + c) * out_len + tau];
                            if g == 0.0 {
                                continue;
                            }
                            gb[j] += g;
                            for i in 0..k {
                                let xi = input.idx(src, c, tau + k - 1 - i);
                                gc[j * k + i] += g * input.data[xi];
                                dx[xi] += coeffs[j * k + i] * g;
                            }
                        }
                    }
                }
                dx
            }
            (_, _, Cache::Pool { in_shape, argmax }, _) => {
                let d = dout.take().unwrap_or_else(|| dpre_last.clone());
                let mut dx = vec![0.0; in_shape.flat_len()];
                for (f, &i) in argmax.iter().enumerate() {
                    dx[i] += d[f];
                }
                dx
            }
            (
                &LayerSpec::Dense {
                    in_dim, out_dim, ..
                },
                LayerWeights::Dense { matrix, .. },
                Cache::Dense {
                    input,
                    in_shape,
                    pre,
                    out,
                },
                LayerWeights::Dense {
                    matrix: gm,
                    bias: gb,
                },
            ) => {
                let dz = match dout.take() {
                    Some(d) => through_activation(act, pre, out, &d),
                    None => dpre_last.clone(),
                };
                let mut dflat = vec![0.0; in_dim];
                for kk in 0..out_dim {
                    let g = dz[kk];
                    gb[kk] += g;
                    for i in 0..in_dim {
                        gm[kk * in_dim + i] += g * input[i];
                        dflat[i] += matrix[kk * in_dim + i] * g;
                    }
                }
                match *in_shape {
                    // Back from time-major flattening to map layout.
                    Shape::Map {
                        features,
                        channels,
                        len,
                    } => FeatureMap::unflatten(&dflat, features, channels, len).data,
                    Shape::Flat(_) => dflat,
                }
            }
            _ => unreachable!("caches follow layers"),
        };
        dout = Some(dx);
    }
}

fn cross_entropy(probs: &[f64], class: usize) -> f64 {
    -probs[class].max(1e-300).ln()
}

/// Parameters of a layer chain in `f64`, trained as one classifier.
struct Trainable {
    layers: Vec<LayerSpec>,
    params: Vec<LayerWeights<f64>>,
}

impl Trainable {
    fn new(layers: &[LayerSpec], weights: &[LayerWeights<f32>]) -> Result<Self> {
        match layers.last() {
            Some(LayerSpec::Dense {
                activation: Activation::Softmax,
                ..
            }) => {}
            _ => {
                return Err(Error::InvalidConfig(
                    "training needs a final dense softmax layer".into(),
                ))
            }
        }
        Ok(Trainable {
            layers: layers.to_vec(),
            params: weights.iter().map(LayerWeights::cast).collect(),
        })
    }

    fn zero_grads(&self) -> Vec<LayerWeights<f64>> {
        self.layers.iter().map(LayerWeights::zeros).collect()
    }

    /// Mean loss over `batch`, adding mean gradients into `grads` when given.
    fn loss(
        &self,
        batch: &[(&Tensor<f64>, usize)],
        mut grads: Option<&mut [LayerWeights<f64>]>,
    ) -> Result<f64> {
        let n = batch.len() as f64;
        let mut total = 0.0;
        for (x, class) in batch {
            let (probs, caches) = forward_cached(&self.layers, &self.params, (*x).clone())?;
            total += cross_entropy(&probs, *class);
            if let Some(g) = grads.as_deref_mut() {
                let dpre: Vec<f64> = probs
                    .iter()
                    .enumerate()
                    .map(|(k, p)| (p - if k == *class { 1.0 } else { 0.0 }) / n)
                    .collect();
                backward(&self.layers, &self.params, &caches, dpre, g);
            }
        }
        Ok(total / n)
    }

    fn pattern(&self, batch: &[(&Tensor<f64>, usize)]) -> Result<Vec<u64>> {
        let mut out = Vec::new();
        for (x, _) in batch {
            let (_, caches) = forward_cached(&self.layers, &self.params, (*x).clone())?;
            for (c, l) in caches.iter().zip(&self.layers) {
                c.pattern(layer_activation(l), &mut out);
            }
        }
        Ok(out)
    }

    fn predict(&self, x: &Tensor<f64>) -> Result<usize> {
        let (probs, _) = forward_cached(&self.layers, &self.params, x.clone())?;
        Ok(argmax(&probs))
    }

    /// Returns the full-set loss before training and after every epoch.
    fn fit(
        &mut self,
        data: &[(Tensor<f64>, usize)],
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let all: Vec<(&Tensor<f64>, usize)> = data.iter().map(|(x, c)| (x, *c)).collect();
        let mut losses = vec![self.loss(&all, None)?];
        if !losses[0].is_finite() {
            return Err(Error::NonFiniteLoss { epoch: 0 });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 1..=cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<_> = chunk.iter().map(|&i| all[i]).collect();
                let mut grads = self.zero_grads();
                self.loss(&batch, Some(&mut grads))?;
                for (p, g) in self.params.iter_mut().zip(&grads) {
                    for (pv, gv) in p.values_mut().zip(g.values()) {
                        *pv -= cfg.learning_rate * gv;
                    }
                }
            }
            let l = self.loss(&all, None)?;
            if !l.is_finite()
                || self
                    .params
                    .iter()
                    .any(|p| p.values().any(|v| !v.is_finite()))
            {
                return Err(Error::NonFiniteLoss { epoch });
            }
            losses.push(l);
        }
        Ok(losses)
    }

    fn export(&self) -> Vec<LayerWeights<f32>> {
        self.params.iter().map(LayerWeights::cast).collect()
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

fn window_tensor(network: &Network, w: &LabeledWindow) -> Result<(Tensor<f64>, usize)> {
    if w.window.len() != network.window_len() {
        return Err(Error::mismatch(
            "training window",
            network.window_len(),
            w.window.len(),
        ));
    }
    Ok((
        Tensor::Map(w.window.to_map(network.channels())?),
        w.label.class(),
    ))
}

/// Seeded random split into (train, held-out) indices.
pub fn holdout_split(n: usize, holdout: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (n as f64 * holdout).round() as usize;
    let test = idx.split_off(n - n_test);
    (idx, test)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Training-set loss before the first epoch and after each epoch.
    pub losses: Vec<f64>,
    pub train_accuracy: f64,
    pub holdout_accuracy: Option<f64>,
}

/// End-to-end training of all layers of `f`; the exit head is left as is.
/// Accuracies are of `f`'s argmax against the window labels.
pub fn train_end_to_end(
    network: &Network,
    data: &[LabeledWindow],
    cfg: &TrainConfig,
) -> Result<(Weights, TrainReport)> {
    cfg.validate()?;
    let tensors = data
        .iter()
        .map(|w| window_tensor(network, w))
        .collect::<Result<Vec<_>>>()?;
    let (train_idx, test_idx) = holdout_split(tensors.len(), cfg.holdout, derive_seed(cfg.seed, 1));
    let train: Vec<_> = train_idx.iter().map(|&i| tensors[i].clone()).collect();
    let mut model = Trainable::new(&network.spec().layers, &network.weights().layers)?;
    let losses = model.fit(&train, cfg, derive_seed(cfg.seed, 2))?;
    let accuracy = |idx: &[usize]| -> Result<f64> {
        let hits = idx
            .iter()
            .map(|&i| {
                model
                    .predict(&tensors[i].0)
                    .map(|p| (p == tensors[i].1) as usize)
            })
            .sum::<Result<usize>>()?;
        Ok(hits as f64 / idx.len().max(1) as f64)
    };
    let report = TrainReport {
        losses,
        train_accuracy: accuracy(&train_idx)?,
        holdout_accuracy: if test_idx.is_empty() {
            None
        } else {
            Some(accuracy(&test_idx)?)
        },
    };
    let weights = Weights {
        layers: model.export(),
        exit: network.weights().exit.clone(),
    };
    Ok((weights, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitReport {
    pub losses: Vec<f64>,
    pub train_accuracy: f64,
    pub holdout_accuracy: Option<f64>,
    pub holdout_windows: usize,
}

/// Trains the exit head on features from the network's frozen `g`. Labels:
/// worn → activate, not worn → suppress. Accuracy is that of the deployed
/// gate (f32, with its threshold).
pub fn train_ee(
    network: &Network,
    data: &[LabeledWindow],
    cfg: &TrainConfig,
) -> Result<(ExitHead, ExitReport)> {
    cfg.validate()?;
    let features = data
        .iter()
        .map(|w| forward_g(network, &w.window))
        .collect::<Result<Vec<FeatureVector>>>()?;
    let dim = network.feature_dim();
    let spec = exit_spec(dim);
    let tensors: Vec<(Tensor<f64>, usize)> = features
        .iter()
        .zip(data)
        .map(|(f, w)| {
            (
                Tensor::Flat(f.values.iter().map(|&v| v as f64).collect()),
                w.label.class(),
            )
        })
        .collect();
    let (train_idx, test_idx) = holdout_split(tensors.len(), cfg.holdout, derive_seed(cfg.seed, 3));
    let train: Vec<_> = train_idx.iter().map(|&i| tensors[i].clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 4));
    let init = init_layer(&spec, &mut rng);
    let mut model = Trainable::new(std::slice::from_ref(&spec), std::slice::from_ref(&init))?;
    let losses = model.fit(&train, cfg, derive_seed(cfg.seed, 5))?;
    let head = ExitHead::new(
        model.export().remove(0),
        dim,
        network.exit_head().threshold(),
    )?;
    let accuracy = |idx: &[usize]| -> Result<f64> {
        let mut hits = 0;
        for &i in idx {
            let d = ee_decide(&head, &features[i])?;
            let predicted = (d.gate == Gate::Activate) as usize;
            hits += (predicted == tensors[i].1) as usize;
        }
        Ok(hits as f64 / idx.len().max(1) as f64)
    };
    let report = ExitReport {
        losses,
        train_accuracy: accuracy(&train_idx)?,
        holdout_accuracy: if test_idx.is_empty() {
            None
        } else {
            Some(accuracy(&test_idx)?)
        },
        holdout_windows: test_idx.len(),
    };
    Ok((head, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStepReport {
    pub end_to_end: TrainReport,
    pub exit: ExitReport,
}

/// Step one, then step two on the trained `g`.
pub fn train_two_step(
    network: &Network,
    data: &[LabeledWindow],
    cfg: &TrainConfig,
) -> Result<(Network, TwoStepReport)> {
    let (weights, end_to_end) = train_end_to_end(network, data, cfg)?;
    let trained = network.with_weights(weights)?;
    let (head, exit) = train_ee(&trained, data, cfg)?;
    let mut weights = trained.weights().clone();
    weights.exit = head.weights().clone();
    Ok((
        trained.with_weights(weights)?,
        TwoStepReport { end_to_end, exit },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a ReLU kink or changed a pool winner.
    pub skipped: usize,
}

/// Analytic gradients of the batch loss of `f` against central differences,
/// in `f64`. Relative error is `|a − n| / max(|a|, |n|, 1e−5)`.
pub fn gradient_check(
    network: &Network,
    batch: &[LabeledWindow],
    eps: f64,
) -> Result<GradCheckReport> {
    let tensors = batch
        .iter()
        .map(|w| window_tensor(network, w))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<(&Tensor<f64>, usize)> = tensors.iter().map(|(x, c)| (x, *c)).collect();
    let mut model = Trainable::new(&network.spec().layers, &network.weights().layers)?;
    let mut grads = model.zero_grads();
    model.loss(&refs, Some(&mut grads))?;
    let base_pattern = model.pattern(&refs)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for (li, grad) in grads.iter().enumerate() {
        let analytic: Vec<f64> = grad.values().copied().collect();
        for (pi, &a) in analytic.iter().enumerate() {
            let orig = *model.params[li].values_mut().nth(pi).unwrap();
            let mut eval = |delta: f64| -> Result<(f64, bool)> {
                *model.params[li].values_mut().nth(pi).unwrap() = orig + delta;
                let l = model.loss(&refs, None)?;
                let same = model.pattern(&refs)? == base_pattern;
                Ok((l, same))
            };
            let (lp, sp) = eval(eps)?;
            let (lm, sm) = eval(-eps)?;
            *model.params[li].values_mut().nth(pi).unwrap() = orig;
            if !(sp && sm) {
                report.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * eps);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Softmax probabilities of `f` on one window, computed in `f64`.
pub fn predict_proba(network: &Network, window: &crate::model::Window) -> Result<Vec<f64>> {
    let model = Trainable::new(&network.spec().layers, &network.weights().layers)?;
    let x = Tensor::Map(window.to_map(network.channels())?);
    Ok(forward_cached(&model.layers, &model.params, x)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, SynthConfig};
    use crate::model::{build_network, Window};
    use crate::trace::Label;

    fn dense_only(window_len: usize, channels: usize) -> NetworkSpec {
        NetworkSpec {
            odr_hz: 26.0,
            window_len,
            channels,
            layers: vec![
                LayerSpec::dense(window_len * channels, 4, Activation::None),
                LayerSpec::dense(4, 2, Activation::Softmax),
            ],
            split_index: 1,
            ee_threshold: 0.5,
        }
    }

    fn random_batch(n: usize, t: usize, c: usize, seed: u64) -> Vec<LabeledWindow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| LabeledWindow {
                window: Window::from_rows(
                    0,
                    &(0..t)
                        .map(|_| (0..c).map(|_| rng.random_range(-1.0f32..1.0)).collect())
                        .collect::<Vec<_>>(),
                ),
                label: if i % 2 == 0 {
                    Label::Worn
                } else {
                    Label::NotWorn
                },
            })
            .collect()
    }

    #[test]
    fn gradient_check_dense() {
        let spec = dense_only(8, 3);
        let net = build_network(spec.clone(), init_weights(&spec, 3).unwrap()).unwrap();
        let r = gradient_check(&net, &random_batch(4, 8, 3, 9), 1e-4).unwrap();
        assert_eq!(r.skipped, 0);
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
    }

    #[test]
    fn gradient_check_conv_pool_dense() {
        let spec = NetworkSpec::reference();
        let mut w = init_weights(&spec, 5).unwrap();
        // give the classifier non-trivial weights too
        if let LayerWeights::Dense { bias, .. } = &mut w.layers[3] {
            bias[0] = 0.3;
        }
        let net = build_network(spec, w).unwrap();
        let r = gradient_check(&net, &random_batch(3, 26, 6, 11), 1e-4).unwrap();
        assert!(r.checked > 100, "{r:?}");
        assert!(r.max_rel_error <= 1e-3, "{r:?}");
    }

    #[test]
    fn symmetric_gradients_at_zero() {
        let spec = dense_only(4, 2);
        let net = build_network(spec.clone(), Weights::zeros(&spec).unwrap()).unwrap();
        // both channels carry the same signal
        let rows: Vec<Vec<f32>> = (0..4).map(|t| vec![t as f32 * 0.5 - 1.0; 2]).collect();
        let batch = [LabeledWindow {
            window: Window::from_rows(0, &rows),
            label: Label::Worn,
        }];
        let tensors: Vec<_> = batch
            .iter()
            .map(|w| window_tensor(&net, w).unwrap())
            .collect();
        let refs: Vec<_> = tensors.iter().map(|(x, c)| (x, *c)).collect();
        let model = Trainable::new(&spec.layers, &net.weights().layers).unwrap();
        let mut grads = model.zero_grads();
        model.loss(&refs, Some(&mut grads)).unwrap();
        // with zero weights only the output bias sees a gradient, ±0.5
        let LayerWeights::Dense { bias, matrix } = &grads[1] else {
            panic!()
        };
        assert_eq!(bias, &vec![0.5, -0.5]);
        assert!(matrix.iter().all(|&g| g == 0.0));
        // swap-symmetric inputs give swap-symmetric first-layer gradients
        let mut w = Weights::zeros(&spec).unwrap();
        w.layers[1] = LayerWeights::Dense {
            matrix: vec![1.0; 8],
            bias: vec![0.0; 2],
        };
        if let LayerWeights::Dense { matrix, .. } = &mut w.layers[1] {
            matrix[4..].fill(-1.0);
        }
        let model = Trainable::new(&spec.layers, &w.layers).unwrap();
        let mut grads = model.zero_grads();
        model.loss(&refs, Some(&mut grads)).unwrap();
        let LayerWeights::Dense { matrix, .. } = &grads[0] else {
            panic!()
        };
        for k in 0..4 {
            let row = &matrix[k * 8..(k + 1) * 8];
            for t in 0..4 {
                assert_eq!(row[t * 2], row[t * 2 + 1]);
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let spec = NetworkSpec::reference();
        let net = build_network(spec.clone(), init_weights(&spec, 1).unwrap()).unwrap();
        let data = random_batch(20, 26, 6, 2);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 2,
            ..TrainConfig::default()
        };
        let (w, _) = train_end_to_end(&net, &data, &cfg).unwrap();
        assert_eq!(&w, net.weights());
    }

    #[test]
    fn separable_data_fits() {
        // class decided by the sign of a constant offset on channel 0
        let spec = dense_only(4, 2);
        let net = build_network(spec.clone(), init_weights(&spec, 4).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<LabeledWindow> = (0..200)
            .map(|i| {
                let worn = i % 2 == 0;
                let off = if worn { 1.0 } else { -1.0 };
                let rows: Vec<Vec<f32>> = (0..4)
                    .map(|_| {
                        vec![
                            off + rng.random_range(-0.3f32..0.3),
                            rng.random_range(-1.0f32..1.0),
                        ]
                    })
                    .collect();
                LabeledWindow {
                    window: Window::from_rows(0, &rows),
                    label: if worn { Label::Worn } else { Label::NotWorn },
                }
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 10,
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let (_, report) = train_end_to_end(&net, &data, &cfg).unwrap();
        assert!(report.train_accuracy >= 0.99, "{report:?}");
    }

    #[test]
    fn single_class_head_saturates() {
        let spec = NetworkSpec::reference();
        let net = build_network(spec.clone(), init_weights(&spec, 6).unwrap()).unwrap();
        let cfg = SynthConfig {
            minutes_per_class: 0.5,
            ..SynthConfig::default()
        };
        let data: Vec<_> = generate_dataset(&cfg)
            .unwrap()
            .into_iter()
            .filter(|w| w.label == Label::Worn)
            .collect();
        let tc = TrainConfig {
            epochs: 40,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let (head, _) = train_ee(&net, &data, &tc).unwrap();
        for w in &data {
            let d = ee_decide(&head, &forward_g(&net, &w.window).unwrap()).unwrap();
            assert!(d.confidence >= 0.99, "{d:?}");
        }
    }

    #[test]
    fn divergence_reported() {
        let spec = dense_only(4, 2);
        let net = build_network(spec.clone(), init_weights(&spec, 4).unwrap()).unwrap();
        let mut data = random_batch(16, 4, 2, 3);
        for w in &mut data {
            for s in &mut w.window.samples {
                for v in &mut s.channels {
                    *v *= 1e30;
                }
            }
        }
        let cfg = TrainConfig {
            learning_rate: 1e30,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_end_to_end(&net, &data, &cfg),
            Err(Error::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn holdout_split_partitions() {
        let (a, b) = holdout_split(100, 0.2, 1);
        assert_eq!(a.len(), 80);
        assert_eq!(b.len(), 20);
        let mut all: Vec<_> = a.iter().chain(&b).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }
}
