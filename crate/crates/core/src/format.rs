//! JSON model and device-profile files.
//!
//! Model file layout:
//!
//! ```json
//! {
//!   "channels": 6, "odr_hz": 26.0, "split_index": 3, "window_len": 26,
//!   "ee": { "bias": [..2], "threshold": 0.5, "weights": [[..in], [..in]] },
//!   "layers": [
//!     { "kind": "conv1d", "filters": 16, "kernel_len": 4, "activation": "relu",
//!       "bias": [..], "weights": [[..taps], ..] },
//!     { "kind": "max_pool_channels", "pool": 6 },
//!     { "kind": "dense", "in_dim": 16, "out_dim": 2, "activation": "softmax",
//!       "bias": [..], "weights": [[..in], ..] }
//!   ]
//! }
//! ```
//!
//! Output is written with a fixed key order so identical models serialize to
//! identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    build_network, Activation, LayerSpec, LayerWeights, Network, NetworkSpec, Weights,
};
use crate::partition::DeviceProfile;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LayerFile {
    Conv1d {
        activation: Activation,
        bias: Vec<f32>,
        filters: usize,
        kernel_len: usize,
        weights: Vec<Vec<f32>>,
    },
    MaxPoolChannels {
        pool: usize,
    },
    Dense {
        activation: Activation,
        bias: Vec<f32>,
        in_dim: usize,
        out_dim: usize,
        weights: Vec<Vec<f32>>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExitFile {
    bias: Vec<f32>,
    threshold: f32,
    weights: Vec<Vec<f32>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    channels: usize,
    ee: ExitFile,
    layers: Vec<LayerFile>,
    odr_hz: f64,
    split_index: usize,
    window_len: usize,
}

fn rows(flat: &[f32], width: usize) -> Vec<Vec<f32>> {
    if width == 0 {
        return Vec::new();
    }
    flat.chunks(width).map(<[f32]>::to_vec).collect()
}

fn unrows(rows: Vec<Vec<f32>>, height: usize, width: usize, location: &str) -> Result<Vec<f32>> {
    if rows.len() != height {
        return Err(Error::mismatch(
            format!("{location} weights"),
            format!("{height} rows"),
            rows.len(),
        ));
    }
    let mut out = Vec::with_capacity(height * width);
    for (i, r) in rows.into_iter().enumerate() {
        if r.len() != width {
            return Err(Error::mismatch(
                format!("{location} weights row {i}"),
                width,
                r.len(),
            ));
        }
        out.extend(r);
    }
    Ok(out)
}

fn split_layer(file: LayerFile, location: &str) -> Result<(LayerSpec, LayerWeights<f32>)> {
    Ok(match file {
        LayerFile::Conv1d {
            activation,
            bias,
            filters,
            kernel_len,
            weights,
        } => (
            LayerSpec::conv(filters, kernel_len, activation),
            LayerWeights::Conv1d {
                coeffs: unrows(weights, filters, kernel_len, location)?,
                bias,
            },
        ),
        LayerFile::MaxPoolChannels { pool } => (
            LayerSpec::MaxPoolChannels { pool },
            LayerWeights::MaxPoolChannels,
        ),
        LayerFile::Dense {
            activation,
            bias,
            in_dim,
            out_dim,
            weights,
        } => (
            LayerSpec::dense(in_dim, out_dim, activation),
            LayerWeights::Dense {
                matrix: unrows(weights, out_dim, in_dim, location)?,
                bias,
            },
        ),
    })
}

fn json_error(what: &str, e: serde_json::Error) -> Error {
    Error::Format(format!(
        "{what}: line {} column {}: {e}",
        e.line(),
        e.column()
    ))
}

/// Parses and validates a model document.
pub fn parse_model(text: &str) -> Result<Network> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| json_error("model", e))?;
    let mut layers = Vec::with_capacity(file.layers.len());
    let mut weights = Vec::with_capacity(file.layers.len());
    for (i, l) in file.layers.into_iter().enumerate() {
        let (spec, w) = split_layer(l, &format!("layer {i}"))?;
        layers.push(spec);
        weights.push(w);
    }
    let in_dim = file.ee.weights.first().map_or(0, Vec::len);
    let exit = LayerWeights::Dense {
        matrix: unrows(file.ee.weights, 2, in_dim, "ee")?,
        bias: file.ee.bias,
    };
    let spec = NetworkSpec {
        odr_hz: file.odr_hz,
        window_len: file.window_len,
        channels: file.channels,
        layers,
        split_index: file.split_index,
        ee_threshold: file.ee.threshold,
    };
    for (i, w) in weights.iter().enumerate() {
        if w.values().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("layer {i} weights")));
        }
    }
    build_network(
        spec,
        Weights {
            layers: weights,
            exit,
        },
    )
}

pub fn parse_model_bytes(bytes: &[u8]) -> Result<Network> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format(format!("model: {e}")))?;
    parse_model(text)
}

pub fn model_to_json(network: &Network) -> String {
    let spec = network.spec();
    let layers = spec
        .layers
        .iter()
        .zip(&network.weights().layers)
        .map(|(l, w)| match (*l, w) {
            (
                LayerSpec::Conv1d {
                    filters,
                    kernel_len,
                    activation,
                },
                LayerWeights::Conv1d { coeffs, bias },
            ) => LayerFile::Conv1d {
                activation,
                bias: bias.clone(),
                filters,
                kernel_len,
                weights: rows(coeffs, kernel_len),
            },
            (LayerSpec::MaxPoolChannels { pool }, _) => LayerFile::MaxPoolChannels { pool },
            (
                LayerSpec::Dense {
                    in_dim,
                    out_dim,
                    activation,
                },
                LayerWeights::Dense { matrix, bias },
            ) => LayerFile::Dense {
                activation,
                bias: bias.clone(),
                in_dim,
                out_dim,
                weights: rows(matrix, in_dim),
            },
            _ => unreachable!("validated network"),
        })
        .collect();
    let LayerWeights::Dense { matrix, bias } = &network.weights().exit else {
        unreachable!("validated network")
    };
    let file = ModelFile {
        channels: spec.channels,
        ee: ExitFile {
            bias: bias.clone(),
            threshold: spec.ee_threshold,
            weights: rows(matrix, network.feature_dim()),
        },
        layers,
        odr_hz: spec.odr_hz,
        split_index: spec.split_index,
        window_len: spec.window_len,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
    s.push('\n');
    s
}

pub fn parse_profile(text: &str) -> Result<DeviceProfile> {
    let p: DeviceProfile = serde_json::from_str(text).map_err(|e| json_error("profile", e))?;
    p.validate()?;
    Ok(p)
}

pub fn parse_profile_bytes(bytes: &[u8]) -> Result<DeviceProfile> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format(format!("profile: {e}")))?;
    parse_profile(text)
}

pub fn profile_to_json(profile: &DeviceProfile) -> String {
    to_canonical_json(profile)
}

/// Pretty JSON with object keys sorted, newline-terminated.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("value serializes");
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_model(path: &Path) -> Result<Network> {
    parse_model(&read_file(path)?)
}

pub fn load_profile(path: &Path) -> Result<DeviceProfile> {
    parse_profile(&read_file(path)?)
}
