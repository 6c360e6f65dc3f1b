#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamfirst::format::load_model;
use streamfirst::{Network, Window};

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

/// The trained model shipped in `configs/`.
pub fn shipped_model() -> Network {
    load_model(&repo_path("configs/model.json")).expect("configs/model.json loads")
}

pub fn random_window(rng: &mut ChaCha8Rng, len: usize, channels: usize, scale: f32) -> Window {
    let rows: Vec<Vec<f32>> = (0..len)
        .map(|_| {
            (0..channels)
                .map(|_| rng.random_range(-scale..scale))
                .collect()
        })
        .collect();
    Window::from_rows(0, &rows)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a − b| / max(Σ|terms|, 1e−12)` for a value computed as a sum of `terms`.
pub fn rel_err_terms(a: f64, b: f64, abs_terms: f64) -> f64 {
    (a - b).abs() / abs_terms.max(1e-12)
}
