//! Two-step training on the synthetic worn/not-worn set.

mod common;

use std::time::Instant;

use streamfirst::datagen::{generate_dataset, SynthConfig};
use streamfirst::train::{gradient_check, init_weights, train_ee, train_end_to_end, TrainConfig};
use streamfirst::{build_network, Activation, LayerSpec, LayerWeights, NetworkSpec};

fn bits(layers: &[LayerWeights<f32>]) -> Vec<u32> {
    layers
        .iter()
        .flat_map(|l| l.values().map(|v| v.to_bits()))
        .collect()
}

#[test]
fn gradient_checks() {
    let data = generate_dataset(&SynthConfig {
        minutes_per_class: 0.2,
        ..SynthConfig::default()
    })
    .unwrap();
    let batch: Vec<_> = data.iter().step_by(7).take(6).cloned().collect();

    let spec = NetworkSpec::reference();
    let net = build_network(spec.clone(), init_weights(&spec, 17).unwrap()).unwrap();
    let conv = gradient_check(&net, &batch, 1e-4).unwrap();
    assert!(conv.checked >= 100, "{conv:?}");
    assert!(conv.max_rel_error <= 1e-3, "{conv:?}");

    let dense_spec = NetworkSpec {
        layers: vec![
            LayerSpec::dense(26 * 6, 8, Activation::None),
            LayerSpec::dense(8, 2, Activation::Softmax),
        ],
        split_index: 1,
        ..NetworkSpec::reference()
    };
    let dense = build_network(dense_spec.clone(), init_weights(&dense_spec, 3).unwrap()).unwrap();
    let d = gradient_check(&dense, &batch, 1e-4).unwrap();
    assert_eq!(d.skipped, 0);
    assert!(d.max_rel_error <= 1e-4, "{d:?}");
}

#[test]
fn two_step_training_meets_targets() {
    let start = Instant::now();
    let data = generate_dataset(&SynthConfig::default()).unwrap();
    let spec = NetworkSpec::reference();
    let net = build_network(spec.clone(), init_weights(&spec, 42).unwrap()).unwrap();
    let cfg = TrainConfig::default();

    let (weights, e2e) = train_end_to_end(&net, &data, &cfg).unwrap();
    assert!(
        e2e.losses[..6].windows(2).all(|w| w[1] < w[0]),
        "{:?}",
        e2e.losses
    );
    let trained = net.with_weights(weights).unwrap();

    let g_before = bits(&trained.weights().layers);
    let (head, ee) = train_ee(&trained, &data, &cfg).unwrap();
    assert_eq!(bits(&trained.weights().layers), g_before);
    assert!(ee.holdout_windows >= 60);
    let acc = ee.holdout_accuracy.unwrap();
    assert!(acc >= 0.95, "exit-head held-out accuracy {acc}");
    assert_eq!(head.in_dim(), 16);
    assert!(
        start.elapsed().as_secs_f64() < 60.0,
        "took {:?}",
        start.elapsed()
    );
}

#[test]
fn training_is_seeded() {
    let data = generate_dataset(&SynthConfig {
        minutes_per_class: 0.5,
        ..SynthConfig::default()
    })
    .unwrap();
    let spec = NetworkSpec::reference();
    let net = build_network(spec.clone(), init_weights(&spec, 1).unwrap()).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let (a, _) = train_end_to_end(&net, &data, &cfg).unwrap();
    let (b, _) = train_end_to_end(&net, &data, &cfg).unwrap();
    assert_eq!(bits(&a.layers), bits(&b.layers));
    let (c, _) = train_end_to_end(&net, &data, &TrainConfig { seed: 2, ..cfg }).unwrap();
    assert_ne!(bits(&a.layers), bits(&c.layers));
}
