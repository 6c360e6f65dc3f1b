//! Trace replay through the sensor, exit gate and host.

mod common;

use common::shipped_model;
use proptest::prelude::*;
use streamfirst::datagen::{long_trace, SynthConfig};
use streamfirst::format::to_canonical_json;
use streamfirst::sim::{replay_with, ReplayOptions};
use streamfirst::{
    build_network, ee_decide, energy_joules, forward_g, replay, DeviceProfile, Error, ExecMode,
    Gate, Label, LayerSpec, Network, NetworkSpec, Pipeline, Trace, Weights,
};

fn at_odr(odr: f64) -> DeviceProfile {
    DeviceProfile {
        odr_hz: odr,
        ..DeviceProfile::default()
    }
}

fn hour(label: Label, seed: u64) -> Trace {
    long_trace(&SynthConfig::default(), label, 3600.0, seed)
}

/// The shipped weights over a longer window (nothing in them depends on T).
fn with_window(net: &Network, t: usize) -> Network {
    build_network(net.spec().clone().with_window_len(t), net.weights().clone()).unwrap()
}

#[test]
fn hour_worn_and_not_worn() {
    let net = shipped_model();
    let prof = DeviceProfile::default();

    let worn = replay(&hour(Label::Worn, 1001), &net, ExecMode::DepthFirst, &prof).unwrap();
    assert_eq!(worn.windows_total, 3600);
    assert_eq!(worn.samples_lost, 0);
    assert!(
        worn.wake_fraction >= 0.95,
        "wake fraction {}",
        worn.wake_fraction
    );
    assert!((worn.energy_j - 31.0).abs() <= 0.5, "{}", worn.energy_j);

    let idle = replay(
        &hour(Label::NotWorn, 1002),
        &net,
        ExecMode::DepthFirst,
        &prof,
    )
    .unwrap();
    assert!(
        idle.wake_fraction <= 0.05,
        "wake fraction {}",
        idle.wake_fraction
    );
    assert!((idle.energy_j - 29.8).abs() <= 0.2, "{}", idle.energy_j);
    assert!(worn.energy_j - idle.energy_j > 1.0);
}

#[test]
fn sample_loss_thresholds() {
    let net = shipped_model();
    let wf_net = with_window(&net, 156);
    let tr = long_trace(&SynthConfig::default(), Label::Worn, 120.0, 5);
    let lost = |n: &Network, mode, odr| replay(&tr, n, mode, &at_odr(odr)).unwrap().samples_lost;
    assert_eq!(lost(&net, ExecMode::DepthFirst, 26.0), 0);
    assert_eq!(lost(&wf_net, ExecMode::WidthFirst, 26.0), 0);
    assert_eq!(lost(&net, ExecMode::WidthFirst, 26.0), 0);
    assert_eq!(lost(&net, ExecMode::DepthFirst, 158.0), 0);
    assert_eq!(lost(&wf_net, ExecMode::WidthFirst, 43.0), 0);
    for odr in [159.0, 200.0, 400.0] {
        assert!(lost(&net, ExecMode::DepthFirst, odr) > 0, "df at {odr}");
    }
    for odr in [44.0, 60.0, 100.0] {
        assert!(lost(&wf_net, ExecMode::WidthFirst, odr) > 0, "wf at {odr}");
    }
}

#[test]
fn decisions_match_offline_gate() {
    let net = shipped_model();
    let mut tr = long_trace(&SynthConfig::default(), Label::Worn, 60.0, 8);
    tr = tr.concat(&long_trace(
        &SynthConfig::default(),
        Label::NotWorn,
        60.0,
        9,
    ));
    for mode in [ExecMode::DepthFirst, ExecMode::WidthFirst] {
        let rep = replay(&tr, &net, mode, &DeviceProfile::default()).unwrap();
        let windows = tr.windows(26);
        assert_eq!(rep.decisions.len(), windows.len());
        for (d, w) in rep.decisions.iter().zip(&windows) {
            let offline = ee_decide(net.exit_head(), &forward_g(&net, w).unwrap()).unwrap();
            assert_eq!(d.gate, offline.gate);
            assert_eq!(d.confidence, offline.confidence);
            assert_eq!(d.host_class.is_some(), d.gate == Gate::Activate);
        }
        assert!(rep.wakeups > 0 && rep.suppressions > 0);
    }
}

#[test]
fn energy_matches_power_model() {
    let net = shipped_model();
    let tr = long_trace(&SynthConfig::default(), Label::Worn, 300.0, 3);
    for pipeline in [Pipeline::Ours, Pipeline::RegularWf, Pipeline::RegularDf] {
        let opts = ReplayOptions {
            pipeline,
            ..ReplayOptions::default()
        };
        let rep = replay_with(
            &tr,
            &net,
            ExecMode::DepthFirst,
            &DeviceProfile::default(),
            &opts,
        )
        .unwrap();
        let want = energy_joules(rep.avg_current_ma, 1.8, rep.duration_s);
        assert!((rep.energy_j - want).abs() <= 1e-9 * want);
        assert_eq!(rep.wakeups + rep.suppressions, rep.windows_total);
    }
}

#[test]
fn regular_pipeline_wakes_every_fifo_fill() {
    let net = shipped_model();
    let tr = long_trace(&SynthConfig::default(), Label::NotWorn, 100.0, 4);
    let opts = ReplayOptions {
        pipeline: Pipeline::RegularWf,
        ..ReplayOptions::default()
    };
    let rep = replay_with(
        &tr,
        &net,
        ExecMode::WidthFirst,
        &DeviceProfile::default(),
        &opts,
    )
    .unwrap();
    assert_eq!(rep.host_interrupts, 2600 / 5);
    assert_eq!(rep.wakeups, rep.windows_total);
    assert!((rep.avg_current_ma - 5.4).abs() < 1e-12);
}

#[test]
fn replay_is_deterministic() {
    let net = shipped_model();
    let tr = long_trace(&SynthConfig::default(), Label::Worn, 90.0, 12);
    let a = to_canonical_json(&replay(&tr, &net, ExecMode::DepthFirst, &at_odr(200.0)).unwrap());
    let b = to_canonical_json(&replay(&tr, &net, ExecMode::DepthFirst, &at_odr(200.0)).unwrap());
    assert_eq!(a.as_bytes(), b.as_bytes());
}

#[test]
fn channel_count_mismatch() {
    let spec = NetworkSpec {
        channels: 3,
        layers: vec![
            LayerSpec::conv(4, 3, streamfirst::Activation::Relu),
            LayerSpec::MaxPoolChannels { pool: 3 },
            LayerSpec::dense(4, 2, streamfirst::Activation::Softmax),
        ],
        split_index: 2,
        ..NetworkSpec::reference()
    };
    let net = build_network(spec.clone(), Weights::zeros(&spec).unwrap()).unwrap();
    let tr = long_trace(&SynthConfig::default(), Label::Worn, 5.0, 1);
    assert!(matches!(
        replay(&tr, &net, ExecMode::DepthFirst, &DeviceProfile::default()),
        Err(Error::ModelMismatch(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn samples_are_conserved(len in 0usize..600, odr in 10.0f64..400.0, wf in any::<bool>(), seed in any::<u64>()) {
        let net = shipped_model();
        let tr = streamfirst::datagen::synth_trace(&SynthConfig::default(), Label::Worn, len, seed);
        let mode = if wf { ExecMode::WidthFirst } else { ExecMode::DepthFirst };
        let r = replay(&tr, &net, mode, &at_odr(odr)).unwrap();
        prop_assert_eq!(r.windows_total * 26 + r.samples_lost + r.trailing_partial, len);
        prop_assert_eq!(r.wakeups + r.suppressions, r.windows_total);
        if r.per_trigger_ms < 1000.0 / odr {
            prop_assert_eq!(r.samples_lost, 0);
        }
    }
}
