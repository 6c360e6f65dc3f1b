//! Calibration, window sweep, partitioning and power arithmetic.

mod common;

use common::{random_window, rng};
use streamfirst::partition::{
    feasibility, per_trigger_time, store_trigger_time, CalibrationAnchors, Part,
};
use streamfirst::power::power_report;
use streamfirst::sim::sweep_window;
use streamfirst::train::init_weights;
use streamfirst::{
    average_current, battery_life_hours, build_network, concat, energy_joules, forward_g,
    forward_h, max_odr, memory_footprint, reduction_pct, split, CostModelParams, DeviceProfile,
    ExecMode, Network, NetworkSpec, Pipeline, Scenario, Tensor, Weights,
};

fn reference_g() -> (Network, Part) {
    let spec = NetworkSpec::reference();
    let net = build_network(spec.clone(), Weights::zeros(&spec).unwrap()).unwrap();
    let (g, _) = split(&net, 3).unwrap();
    (net, g)
}

#[test]
fn calibration_solves_two_anchors() {
    // Hand count for g + exit head: 800 ops per push, 768·156 − 3040 ops per 6 s window.
    let (df_ops, wf_ops) = (800.0, 768.0 * 156.0 - 3040.0);
    let (df_cyc, wf_cyc) = (6.3e-3 * 10e6, 23e-3 * 10e6);
    let cpo = (wf_cyc - df_cyc) / (wf_ops - df_ops);
    let fixed = df_cyc - cpo * df_ops;
    let p = CostModelParams::reference();
    assert!((p.cycles_per_op - cpo).abs() < 1e-9);
    assert!((p.fixed_overhead_cycles - fixed).abs() < 1e-6);
    // 178 weights + 688 accumulators at 4 bytes, 3891 B measured
    assert!((p.runtime_overhead_bytes - (3891.0 - 866.0 * 4.0)).abs() < 1e-9);

    // A different anchor set moves the fit: calibration reads only its inputs.
    let (_, g) = reference_g();
    let mut a = CalibrationAnchors::reference();
    a.width_first_ms = 30.0;
    let q = CostModelParams::calibrate(&g, &a).unwrap();
    assert!(q.cycles_per_op > p.cycles_per_op);
    assert!((per_trigger_time(&g, ExecMode::WidthFirst, 156, &q) - 30.0).abs() < 1e-9);
    assert!((per_trigger_time(&g, ExecMode::DepthFirst, 26, &q) - 6.3).abs() < 1e-9);
}

#[test]
fn timing_anchors_after_calibration() {
    let (_, g) = reference_g();
    let p = CostModelParams::reference();
    let df = per_trigger_time(&g, ExecMode::DepthFirst, 26, &p);
    let wf = per_trigger_time(&g, ExecMode::WidthFirst, 156, &p);
    assert_eq!(df, 6.3);
    assert_eq!(wf, 23.0);
    assert_eq!(max_odr(df).reported_hz, 158);
    assert_eq!(max_odr(wf).reported_hz, 43);
    assert!(store_trigger_time(&p) < df);
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let worst = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (icept + slope * x)).abs())
        .fold(0.0, f64::max);
    (slope, icept, worst)
}

#[test]
fn window_sweep_shape() {
    let (net, _) = reference_g();
    let profile = DeviceProfile::default();
    let lens: Vec<usize> = (1..=10).map(|s| s * 26).collect();
    let rows = sweep_window(
        &net,
        &lens,
        &[ExecMode::DepthFirst, ExecMode::WidthFirst],
        &profile,
        &CostModelParams::reference(),
    )
    .unwrap();
    let (df, wf): (Vec<&streamfirst::PartitionReport>, Vec<_>) =
        rows.iter().partition(|r| r.mode == ExecMode::DepthFirst);
    assert!(df
        .iter()
        .all(|r| r.mem_bytes == 3891 && r.per_trigger_ms == 6.3 && r.ram_ok));

    let secs: Vec<f64> = wf.iter().map(|r| r.window_s).collect();
    let (slope_b, _, res_b) = linear_fit(
        &secs,
        &wf.iter().map(|r| r.mem_bytes as f64).collect::<Vec<_>>(),
    );
    let (slope_t, _, res_t) = linear_fit(
        &secs,
        &wf.iter().map(|r| r.per_trigger_ms).collect::<Vec<_>>(),
    );
    assert!(res_b < 1.0, "memory residual {res_b}");
    assert!(res_t < 0.01, "time residual {res_t}");
    // one second of raw samples is 26·6 values of 4 bytes
    assert!((slope_b - 624.0).abs() < 1e-9);
    assert!(slope_t > 0.0);

    let last_ok = wf
        .iter()
        .filter(|r| r.ram_ok)
        .map(|r| r.window_s)
        .fold(0.0, f64::max);
    assert_eq!(last_ok, 6.0);
    assert!(wf.iter().filter(|r| r.window_s > 6.0).all(|r| !r.ram_ok));
    let six = wf.iter().find(|r| r.window_s == 6.0).unwrap();
    assert_eq!((six.mem_bytes, six.per_trigger_ms), (7635, 23.0));
}

#[test]
fn timing_feasibility_flags() {
    let (_, g) = reference_g();
    let p = CostModelParams::reference();
    let at = |odr: f64, mode, t| {
        feasibility(
            &g,
            mode,
            t,
            &DeviceProfile {
                odr_hz: odr,
                ..DeviceProfile::default()
            },
            &p,
        )
    };
    assert!(at(158.0, ExecMode::DepthFirst, 26).timing_ok_at_odr);
    assert!(!at(159.0, ExecMode::DepthFirst, 26).timing_ok_at_odr);
    assert!(at(43.0, ExecMode::WidthFirst, 156).timing_ok_at_odr);
    assert!(!at(44.0, ExecMode::WidthFirst, 156).timing_ok_at_odr);
}

#[test]
fn split_then_concat_is_identity() {
    let spec = NetworkSpec::reference();
    let net = build_network(spec.clone(), init_weights(&spec, 21).unwrap()).unwrap();
    let mut r = rng(4);
    for idx in 1..net.spec().layers.len() {
        let (g, h) = split(&net, idx).unwrap();
        let whole = concat(&g, &h).unwrap();
        for _ in 0..10 {
            let x = random_window(&mut r, 26, 6, 2.0);
            let map = Tensor::Map(x.to_map::<f32>(6).unwrap());
            let direct = h
                .forward(g.forward(map.clone()).unwrap())
                .unwrap()
                .into_flat();
            assert_eq!(whole.forward(map).unwrap().into_flat(), direct);
            if idx == net.split_index() {
                let f = forward_g(&net, &x).unwrap();
                assert_eq!(forward_h(&net, &f).unwrap(), direct);
            }
        }
    }
}

#[test]
fn memory_modes_differ_by_raw_window() {
    let (_, g) = reference_g();
    let p = CostModelParams::reference();
    for t in [26usize, 52, 156, 260] {
        let df = memory_footprint(&g, ExecMode::DepthFirst, t, &p);
        let wf = memory_footprint(&g, ExecMode::WidthFirst, t, &p);
        assert_eq!(wf - df, (t * 6 * 4) as u64);
    }
}

#[test]
fn power_numbers() {
    let prof = DeviceProfile::default();
    let wf = Scenario::regular_wf();
    let active = Scenario::new(Pipeline::Ours, 1.0).unwrap();
    let idle = Scenario::new(Pipeline::Ours, 0.0).unwrap();
    // 4.8 + 0.6 is not exactly 5.4 in binary floating point
    assert!((average_current(&wf, &prof) - 5.4).abs() < 1e-12);
    assert_eq!(average_current(&active, &prof), 4.8);
    assert_eq!(average_current(&idle, &prof), 4.6);
    assert_eq!(reduction_pct(&active, &prof).pct, 11);
    assert_eq!(reduction_pct(&idle, &prof).pct, 15);

    let hour = 3600.0;
    let e_wf = energy_joules(average_current(&wf, &prof), 1.8, hour);
    let e_ours = energy_joules(4.8, 1.8, hour);
    let e_idle = energy_joules(4.6, 1.8, hour);
    assert!((e_wf - 34.99).abs() < 0.005 && (e_wf - 35.0).abs() <= 0.5);
    assert!((e_ours - 31.10).abs() < 0.005 && (e_ours - 31.0).abs() <= 0.5);
    assert!(e_ours - e_idle > 1.0);
    assert!((e_ours - e_idle - 1.296).abs() < 1e-9);

    let life_wf = battery_life_hours(200.0, average_current(&wf, &prof));
    let life_ours = battery_life_hours(200.0, 4.8);
    assert!((life_wf - 37.0).abs() <= 0.5 && (life_wf * 10.0).round() / 10.0 == 37.0);
    assert!((life_ours - 42.0).abs() <= 0.5 && (life_ours * 10.0).round() / 10.0 == 41.7);

    let rep = power_report(&active, &prof, hour);
    assert_eq!(rep.battery_life_rounded_h, 42);
    assert_eq!(rep.reduction_vs_regular_pct, 11);
}
