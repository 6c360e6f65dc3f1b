//! Depth-first streaming CNN inference for a simulated sensor core, with an
//! early-exit gate that decides when to wake the host.
//!
//! ```
//! use streamfirst::{build_network, init_stream, push_sample, NetworkSpec, PushResult, Sample, Weights};
//!
//! let spec = NetworkSpec::reference();
//! let net = build_network(spec.clone(), Weights::zeros(&spec).unwrap()).unwrap();
//! let mut state = init_stream(&net);
//! let mut done = None;
//! for t in 0..26 {
//!     if let PushResult::WindowComplete(f) = push_sample(&mut state, &Sample::new(t, vec![0.0; 6])).unwrap() {
//!         done = Some(f);
//!     }
//! }
//! assert_eq!(done.unwrap().len(), 16);
//! ```

pub mod datagen;
pub mod error;
pub mod exit;
pub mod format;
pub mod model;
pub mod partition;
pub mod power;
pub mod sim;
pub mod stream;
pub mod trace;
pub mod train;

pub use error::{Error, Result};
pub use exit::{ee_decide, ExitDecision, ExitHead, Gate};
pub use model::{
    build_network, forward_g, forward_h, Activation, FeatureMap, FeatureVector, LayerSpec,
    LayerWeights, Network, NetworkSpec, Sample, Shape, Tensor, Weights, Window,
};
pub use partition::{
    concat, feasibility, max_odr, memory_footprint, per_trigger_time, split, CostModelParams,
    DeviceProfile, ExecMode, Part, PartitionReport,
};
pub use power::{
    average_current, battery_life_hours, energy_joules, reduction_pct, Pipeline, Scenario,
};
pub use sim::{replay, replay_with, sweep_window, ReplayOptions, SimReport};
pub use stream::{init_stream, peak_memory_bytes, push_sample, reset, PushResult, StreamState};
pub use trace::{Label, Trace};
pub use train::{gradient_check, train_ee, train_end_to_end, train_two_step, TrainConfig};
