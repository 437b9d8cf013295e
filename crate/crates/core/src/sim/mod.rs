//! End-to-end simulation: task graphs per forward pass on a discrete-event
//! core, plus analytic baselines, roofline and energy accounting.
//!
//! Each stage's duration comes from a closed-form steady-state model of the
//! unit running it (lane streaming, DRAM channel, IO link), so a pass is a few
//! dozen events per layer instead of one per segment.

mod baseline;
mod energy;
mod engine;
mod events;
mod functional;
mod hw;
mod metrics;
mod roofline;

pub use baseline::{
    baseline_run, baseline_throughput, calibrate_factor, pass_seconds, streamed_bytes, BaselineKind, BaselineParams,
    BaselineRun, AIF_FACTOR, AIF_MINUS_FACTOR, AIF_MINUS_TARGET_TPS, AIF_TARGET_TPS, CALIBRATION_MODEL,
    CAMBRICON_FACTOR, CAMBRICON_TARGET_TPS,
};
pub use energy::{cambricon_data_movement, energy_report, kv_pass_bytes, PathEnergy};
pub use engine::{prefill_share, run_inference, RunOutput, SimOptions, ACTIVATION_BYTES, FUNCTIONAL_LIMIT_BYTES, KV_BYTES};
pub use events::{Resource, SimEvent, SimEventKind};
pub use hw::{
    hardware_preset, peak_throughput, DramConfig, EnergyConstants, HwConfig, IoConfig, NpuConfig, HARDWARE_PRESETS,
};
pub use metrics::{summarize, Metrics, Phase, TokenRecord};
pub use roofline::{roofline_at, roofline_point, Bound, RooflineMachine, RooflinePoint};
