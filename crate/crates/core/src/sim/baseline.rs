use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{derive_breakdown, ModelSpec, WorkloadTrace};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    GpuDram,
    GpuSsd,
    CambriconLike,
    AifLike,
    AifMinusLike,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::GpuDram,
        BaselineKind::GpuSsd,
        BaselineKind::CambriconLike,
        BaselineKind::AifLike,
        BaselineKind::AifMinusLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::GpuDram => "gpu-dram",
            BaselineKind::GpuSsd => "gpu-ssd",
            BaselineKind::CambriconLike => "cambricon-like",
            BaselineKind::AifLike => "aif-like",
            BaselineKind::AifMinusLike => "aif-minus-like",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let k = s.to_ascii_lowercase().replace('_', "-");
        Ok(match k.as_str() {
            "gpu-dram" => BaselineKind::GpuDram,
            "gpu-ssd" => BaselineKind::GpuSsd,
            "cambricon" | "cambricon-like" | "cambricon-llm" => BaselineKind::CambriconLike,
            "aif" | "aif-like" => BaselineKind::AifLike,
            "aif-minus" | "aif-minus-like" | "aif--" => BaselineKind::AifMinusLike,
            _ => return Err(Error::UnknownBaseline(s.to_string())),
        })
    }
}

/// Reference model and targets the flash-side factors were fitted to.
pub const CALIBRATION_MODEL: &str = "LLaMA2-7B";
pub const CAMBRICON_TARGET_TPS: f64 = 3.6;
pub const AIF_TARGET_TPS: f64 = 13.1;
pub const AIF_MINUS_TARGET_TPS: f64 = 9.8;

/// Frozen outputs of [`calibrate_factor`] on the calibration model.
pub const CAMBRICON_FACTOR: f64 = 0.116140032;
pub const AIF_FACTOR: f64 = 0.845241344;
pub const AIF_MINUS_FACTOR: f64 = 0.632317952;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineParams {
    pub gpu_compute_ops: f64,
    /// Host-DRAM weight streaming bandwidth seen by the GPU.
    pub gpu_dram_bandwidth: f64,
    pub gpu_ssd_bandwidth: f64,
    pub cambricon_raw_bandwidth: f64,
    /// Shared-flash contention factor.
    pub cambricon_factor: f64,
    pub aif_raw_bandwidth: f64,
    pub aif_factor: f64,
    pub aif_minus_factor: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            gpu_compute_ops: 624e12,
            gpu_dram_bandwidth: 24e9,
            gpu_ssd_bandwidth: 8e9,
            cambricon_raw_bandwidth: 204.8e9,
            cambricon_factor: CAMBRICON_FACTOR,
            aif_raw_bandwidth: 102.4e9,
            aif_factor: AIF_FACTOR,
            aif_minus_factor: AIF_MINUS_FACTOR,
        }
    }
}

impl BaselineParams {
    pub fn bandwidth(&self, kind: BaselineKind) -> f64 {
        match kind {
            BaselineKind::GpuDram => self.gpu_dram_bandwidth,
            BaselineKind::GpuSsd => self.gpu_ssd_bandwidth,
            BaselineKind::CambriconLike => self.cambricon_raw_bandwidth * self.cambricon_factor,
            BaselineKind::AifLike => self.aif_raw_bandwidth * self.aif_factor,
            BaselineKind::AifMinusLike => self.aif_raw_bandwidth * self.aif_minus_factor,
        }
    }

    /// Compute ceiling; the flash designs are modelled as purely bandwidth-bound.
    pub fn compute(&self, kind: BaselineKind) -> Option<f64> {
        match kind {
            BaselineKind::GpuDram | BaselineKind::GpuSsd => Some(self.gpu_compute_ops),
            _ => None,
        }
    }
}

/// Linear weight bytes streamed per token.
pub fn streamed_bytes(model: &ModelSpec) -> u64 {
    derive_breakdown(model).linear_macs() * model.bytes_per_weight() as u64
}

/// Seconds for one forward pass over `tokens` tokens following `ctx0` cached ones.
pub fn pass_seconds(kind: BaselineKind, model: &ModelSpec, params: &BaselineParams, ctx0: usize, tokens: usize) -> f64 {
    let b = derive_breakdown(model);
    let mem = streamed_bytes(model) as f64 / params.bandwidth(kind);
    let ops: u64 = (0..tokens as u64).map(|i| b.per_token_ops(ctx0 as u64 + i + 1)).sum();
    match params.compute(kind) {
        Some(c) => mem.max(ops as f64 / c),
        None => mem,
    }
}

/// Decode tokens/s at short context.
pub fn baseline_throughput(kind: BaselineKind, model: &ModelSpec, params: &BaselineParams) -> f64 {
    1.0 / pass_seconds(kind, model, params, 0, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub kind: BaselineKind,
    pub prefill_seconds: f64,
    pub decode_seconds: f64,
    pub seconds_per_inference: f64,
    pub tokens_per_second: f64,
    pub prefill_fraction: f64,
}

pub fn baseline_run(kind: BaselineKind, model: &ModelSpec, trace: &WorkloadTrace, params: &BaselineParams) -> BaselineRun {
    let mut ctx = trace.initial_kv_len;
    let (mut pre, mut dec) = (0.0, 0.0);
    for t in &trace.turns {
        pre += pass_seconds(kind, model, params, ctx, t.prefill);
        ctx += t.prefill;
        for _ in 0..t.decode {
            dec += pass_seconds(kind, model, params, ctx, 1);
            ctx += 1;
        }
    }
    let total = pre + dec;
    BaselineRun {
        kind,
        prefill_seconds: pre,
        decode_seconds: dec,
        seconds_per_inference: total,
        tokens_per_second: if dec > 0.0 { trace.decode_tokens() as f64 / dec } else { 0.0 },
        prefill_fraction: if total > 0.0 { pre / total } else { 0.0 },
    }
}

/// Efficiency factor that makes a bandwidth-bound design hit `target_tps` on `model`.
pub fn calibrate_factor(raw_bandwidth: f64, model: &ModelSpec, target_tps: f64) -> f64 {
    target_tps * streamed_bytes(model) as f64 / raw_bandwidth
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;

    #[test]
    fn frozen_factors_match_calibration() {
        let m = builtin_model(CALIBRATION_MODEL).unwrap();
        let p = BaselineParams::default();
        assert_eq!(streamed_bytes(&m), 6_607_077_376);
        for (raw, target, frozen) in [
            (p.cambricon_raw_bandwidth, CAMBRICON_TARGET_TPS, CAMBRICON_FACTOR),
            (p.aif_raw_bandwidth, AIF_TARGET_TPS, AIF_FACTOR),
            (p.aif_raw_bandwidth, AIF_MINUS_TARGET_TPS, AIF_MINUS_FACTOR),
        ] {
            assert!((calibrate_factor(raw, &m, target) / frozen - 1.0).abs() < 1e-9);
        }
        assert!((baseline_throughput(BaselineKind::CambriconLike, &m, &p) - 3.6).abs() < 1e-6);
        assert!((baseline_throughput(BaselineKind::AifLike, &m, &p) - 13.1).abs() < 1e-6);
    }

    #[test]
    fn gpu_ssd_opt30b() {
        let m = builtin_model("OPT-30B").unwrap();
        let tps = baseline_throughput(BaselineKind::GpuSsd, &m, &BaselineParams::default());
        assert!((tps - 0.267).abs() < 0.01, "{tps}");
    }

    #[test]
    fn names_round_trip() {
        for k in BaselineKind::ALL {
            assert_eq!(k.name().parse::<BaselineKind>().unwrap(), k);
        }
        assert!(matches!("tpu".parse::<BaselineKind>(), Err(Error::UnknownBaseline(_))));
    }
}
