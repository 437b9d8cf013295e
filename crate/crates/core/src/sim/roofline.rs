use serde::{Deserialize, Serialize};

use super::energy::kv_pass_bytes;
use super::{hardware_preset, peak_throughput, HwConfig};
use crate::model::{derive_breakdown, ModelSpec};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RooflineMachine {
    pub name: String,
    pub peak_ops: f64,
    /// Weight + KV bandwidth, bytes/s.
    pub bandwidth: f64,
}

impl RooflineMachine {
    /// NAND fabric and DRAM both feed weights.
    pub fn from_hw(hw: &HwConfig) -> Self {
        RooflineMachine {
            name: hw.name.clone(),
            peak_ops: peak_throughput(hw),
            bandwidth: hw.nand_bandwidth() + hw.dram.bandwidth(),
        }
    }

    /// A800-class GPU with HBM.
    pub fn a800() -> Self {
        RooflineMachine { name: "A800".into(), peak_ops: 624e12, bandwidth: 2.039e12 }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        if name.eq_ignore_ascii_case("A800") || name.eq_ignore_ascii_case("GPU") {
            return Ok(Self::a800());
        }
        Ok(Self::from_hw(&hardware_preset(name)?))
    }

    pub fn ridge(&self) -> f64 {
        self.peak_ops / self.bandwidth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bound {
    MemoryBound,
    ComputeBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RooflinePoint {
    pub intensity: f64,
    pub bound: Bound,
    pub attainable_ops: f64,
}

pub fn roofline_at(intensity: f64, m: &RooflineMachine) -> RooflinePoint {
    let attainable = m.peak_ops.min(intensity * m.bandwidth);
    RooflinePoint {
        intensity,
        bound: if intensity < m.ridge() { Bound::MemoryBound } else { Bound::ComputeBound },
        attainable_ops: attainable,
    }
}

/// One forward pass over `tokens` tokens after `ctx` cached ones; weights are
/// streamed once per pass.
pub fn roofline_point(model: &ModelSpec, ctx: usize, tokens: usize, m: &RooflineMachine) -> RooflinePoint {
    let b = derive_breakdown(model);
    let ops: u64 = (0..tokens as u64).map(|i| b.per_token_ops(ctx as u64 + i + 1)).sum();
    let bytes = b.linear_macs() * model.bytes_per_weight() as u64 + kv_pass_bytes(model, ctx, tokens);
    roofline_at(ops as f64 / bytes as f64, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, builtin_model_names};

    #[test]
    fn decode_is_memory_bound_on_gpu() {
        let gpu = RooflineMachine::a800();
        for name in builtin_model_names() {
            let m = builtin_model(name).unwrap();
            assert_eq!(roofline_point(&m, 128, 1, &gpu).bound, Bound::MemoryBound, "{name}");
        }
    }

    #[test]
    fn ridge_point_attains_peak() {
        let m = RooflineMachine::a800();
        let p = roofline_at(m.ridge(), &m);
        assert!((p.attainable_ops / m.peak_ops - 1.0).abs() < 1e-12);
    }

    #[test]
    fn long_prefill_is_compute_bound_on_16c() {
        let hw = RooflineMachine::by_name("NVLLM-16C").unwrap();
        for name in builtin_model_names() {
            let m = builtin_model(name).unwrap();
            assert_eq!(roofline_point(&m, 0, 1024, &hw).bound, Bound::ComputeBound, "{name}");
        }
    }
}
