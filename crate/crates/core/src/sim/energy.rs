use serde::{Deserialize, Serialize};

use super::engine::KV_BYTES;
use super::metrics::TokenRecord;
use super::EnergyConstants;
use crate::ecc::CodeConfig;
use crate::model::{derive_breakdown, ModelSpec, WorkloadTrace};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PathEnergy {
    pub nand_j: f64,
    pub io_j: f64,
    pub dram_j: f64,
    pub data_movement_j: f64,
    pub mac_j: f64,
    pub total_j: f64,
}

const PJ: f64 = 1e-12;

/// Per-path bytes x pJ/byte plus MAC energy over a token log.
pub fn energy_report(tokens: &[TokenRecord], c: &EnergyConstants) -> PathEnergy {
    let nand: u64 = tokens.iter().map(|t| t.nand_bytes).sum();
    let io: u64 = tokens.iter().map(|t| t.io_bytes).sum();
    let dram: u64 = tokens.iter().map(|t| t.dram_bytes).sum();
    let macs: u64 = tokens.iter().map(|t| t.macs).sum();
    let nand_j = nand as f64 * c.nand_pj_per_byte * PJ;
    let io_j = io as f64 * c.io_pj_per_byte * PJ;
    let dram_j = dram as f64 * c.dram_pj_per_byte * PJ;
    let mac_j = macs as f64 * c.mac_pj * PJ;
    let data_movement_j = nand_j + io_j + dram_j;
    PathEnergy {
        nand_j,
        io_j,
        dram_j,
        data_movement_j,
        mac_j,
        total_j: data_movement_j + mac_j,
    }
}

/// KV-cache DRAM bytes of one pass over `t` tokens after `ctx0` cached ones:
/// the cache is read once per layer and the new rows are written.
pub fn kv_pass_bytes(model: &ModelSpec, ctx0: usize, t: usize) -> u64 {
    let row = 2 * model.kv_dim() as u64 * KV_BYTES;
    model.num_layers as u64 * ((ctx0 + t) as u64 * row + t as u64 * row)
}

/// Data-movement energy of a Cambricon-style flash accelerator over a trace:
/// every linear weight (with parity) is read from flash on each pass, a share
/// of it also crosses the shared flash channel to the NPU, and the KV cache
/// sits in DRAM with the same traffic as NVLLM.
pub fn cambricon_data_movement(model: &ModelSpec, trace: &WorkloadTrace, code: &CodeConfig, lane_width: usize, c: &EnergyConstants) -> f64 {
    let b = derive_breakdown(model);
    let bpw = model.bytes_per_weight();
    let seg = lane_width * bpw;
    let stored = b.linear_macs() as f64 * bpw as f64 * code.codeword_bytes(seg) as f64 / seg as f64;
    let per_pass = stored * (c.nand_pj_per_byte + c.flash_channel_share * c.flash_channel_pj_per_byte);
    let mut ctx = trace.initial_kv_len;
    let mut passes = 0u64;
    let mut kv = 0u64;
    for turn in &trace.turns {
        kv += kv_pass_bytes(model, ctx, turn.prefill);
        ctx += turn.prefill;
        passes += 1;
        for _ in 0..turn.decode {
            kv += kv_pass_bytes(model, ctx, 1);
            ctx += 1;
            passes += 1;
        }
    }
    (passes as f64 * per_pass + kv as f64 * c.dram_pj_per_byte) * PJ
}
