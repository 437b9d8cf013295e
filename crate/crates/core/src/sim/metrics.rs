use serde::{Deserialize, Serialize};

use super::energy::{energy_report, PathEnergy};
use super::{peak_throughput, HwConfig};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Prefill,
    Decode,
}

/// One forward pass; a prefill pass covers `tokens` prompt tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub index: usize,
    pub phase: Phase,
    pub tokens: usize,
    pub kv_len: usize,
    pub start_s: f64,
    pub seconds: f64,
    pub cycles_nand: u64,
    pub cycles_npu: u64,
    pub stall_fraction: f64,
    pub bitmap_popcount: usize,
    pub dirty_segments: u64,
    pub corrected_segments: u64,
    pub deferred_commits: u64,
    pub uncorrectable_segments: u64,
    pub macs: u64,
    pub nand_bytes: u64,
    pub dram_bytes: u64,
    pub io_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub model: String,
    pub hardware: String,
    pub prefill_tokens: usize,
    pub decode_tokens: usize,
    /// Decode tokens per decode second.
    pub tokens_per_second: f64,
    pub seconds_per_inference: f64,
    pub prefill_seconds: f64,
    pub decode_seconds: f64,
    pub prefill_fraction: f64,
    /// Total energy over all processed (prompt + generated) tokens.
    pub energy_joules_per_token: f64,
    pub energy: PathEnergy,
    pub stall_fraction: f64,
    pub dirty_segments: u64,
    pub corrected_segments: u64,
    pub deferred_commits: u64,
    pub uncorrectable_segments: u64,
    pub scheduler_events: usize,
    pub functional_mismatches: u64,
    pub total_macs: u64,
    pub peak_ops_per_second: f64,
}

pub fn summarize(
    model: &ModelSpec,
    hw: &HwConfig,
    records: &[TokenRecord],
    scheduler_events: usize,
    functional_mismatches: u64,
) -> Metrics {
    let sum = |phase: Phase| -> (usize, f64) {
        records
            .iter()
            .filter(|r| r.phase == phase)
            .fold((0, 0.0), |(n, s), r| (n + r.tokens, s + r.seconds))
    };
    let (prefill_tokens, prefill_seconds) = sum(Phase::Prefill);
    let (decode_tokens, decode_seconds) = sum(Phase::Decode);
    let seconds = prefill_seconds + decode_seconds;
    let energy = energy_report(records, &hw.energy);
    let nand_cycles: u64 = records.iter().map(|r| r.cycles_nand).sum();
    let stall = if nand_cycles > 0 {
        records.iter().map(|r| r.stall_fraction * r.cycles_nand as f64).sum::<f64>() / nand_cycles as f64
    } else {
        0.0
    };
    let tokens = prefill_tokens + decode_tokens;
    Metrics {
        model: model.name.clone(),
        hardware: hw.name.clone(),
        prefill_tokens,
        decode_tokens,
        tokens_per_second: if decode_seconds > 0.0 { decode_tokens as f64 / decode_seconds } else { 0.0 },
        seconds_per_inference: seconds,
        prefill_seconds,
        decode_seconds,
        prefill_fraction: if seconds > 0.0 { prefill_seconds / seconds } else { 0.0 },
        energy_joules_per_token: if tokens > 0 { energy.total_j / tokens as f64 } else { 0.0 },
        energy,
        stall_fraction: stall,
        dirty_segments: records.iter().map(|r| r.dirty_segments).sum(),
        corrected_segments: records.iter().map(|r| r.corrected_segments).sum(),
        deferred_commits: records.iter().map(|r| r.deferred_commits).sum(),
        uncorrectable_segments: records.iter().map(|r| r.uncorrectable_segments).sum(),
        scheduler_events,
        functional_mismatches,
        total_macs: records.iter().map(|r| r.macs).sum(),
        peak_ops_per_second: peak_throughput(hw),
    }
}
