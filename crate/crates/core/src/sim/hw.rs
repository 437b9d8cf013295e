use serde::{Deserialize, Serialize};

use crate::nand::{aggregate_bandwidth, NandConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NpuConfig {
    /// OoO-ECDP lanes on the NPU (no ECC path).
    pub ecdp: usize,
    pub clock_mhz: f64,
    pub lane_width: usize,
}

impl Default for NpuConfig {
    fn default() -> Self {
        NpuConfig { ecdp: 4, clock_mhz: 500.0, lane_width: 32 }
    }
}

impl NpuConfig {
    pub fn clock_hz(&self) -> f64 {
        self.clock_mhz * 1e6
    }

    /// MACs per NPU cycle across all lanes.
    pub fn macs_per_cycle(&self) -> u64 {
        (self.ecdp * self.lane_width) as u64
    }
}

/// Flat-bandwidth, fixed-latency LPDDR5X-class channel model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DramConfig {
    pub channels: usize,
    /// Transfer rate per channel, MT/s.
    pub mtps: f64,
    /// Bytes per transfer per channel.
    pub bus_bytes: usize,
    pub latency_ns: f64,
    pub capacity_gib: f64,
}

impl Default for DramConfig {
    fn default() -> Self {
        DramConfig {
            channels: 2,
            mtps: 8533.0,
            bus_bytes: 4,
            latency_ns: 100.0,
            capacity_gib: 12.0,
        }
    }
}

impl DramConfig {
    pub fn bandwidth(&self) -> f64 {
        self.channels as f64 * self.mtps * 1e6 * self.bus_bytes as f64
    }

    pub fn capacity_bytes(&self) -> u64 {
        (self.capacity_gib * (1u64 << 30) as f64) as u64
    }

    pub fn transfer_seconds(&self, bytes: u64) -> f64 {
        if bytes == 0 {
            0.0
        } else {
            bytes as f64 / self.bandwidth() + self.latency_ns * 1e-9
        }
    }
}

/// Link between NAND CMOS and the NPU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub bandwidth_gbps: f64,
    pub latency_ns: f64,
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig { bandwidth_gbps: 16.0, latency_ns: 50.0 }
    }
}

impl IoConfig {
    pub fn transfer_seconds(&self, bytes: u64) -> f64 {
        if bytes == 0 {
            0.0
        } else {
            bytes as f64 / (self.bandwidth_gbps * 1e9) + self.latency_ns * 1e-9
        }
    }
}

/// Per-byte and per-MAC energies. These are calibration knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConstants {
    /// NAND array to NAND CMOS.
    pub nand_pj_per_byte: f64,
    /// NAND CMOS to NPU.
    pub io_pj_per_byte: f64,
    /// NPU to DRAM.
    pub dram_pj_per_byte: f64,
    pub mac_pj: f64,
    /// Shared flash channel of a conventional SSD controller (baseline only).
    pub flash_channel_pj_per_byte: f64,
    /// Fraction of baseline weight traffic that crosses the shared channel.
    pub flash_channel_share: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        EnergyConstants {
            nand_pj_per_byte: 4.0,
            io_pj_per_byte: 10.0,
            dram_pj_per_byte: 36.0,
            mac_pj: 0.3,
            flash_channel_pj_per_byte: 160.0,
            flash_channel_share: 0.5,
        }
    }
}

impl EnergyConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("energy.nand_pj_per_byte", self.nand_pj_per_byte),
            ("energy.io_pj_per_byte", self.io_pj_per_byte),
            ("energy.dram_pj_per_byte", self.dram_pj_per_byte),
            ("energy.mac_pj", self.mac_pj),
            ("energy.flash_channel_pj_per_byte", self.flash_channel_pj_per_byte),
        ];
        for (path, v) in fields {
            if !(v >= 0.0) {
                return Err(Error::config(path, format!("must be non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.flash_channel_share) {
            return Err(Error::config("energy.flash_channel_share", "must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwConfig {
    pub name: String,
    pub nand: NandConfig,
    /// NAND-side OoO-ECDP lanes, one per cluster in the presets.
    pub nand_ecdp: usize,
    pub npu: NpuConfig,
    pub dram: DramConfig,
    pub io: IoConfig,
    pub energy: EnergyConstants,
}

pub const HARDWARE_PRESETS: [&str; 3] = ["NVLLM", "NVLLM-12C", "NVLLM-16C"];

pub fn hardware_preset(name: &str) -> Result<HwConfig> {
    let clusters = match name.to_ascii_uppercase().as_str() {
        "NVLLM" => 8,
        "NVLLM-12C" => 12,
        "NVLLM-16C" => 16,
        _ => {
            return Err(Error::UnknownHardware {
                name: name.to_string(),
                available: HARDWARE_PRESETS.join(", "),
            })
        }
    };
    let canonical = HARDWARE_PRESETS
        .iter()
        .find(|p| p.eq_ignore_ascii_case(name))
        .copied()
        .unwrap_or("NVLLM");
    Ok(HwConfig {
        name: canonical.to_string(),
        nand: NandConfig { clusters, ..NandConfig::default() },
        nand_ecdp: clusters,
        npu: NpuConfig::default(),
        dram: DramConfig::default(),
        io: IoConfig::default(),
        energy: EnergyConstants::default(),
    })
}

impl HwConfig {
    pub fn validate(&self) -> Result<()> {
        self.nand.validate()?;
        if self.nand_ecdp != self.nand.clusters {
            return Err(Error::config(
                "hardware.nand_ecdp",
                format!("one lane group per cluster: {} lanes for {} clusters", self.nand_ecdp, self.nand.clusters),
            ));
        }
        if self.npu.ecdp == 0 || self.npu.lane_width == 0 || !(self.npu.clock_mhz > 0.0) {
            return Err(Error::config("npu", "lanes, lane width and clock must be positive"));
        }
        if self.dram.channels == 0 || !(self.dram.mtps > 0.0) || self.dram.bus_bytes == 0 {
            return Err(Error::config("dram", "channels, rate and bus width must be positive"));
        }
        if !(self.io.bandwidth_gbps > 0.0) {
            return Err(Error::config("io.bandwidth_gbps", "must be > 0"));
        }
        self.energy.validate()
    }

    pub fn nand_bandwidth(&self) -> f64 {
        aggregate_bandwidth(&self.nand)
    }

    pub fn nand_peak(&self) -> f64 {
        (self.nand_ecdp * self.nand.lane_width) as f64 * 2.0 * self.nand.clock_hz()
    }

    pub fn npu_peak(&self) -> f64 {
        (self.npu.ecdp * self.npu.lane_width) as f64 * 2.0 * self.npu.clock_hz()
    }
}

/// ops/s of all NAND-side and NPU lanes at full rate.
pub fn peak_throughput(hw: &HwConfig) -> f64 {
    hw.nand_peak() + hw.npu_peak()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_ops() {
        assert_eq!(peak_throughput(&hardware_preset("NVLLM").unwrap()), 307.2e9);
        assert_eq!(peak_throughput(&hardware_preset("NVLLM-12C").unwrap()), 396.8e9);
        assert_eq!(peak_throughput(&hardware_preset("nvllm-16c").unwrap()), 486.4e9);
        let mut zero = hardware_preset("NVLLM").unwrap();
        zero.nand_ecdp = 0;
        zero.npu.ecdp = 0;
        assert_eq!(peak_throughput(&zero), 0.0);
    }

    #[test]
    fn presets_match_table() {
        for (name, c) in [("NVLLM", 8), ("NVLLM-12C", 12), ("NVLLM-16C", 16)] {
            let hw = hardware_preset(name).unwrap();
            assert_eq!(hw.nand.clusters, c);
            assert_eq!(hw.nand_ecdp, c);
            assert_eq!(hw.nand.planes(), 4 * c);
            assert_eq!(hw.npu.ecdp, 4);
            hw.validate().unwrap();
        }
        assert!(matches!(hardware_preset("TPU"), Err(Error::UnknownHardware { .. })));
    }

    #[test]
    fn dram_bandwidth() {
        let d = DramConfig::default();
        assert!((d.bandwidth() - 68.264e9).abs() < 1.0);
    }
}
