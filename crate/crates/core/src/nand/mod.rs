//! 3D NAND fabric: planes grouped into clusters, each cluster feeding one lane
//! group through a page FIFO.

mod layout;
mod stream;

pub use layout::{build_layout, LayoutEntry, NandArray, PageRef, WeightLayout};
pub use stream::{stream, stream_with_rate, PageArrival, PrefetchEntry, PrefetchPlan, StreamReport};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NandConfig {
    pub clusters: usize,
    pub planes_per_cluster: usize,
    pub page_kib: usize,
    pub read_latency_us: f64,
    /// Cluster FIFO depth in pages.
    pub fifo_pages: usize,
    pub clock_mhz: f64,
    /// Weights per NAND-CMOS cycle per lane (the segment factor d).
    pub lane_width: usize,
    pub plane_capacity_gib: f64,
    /// A plane may start its next read while the previous page waits for a FIFO slot.
    pub cache_read: bool,
}

impl Default for NandConfig {
    fn default() -> Self {
        NandConfig {
            clusters: 8,
            planes_per_cluster: 4,
            page_kib: 16,
            read_latency_us: 5.12,
            fifo_pages: 2,
            clock_mhz: 350.0,
            lane_width: 32,
            plane_capacity_gib: 4.0,
            cache_read: true,
        }
    }
}

impl NandConfig {
    pub fn validate(&self) -> Result<()> {
        if self.planes_per_cluster == 0 {
            return Err(Error::config("nand.planes_per_cluster", "must be >= 1"));
        }
        if self.page_kib == 0 || !(self.page_kib * 1024).is_power_of_two() {
            return Err(Error::config("nand.page_kib", format!("page size must be a power of two, got {} KiB", self.page_kib)));
        }
        if !(self.read_latency_us > 0.0) {
            return Err(Error::config("nand.read_latency_us", "must be > 0"));
        }
        if self.fifo_pages < 2 {
            return Err(Error::config("nand.fifo_pages", "double buffering needs at least 2 pages"));
        }
        if !(self.clock_mhz > 0.0) {
            return Err(Error::config("nand.clock_mhz", "must be > 0"));
        }
        if self.lane_width == 0 {
            return Err(Error::config("nand.lane_width", "must be >= 1"));
        }
        if !(self.plane_capacity_gib >= 0.0) {
            return Err(Error::config("nand.plane_capacity_gib", "must be >= 0"));
        }
        Ok(())
    }

    pub fn planes(&self) -> usize {
        self.clusters * self.planes_per_cluster
    }

    pub fn page_bytes(&self) -> usize {
        self.page_kib * 1024
    }

    pub fn read_latency_s(&self) -> f64 {
        self.read_latency_us * 1e-6
    }

    pub fn clock_hz(&self) -> f64 {
        self.clock_mhz * 1e6
    }

    pub fn read_latency_cycles(&self) -> u64 {
        (self.read_latency_s() * self.clock_hz()).round() as u64
    }

    pub fn capacity_bytes(&self) -> u64 {
        (self.plane_capacity_gib * (1u64 << 30) as f64) as u64 * self.planes() as u64
    }

    pub fn pages_per_plane(&self) -> u64 {
        (self.plane_capacity_gib * (1u64 << 30) as f64) as u64 / self.page_bytes() as u64
    }

    /// Raw bytes/s of one cluster.
    pub fn cluster_bandwidth(&self) -> f64 {
        self.planes_per_cluster as f64 * self.page_bytes() as f64 / self.read_latency_s()
    }

    /// Codewords that fit in one page; codewords never straddle pages.
    pub fn codewords_per_page(&self, codeword_bytes: usize) -> usize {
        self.page_bytes() / codeword_bytes
    }

    /// Segments per NAND-CMOS cycle one cluster can supply in steady state.
    pub fn cluster_segment_rate(&self, codeword_bytes: usize) -> f64 {
        let per_read = (self.planes_per_cluster * self.codewords_per_page(codeword_bytes)) as f64;
        per_read / (self.read_latency_s() * self.clock_hz())
    }
}

/// planes x page / read latency, in bytes per second.
pub fn aggregate_bandwidth(cfg: &NandConfig) -> f64 {
    if cfg.planes() == 0 {
        return 0.0;
    }
    cfg.planes() as f64 * cfg.page_bytes() as f64 / cfg.read_latency_s()
}

/// Steady-state cycles for one cluster to stream `segments` codewords of
/// `codeword_bytes` while the lane spends `passes` cycles on each (one per
/// activation vector). `warm` drops the first-page latency when the prefetcher
/// already had it in flight.
pub fn analytic_stream_cycles(segments: u64, passes: u64, codeword_bytes: usize, cfg: &NandConfig, warm: bool) -> u64 {
    if segments == 0 {
        return 0;
    }
    let supply = (segments as f64 / cfg.cluster_segment_rate(codeword_bytes)).ceil() as u64;
    let body = (segments * passes.max(1)).max(supply);
    if warm {
        body
    } else {
        body + cfg.read_latency_cycles() + 1
    }
}
