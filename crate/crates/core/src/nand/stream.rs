use std::collections::HashMap;

use super::{LayoutEntry, NandConfig, WeightLayout};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrefetchEntry {
    pub cluster: usize,
    pub plane: usize,
    pub page: u64,
    /// Latest NAND-CMOS cycle the read may be issued without starving the lane.
    pub issue_deadline: u64,
    pub segments: u64,
    pub payload_bytes: u64,
}

/// Page reads in issue order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrefetchPlan {
    pub entries: Vec<PrefetchEntry>,
}

impl PrefetchPlan {
    /// Reads for the given layout entries, consumed in the order given
    /// (per cluster) at one segment per cycle.
    pub fn for_entries<'a>(layout: &WeightLayout, entries: impl IntoIterator<Item = &'a LayoutEntry>) -> Self {
        let cpp = layout.codewords_per_page() as u64;
        let seg = layout.segment_bytes() as u64;
        let mut consumed: HashMap<usize, u64> = HashMap::new();
        let mut out = Vec::new();
        for e in entries {
            let mut left = e.segments();
            for p in layout.pages(e) {
                let n = left.min(cpp);
                left -= n;
                let at = consumed.entry(p.cluster).or_insert(0);
                out.push(PrefetchEntry {
                    cluster: p.cluster,
                    plane: p.plane,
                    page: p.page,
                    issue_deadline: *at,
                    segments: n,
                    payload_bytes: n * seg,
                });
                *at += n;
            }
        }
        PrefetchPlan { entries: out }
    }

    /// `pages` full pages per cluster, round-robin over planes.
    pub fn sequential(cfg: &NandConfig, codeword_bytes: usize, segment_bytes: usize, pages: u64) -> Self {
        let cpp = cfg.codewords_per_page(codeword_bytes) as u64;
        let ppc = cfg.planes_per_cluster as u64;
        let mut out = Vec::new();
        for cluster in 0..cfg.clusters {
            for k in 0..pages {
                out.push(PrefetchEntry {
                    cluster,
                    plane: (k % ppc) as usize,
                    page: k / ppc,
                    issue_deadline: k * cpp,
                    segments: cpp,
                    payload_bytes: cpp * segment_bytes as u64,
                });
            }
        }
        PrefetchPlan { entries: out }
    }

    pub fn validate(&self) -> Result<()> {
        let mut last: HashMap<(usize, usize), u64> = HashMap::new();
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            if !seen.insert((e.cluster, e.plane, e.page)) {
                return Err(Error::ShapeMismatch(format!(
                    "page {} of plane {} on cluster {} appears twice",
                    e.page, e.plane, e.cluster
                )));
            }
            let prev = last.entry((e.cluster, e.plane)).or_insert(0);
            if e.issue_deadline < *prev {
                return Err(Error::ShapeMismatch("issue deadlines decrease within a plane".into()));
            }
            *prev = e.issue_deadline;
        }
        Ok(())
    }

    pub fn payload_bytes(&self) -> u64 {
        self.entries.iter().map(|e| e.payload_bytes).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PageArrival {
    pub cluster: usize,
    pub plane: usize,
    pub page: u64,
    /// Cycle the first segment of the page reaches the lane.
    pub cycle: u64,
    /// Segments then follow at the lane rate.
    pub segments: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamReport {
    pub arrivals: Vec<PageArrival>,
    pub first_arrival: Option<u64>,
    /// Cycle the last lane finishes its last segment.
    pub finish_cycle: u64,
    /// Lane cycles spent waiting for data after the first arrival, summed over clusters.
    pub stall_cycles: u64,
    pub busy_cycles: u64,
    pub delivered_bytes: u64,
    pub segments: u64,
    /// Reads issued after their deadline.
    pub late_reads: u64,
}

impl StreamReport {
    pub fn stall_fraction(&self) -> f64 {
        let t = self.stall_cycles + self.busy_cycles;
        if t == 0 {
            0.0
        } else {
            self.stall_cycles as f64 / t as f64
        }
    }

    /// Payload bytes per cycle across the fabric once warm.
    pub fn delivery_rate(&self) -> f64 {
        match self.first_arrival {
            Some(f) if self.finish_cycle > f => self.delivered_bytes as f64 / (self.finish_cycle - f) as f64,
            _ => 0.0,
        }
    }
}

/// Streams with each lane consuming one segment per cycle.
pub fn stream(plan: &PrefetchPlan, cfg: &NandConfig) -> StreamReport {
    stream_with_rate(plan, cfg, 1.0)
}

/// Event model of the plane -> FIFO -> lane path. Planes read their pages in
/// plan order; a finished page enters the cluster FIFO in plan order once a slot
/// frees up (a slot is released when the lane finishes the page); the lane
/// drains pages at `segments_per_cycle`. Each transition depends only on
/// earlier pages, so one forward pass over the plan yields the full event log.
pub fn stream_with_rate(plan: &PrefetchPlan, cfg: &NandConfig, segments_per_cycle: f64) -> StreamReport {
    let mut report = StreamReport::default();
    if plan.entries.is_empty() {
        return report;
    }
    let lat = cfg.read_latency_cycles();
    let depth = cfg.fifo_pages.max(1);
    let mut by_cluster: HashMap<usize, Vec<&PrefetchEntry>> = HashMap::new();
    for e in &plan.entries {
        by_cluster.entry(e.cluster).or_default().push(e);
    }
    let mut clusters: Vec<_> = by_cluster.into_iter().collect();
    clusters.sort_by_key(|(c, _)| *c);
    for (_, pages) in clusters {
        let mut plane_free = vec![0u64; cfg.planes_per_cluster.max(1)];
        let mut consume_end: Vec<u64> = Vec::with_capacity(pages.len());
        let mut prev_enter = 0u64;
        for (k, e) in pages.iter().enumerate() {
            let p = e.plane % plane_free.len();
            let start = plane_free[p];
            if start > e.issue_deadline {
                report.late_reads += 1;
            }
            let done = start + lat;
            let slot = if k >= depth { consume_end[k - depth] } else { 0 };
            let enter = done.max(prev_enter).max(slot);
            prev_enter = enter;
            plane_free[p] = if cfg.cache_read { done.max(enter.saturating_sub(lat)) } else { enter };
            let arrive = enter + 1;
            let prev_end = consume_end.last().copied();
            let cstart = arrive.max(prev_end.unwrap_or(0));
            if let Some(pe) = prev_end {
                report.stall_cycles += cstart - pe;
            }
            let dur = (e.segments as f64 / segments_per_cycle).ceil() as u64;
            consume_end.push(cstart + dur);
            report.busy_cycles += dur;
            report.delivered_bytes += e.payload_bytes;
            report.segments += e.segments;
            report.first_arrival = Some(report.first_arrival.map_or(cstart, |f: u64| f.min(cstart)));
            report.finish_cycle = report.finish_cycle.max(cstart + dur);
            report.arrivals.push(PageArrival {
                cluster: e.cluster,
                plane: e.plane,
                page: e.page,
                cycle: cstart,
                segments: e.segments,
                bytes: e.payload_bytes,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecc::CodeConfig;
    use crate::nand::{aggregate_bandwidth, analytic_stream_cycles, build_layout};
    use crate::model::builtin_model;

    const CW: usize = 36;
    const SEG: usize = 32;

    #[test]
    fn empty_plan() {
        let r = stream(&PrefetchPlan::default(), &NandConfig::default());
        assert!(r.arrivals.is_empty());
        assert_eq!(r.first_arrival, None);
    }

    #[test]
    fn matched_rate_has_no_stalls_once_warm() {
        let cfg = NandConfig::default();
        let plan = PrefetchPlan::sequential(&cfg, CW, SEG, 64);
        let rate = cfg.cluster_segment_rate(CW);
        let r = stream_with_rate(&plan, &cfg, rate);
        assert_eq!(r.stall_cycles, 0);
        assert_eq!(r.first_arrival, Some(cfg.read_latency_cycles() + 1));
        assert_eq!(r.late_reads, 0);
    }

    #[test]
    fn double_consumption_stalls_half_the_time() {
        let cfg = NandConfig::default();
        let plan = PrefetchPlan::sequential(&cfg, CW, SEG, 64);
        let rate = 2.0 * cfg.cluster_segment_rate(CW);
        let f = stream_with_rate(&plan, &cfg, rate).stall_fraction();
        assert!((f - 0.5).abs() < 0.02, "{f}");
    }

    #[test]
    fn conservation_and_warm_up() {
        let model = builtin_model("OPT-1.3B").unwrap();
        let cfg = NandConfig::default();
        let layout = build_layout(&model, &cfg, &CodeConfig::default()).unwrap();
        let stage: Vec<_> = layout
            .entries()
            .iter()
            .filter(|e| e.layer == 0 && e.matrix.is_ffn())
            .collect();
        let plan = PrefetchPlan::for_entries(&layout, stage.iter().copied());
        plan.validate().unwrap();
        let r = stream(&plan, &cfg);
        assert_eq!(r.delivered_bytes, plan.payload_bytes());
        let mapped: u64 = stage.iter().map(|e| e.segments()).sum::<u64>() * SEG as u64;
        assert_eq!(r.delivered_bytes, mapped);
        assert!(r.first_arrival.unwrap() <= cfg.read_latency_cycles() + 1);
    }

    #[test]
    fn bandwidth_identity_within_one_percent() {
        let cfg = NandConfig::default();
        let code = CodeConfig::default();
        let plan = PrefetchPlan::sequential(&cfg, CW, SEG, 400);
        for rate in [0.5, 1.0, 2.0] {
            let r = stream_with_rate(&plan, &cfg, rate);
            let measured = r.delivery_rate() * cfg.clock_hz();
            let supply = aggregate_bandwidth(&cfg) * code.code_rate();
            let demand = cfg.clusters as f64 * SEG as f64 * rate * cfg.clock_hz();
            let want = supply.min(demand);
            assert!((measured / want - 1.0).abs() < 0.01, "rate {rate}: {measured} vs {want}");
        }
    }

    #[test]
    fn analytic_matches_event_model() {
        let cfg = NandConfig::default();
        let pages = 200;
        let plan = PrefetchPlan::sequential(&cfg, CW, SEG, pages);
        let segs = pages * cfg.codewords_per_page(CW) as u64;
        for passes in [1u64, 3] {
            let r = stream_with_rate(&plan, &cfg, 1.0 / passes as f64);
            let a = analytic_stream_cycles(segs, passes, CW, &cfg, false);
            assert!((r.finish_cycle as f64 / a as f64 - 1.0).abs() < 0.01, "{} vs {a}", r.finish_cycle);
        }
    }

    #[test]
    fn plan_validation() {
        let cfg = NandConfig::default();
        let mut plan = PrefetchPlan::sequential(&cfg, CW, SEG, 8);
        plan.validate().unwrap();
        let dup = plan.entries[0];
        plan.entries.push(dup);
        assert!(plan.validate().is_err());
    }

    #[test]
    fn no_cache_read_still_terminates() {
        let cfg = NandConfig { cache_read: false, ..NandConfig::default() };
        let plan = PrefetchPlan::sequential(&cfg, CW, SEG, 32);
        let r = stream(&plan, &cfg);
        assert_eq!(r.arrivals.len(), plan.entries.len());
    }
}
