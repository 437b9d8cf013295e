//! KV-cache-aware rebalancing of Q/K/V/O projection columns between the NPU
//! and the in-flash lanes.
//!
//! Bit `i` of the bitmap is output column `i` of the concatenated Q, K, V, O
//! projections (in that order); 1 runs on the NPU, 0 in flash.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{derive_breakdown, MatrixKind, ModelSpec};
use crate::nand::NandConfig;
use crate::sim::NpuConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bitmap {
    bits: Vec<bool>,
}

impl Bitmap {
    pub fn ones(h: usize) -> Self {
        Bitmap { bits: vec![true; h] }
    }

    pub fn zeros(h: usize) -> Self {
        Bitmap { bits: vec![false; h] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Bitmap { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Set bits in `range`.
    pub fn count_in(&self, range: std::ops::Range<usize>) -> usize {
        self.bits[range].iter().filter(|&&b| b).count()
    }
}

impl FromStr for Bitmap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                _ => Err(Error::ShapeMismatch(format!("bitmap digit `{c}`"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Bitmap::from_bits)
    }
}

impl fmt::Display for Bitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerParams {
    /// NPU cycles per column.
    pub c_npu: f64,
    /// Bytes per weight column.
    pub u: u64,
    /// Page-buffer bytes per plane cluster.
    pub p: u64,
}

impl SchedulerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_npu > 0.0) || self.u == 0 || self.p == 0 {
            return Err(Error::config("sched", "C_npu, u and P must be positive"));
        }
        if self.u > self.p {
            return Err(Error::config("sched", format!("column size {} exceeds page buffer {}", self.u, self.p)));
        }
        Ok(())
    }

    pub fn c_th(&self) -> f64 {
        (self.p / self.u) as f64 * self.c_npu
    }

    /// `c_npu_override <= 0` derives C_npu from the NPU: one column is
    /// ceil(d_model / lane) segments per layer, spread over all NPU lanes.
    pub fn for_model(model: &ModelSpec, nand: &NandConfig, npu: &NpuConfig, c_npu_override: f64) -> Self {
        let c_npu = if c_npu_override > 0.0 {
            c_npu_override
        } else {
            let segs = model.d_model.div_ceil(npu.lane_width) as f64;
            model.num_layers as f64 * segs / npu.ecdp as f64
        };
        SchedulerParams {
            c_npu,
            u: (model.d_model * model.bytes_per_weight()) as u64,
            p: (nand.planes_per_cluster * nand.page_bytes()) as u64,
        }
    }

    /// Parameters for one layer's bitmap in per-layer mode.
    pub fn per_layer(&self, num_layers: usize) -> Self {
        SchedulerParams { c_npu: self.c_npu / num_layers.max(1) as f64, ..*self }
    }
}

/// Clears the `ceil(delta_c / C_th)` highest-indexed set bits when `delta_c`
/// exceeds the threshold.
pub fn rebalance(delta_c: f64, params: &SchedulerParams, bitmap: &Bitmap) -> Bitmap {
    let c_th = params.c_th();
    if delta_c <= c_th {
        return bitmap.clone();
    }
    let mut k = (delta_c / c_th).ceil() as usize;
    let mut out = bitmap.clone();
    for b in out.bits.iter_mut().rev() {
        if k == 0 {
            break;
        }
        if *b {
            *b = false;
            k -= 1;
        }
    }
    out
}

/// NPU attention-aggregation cycles added by one more token of context.
pub fn per_context_cycles(model: &ModelSpec, npu: &NpuConfig) -> f64 {
    let per_ctx_ops = derive_breakdown(model).attention_agg_ops(1) as f64;
    per_ctx_ops / (2 * npu.macs_per_cycle()) as f64
}

pub fn estimate_delta_cycles(kv_now: usize, kv_last: usize, model: &ModelSpec, npu: &NpuConfig) -> f64 {
    kv_now.saturating_sub(kv_last) as f64 * per_context_cycles(model, npu)
}

pub fn split_columns(bitmap: &Bitmap) -> (Vec<usize>, Vec<usize>) {
    let mut npu = Vec::new();
    let mut nand = Vec::new();
    for (i, &b) in bitmap.bits.iter().enumerate() {
        if b {
            npu.push(i);
        } else {
            nand.push(i);
        }
    }
    (npu, nand)
}

/// Bit ranges of Q, K, V, O within the bitmap.
pub fn projection_ranges(model: &ModelSpec) -> [(MatrixKind, std::ops::Range<usize>); 4] {
    let d = model.d_model;
    let kv = model.kv_dim();
    [
        (MatrixKind::Q, 0..d),
        (MatrixKind::K, d..d + kv),
        (MatrixKind::V, d + kv..d + 2 * kv),
        (MatrixKind::O, d + 2 * kv..2 * d + 2 * kv),
    ]
}

pub fn bitmap_width(model: &ModelSpec) -> usize {
    2 * model.d_model + 2 * model.kv_dim()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RebalanceEvent {
    pub token: usize,
    pub kv_len: usize,
    pub delta_c: f64,
    pub cleared: usize,
    pub popcount: usize,
}

/// Decode-session state: bitmap(s) plus the ΔC baseline.
#[derive(Debug, Clone)]
pub struct KvScheduler {
    params: SchedulerParams,
    per_context: f64,
    bitmaps: Vec<Bitmap>,
    per_layer: bool,
    kv_last: Option<usize>,
}

impl KvScheduler {
    pub fn new(model: &ModelSpec, npu: &NpuConfig, params: SchedulerParams, per_layer: bool) -> Self {
        let h = bitmap_width(model);
        let n = if per_layer { model.num_layers } else { 1 };
        let (params, per_context) = if per_layer {
            (params.per_layer(model.num_layers), per_context_cycles(model, npu) / model.num_layers as f64)
        } else {
            (params, per_context_cycles(model, npu))
        };
        KvScheduler {
            params,
            per_context,
            bitmaps: vec![Bitmap::ones(h); n],
            per_layer,
            kv_last: None,
        }
    }

    pub fn params(&self) -> &SchedulerParams {
        &self.params
    }

    /// Bitmap governing `layer`.
    pub fn bitmap(&self, layer: usize) -> &Bitmap {
        if self.per_layer {
            &self.bitmaps[layer]
        } else {
            &self.bitmaps[0]
        }
    }

    pub fn popcount(&self) -> usize {
        self.bitmaps.iter().map(Bitmap::popcount).sum::<usize>() / self.bitmaps.len()
    }

    pub fn reset(&mut self) {
        for b in &mut self.bitmaps {
            *b = Bitmap::ones(b.len());
        }
        self.kv_last = None;
    }

    /// Called once per decode token after the full layer stack.
    pub fn on_token_end(&mut self, token: usize, kv_now: usize) -> Option<RebalanceEvent> {
        let kv_last = *self.kv_last.get_or_insert(kv_now);
        let delta = kv_now.saturating_sub(kv_last) as f64 * self.per_context;
        let before = self.bitmaps[0].popcount();
        let mut changed = false;
        for b in &mut self.bitmaps {
            let nb = rebalance(delta, &self.params, b);
            changed |= nb != *b;
            *b = nb;
        }
        if !changed {
            return None;
        }
        self.kv_last = Some(kv_now);
        Some(RebalanceEvent {
            token,
            kv_len: kv_now,
            delta_c: delta,
            cleared: before - self.bitmaps[0].popcount(),
            popcount: self.popcount(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;

    fn bm(s: &str) -> Bitmap {
        s.parse().unwrap()
    }

    #[test]
    fn tail_first_hand_trace() {
        let p = SchedulerParams { c_npu: 100.0, u: 4096, p: 65536 };
        assert_eq!(p.c_th(), 1600.0);
        assert_eq!(rebalance(2000.0, &p, &bm("11110")), bm("11000"));
        assert_eq!(rebalance(0.0, &p, &bm("11110")), bm("11110"));
        assert_eq!(rebalance(1600.0, &p, &bm("11110")), bm("11110"));
        assert_eq!(rebalance(1e9, &p, &bm("00000")), bm("00000"));
        assert_eq!(rebalance(1e9, &p, &bm("10100")), bm("00000"));
    }

    #[test]
    fn split() {
        assert_eq!(split_columns(&bm("1010")), (vec![0, 2], vec![1, 3]));
        assert_eq!(split_columns(&bm("111")), (vec![0, 1, 2], vec![]));
        assert_eq!(split_columns(&Bitmap::ones(0)), (vec![], vec![]));
        assert_eq!(bm("0110").to_string(), "0110");
    }

    #[test]
    fn llama2_params() {
        let m = builtin_model("LLaMA2-7B").unwrap();
        let npu = NpuConfig::default();
        let p = SchedulerParams::for_model(&m, &NandConfig::default(), &npu, 0.0);
        assert_eq!(p.c_npu, 1024.0);
        assert_eq!(p.u, 4096);
        assert_eq!(p.p, 65536);
        assert_eq!(per_context_cycles(&m, &npu), 2048.0);
        assert_eq!(estimate_delta_cycles(10, 10, &m, &npu), 0.0);
        assert_eq!(estimate_delta_cycles(11, 10, &m, &npu), 2048.0);
        assert_eq!(bitmap_width(&m), 4 * 4096);
    }

    #[test]
    fn scheduler_offloads_tail_columns_and_resets_baseline() {
        let m = builtin_model("LLaMA2-7B").unwrap();
        let npu = NpuConfig::default();
        let p = SchedulerParams::for_model(&m, &NandConfig::default(), &npu, 0.0);
        let mut s = KvScheduler::new(&m, &npu, p, false);
        let h = bitmap_width(&m);
        assert!(s.on_token_end(0, 100).is_none());
        // C_th = 16 * 1024 = 16384 = 8 tokens of context
        for t in 1..=8 {
            assert!(s.on_token_end(t, 100 + t).is_none());
        }
        let ev = s.on_token_end(9, 109).unwrap();
        assert_eq!(ev.cleared, 2);
        assert!(!s.bitmap(0).get(h - 1) && !s.bitmap(0).get(h - 2) && s.bitmap(0).get(h - 3));
        assert!(s.on_token_end(10, 110).is_none());
        s.reset();
        assert_eq!(s.popcount(), h);
    }
}
