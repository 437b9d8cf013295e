//! Error-resilient dot-product engine.
//!
//! Dot products consume raw (possibly corrupted) NAND segments. Clean segments
//! are accumulated immediately; dirty ones go to the corrector while the lane
//! keeps streaming, and their contribution is committed after the main pass.

mod dot;
mod gemv;
mod scoreboard;

pub use dot::{deferred_commit, ooo_ecdp, reference_dot, DotEngine};
pub use gemv::{gemv_decompose, run_gemv, WeightMatrix};
pub use scoreboard::{Scoreboard, SegmentState};

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::ecc::SegmentCodec;
use crate::model::WeightPrecision;
use crate::{Error, Result};

/// A weight or activation vector. BF16 values are raw bit patterns.
#[derive(Debug, Clone, PartialEq)]
pub enum Vector {
    Int8(Vec<i8>),
    Bf16(Vec<u16>),
}

impl Vector {
    pub fn len(&self) -> usize {
        match self {
            Vector::Int8(v) => v.len(),
            Vector::Bf16(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn precision(&self) -> WeightPrecision {
        match self {
            Vector::Int8(_) => WeightPrecision::Int8,
            Vector::Bf16(_) => WeightPrecision::Bf16,
        }
    }

    fn padded(&self, len: usize) -> Vector {
        match self {
            Vector::Int8(v) => {
                let mut v = v.clone();
                v.resize(len, 0);
                Vector::Int8(v)
            }
            Vector::Bf16(v) => {
                let mut v = v.clone();
                v.resize(len, 0);
                Vector::Bf16(v)
            }
        }
    }

    /// Little-endian storage image.
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Vector::Int8(v) => v.iter().map(|&x| x as u8).collect(),
            Vector::Bf16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }
}

pub fn bf16_to_f32(bits: u16) -> f32 {
    f32::from_bits((bits as u32) << 16)
}

/// Round-to-nearest-even.
pub fn f32_to_bf16(x: f32) -> u16 {
    let bits = x.to_bits();
    if x.is_nan() {
        return 0x7fc0;
    }
    let round = 0x7fff + ((bits >> 16) & 1);
    ((bits + round) >> 16) as u16
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DotValue {
    /// INT32 accumulator for INT8 inputs.
    Int(i32),
    /// FP32 accumulator for BF16 inputs.
    Float(f32),
}

impl DotValue {
    pub fn as_f64(self) -> f64 {
        match self {
            DotValue::Int(v) => v as f64,
            DotValue::Float(v) => v as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncorrectablePolicy {
    /// Fail the dot product (and the token) with an error.
    Abort,
    /// Commit the raw segment and flag the result.
    Proceed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bf16Accumulation {
    Fp32,
    /// Kahan-compensated FP32.
    Compensated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EcdpOptions {
    pub policy: UncorrectablePolicy,
    pub bf16: Bf16Accumulation,
}

impl Default for EcdpOptions {
    fn default() -> Self {
        EcdpOptions {
            policy: UncorrectablePolicy::Abort,
            bf16: Bf16Accumulation::Fp32,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DotStats {
    pub segments_total: u64,
    pub segments_dirty: u64,
    pub segments_corrected: u64,
    pub segments_uncorrectable: u64,
    pub deferred_commits: u64,
    /// Dirty segments whose corrected data matched the raw read (flip in parity).
    pub parity_only: u64,
    /// Lane cycles: one per streamed segment plus the deferred-commit tail.
    pub lane_cycles: u64,
}

impl DotStats {
    pub fn merge(&mut self, o: &DotStats) {
        self.segments_total += o.segments_total;
        self.segments_dirty += o.segments_dirty;
        self.segments_corrected += o.segments_corrected;
        self.segments_uncorrectable += o.segments_uncorrectable;
        self.deferred_commits += o.deferred_commits;
        self.parity_only += o.parity_only;
        self.lane_cycles += o.lane_cycles;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DotResult {
    pub value: DotValue,
    pub stats: DotStats,
    /// Set when an uncorrectable segment was committed under `Proceed`.
    pub corrupt: bool,
}

/// One dot product as stored in NAND: padded weights, per-segment parity, and
/// the activation vector it multiplies.
#[derive(Debug, Clone)]
pub struct DotJob {
    precision: WeightPrecision,
    /// Storage image, padded to a whole number of segments.
    weights: Vec<u8>,
    activations: Arc<Vector>,
    segment_factor: usize,
    parity: Vec<Vec<u8>>,
    len: usize,
}

impl DotJob {
    pub fn new(
        weights: &Vector,
        activations: Arc<Vector>,
        segment_factor: usize,
        codec: &dyn SegmentCodec,
    ) -> Result<DotJob> {
        let h = weights.len();
        if activations.len() < h {
            return Err(Error::LengthMismatch { expected: h, actual: activations.len() });
        }
        if weights.precision() != activations.precision() {
            return Err(Error::ShapeMismatch("weight and activation precision differ".into()));
        }
        if segment_factor == 0 {
            return Err(Error::ShapeMismatch("segment factor must be > 0".into()));
        }
        let precision = weights.precision();
        let seg_bytes = segment_factor * precision.bytes();
        if seg_bytes % codec.config().subword_bytes() != 0 {
            return Err(Error::InvalidCode(format!(
                "segment of {seg_bytes} bytes is not a whole number of {}-byte subwords",
                codec.config().subword_bytes()
            )));
        }
        let padded_len = h.div_ceil(segment_factor) * segment_factor;
        let stored = weights.padded(padded_len).to_bytes();
        let activations = if activations.len() == padded_len {
            activations
        } else {
            Arc::new(activations.padded(padded_len))
        };
        let parity = stored
            .chunks(seg_bytes)
            .map(|s| codec.encode(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(DotJob {
            precision,
            weights: stored,
            activations,
            segment_factor,
            parity,
            len: h,
        })
    }

    pub fn precision(&self) -> WeightPrecision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn segment_factor(&self) -> usize {
        self.segment_factor
    }

    pub fn segments(&self) -> usize {
        self.parity.len()
    }

    pub fn segment_bytes(&self) -> usize {
        self.segment_factor * self.precision.bytes()
    }

    pub fn codeword_bytes(&self) -> usize {
        self.segment_bytes() + self.parity.first().map_or(0, |p| p.len())
    }

    pub fn activations(&self) -> &Vector {
        &self.activations
    }

    pub fn segment_data(&self, idx: usize) -> &[u8] {
        let b = self.segment_bytes();
        &self.weights[idx * b..(idx + 1) * b]
    }

    pub fn segment_parity(&self, idx: usize) -> &[u8] {
        &self.parity[idx]
    }

    /// Clean weights (without padding).
    pub fn clean_weights(&self) -> Vector {
        match self.precision {
            WeightPrecision::Int8 => Vector::Int8(self.weights[..self.len].iter().map(|&b| b as i8).collect()),
            WeightPrecision::Bf16 => Vector::Bf16(
                self.weights[..self.len * 2]
                    .chunks(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]))
                    .collect(),
            ),
        }
    }

    /// The raw read image: each segment's data followed by its parity.
    pub fn stored_codewords(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.segments() * self.codeword_bytes());
        for i in 0..self.segments() {
            out.extend_from_slice(self.segment_data(i));
            out.extend_from_slice(&self.parity[i]);
        }
        out
    }
}
