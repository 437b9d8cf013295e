use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use super::{flip_bit, CodeConfig};
use crate::rng;
use crate::{Error, Result};

/// Static raw bit error rate on NAND reads.
///
/// Each read is identified by an index; the flip pattern of read `i` depends only
/// on `(seed, i)`, never on how many other reads happened before it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultModel {
    pub rber: f64,
    pub seed: u64,
}

impl FaultModel {
    pub fn new(rber: f64, seed: u64) -> Result<Self> {
        let m = FaultModel { rber, seed };
        m.validate()?;
        Ok(m)
    }

    pub fn none() -> Self {
        FaultModel { rber: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rber) || self.rber.is_nan() {
            return Err(Error::config("fault.rber", format!("must be in [0, 1], got {}", self.rber)));
        }
        Ok(())
    }

    pub fn inject(&self, bits: &[u8], read_index: u64) -> Vec<u8> {
        let mut out = bits.to_vec();
        self.inject_in_place(&mut out, read_index);
        out
    }

    /// Returns the number of flipped bits.
    pub fn inject_in_place(&self, bits: &mut [u8], read_index: u64) -> usize {
        let n = bits.len() * 8;
        if self.rber <= 0.0 || n == 0 {
            return 0;
        }
        if self.rber >= 1.0 {
            bits.iter_mut().for_each(|b| *b = !*b);
            return n;
        }
        let mut r = rng::stream(self.seed, "nand-read", read_index);
        let gap = Geometric::new(self.rber).expect("rber in (0,1)");
        let mut flips = 0;
        let mut pos = gap.sample(&mut r);
        while pos < n as u64 {
            flip_bit(bits, pos as usize);
            flips += 1;
            pos += 1 + gap.sample(&mut r);
        }
        flips
    }

    /// Flip count for `n` bits without materializing them.
    pub fn sample_flip_count<R: Rng>(&self, n: u64, rng: &mut R) -> u64 {
        if self.rber <= 0.0 {
            return 0;
        }
        rand_distr::Binomial::new(n, self.rber)
            .expect("valid binomial")
            .sample(rng)
    }
}

/// Exact per-segment error probabilities for independent bit flips at `rber`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentErrorRates {
    /// Segment fails the inline check.
    pub dirty: f64,
    /// At least one subword has two or more flips.
    pub uncorrectable: f64,
    /// Dirty, correctable, and every flip sits in parity bits (data already right).
    pub parity_only: f64,
}

impl SegmentErrorRates {
    pub fn new(rber: f64, code: &CodeConfig, segment_bytes: usize) -> Self {
        let k = code.data_bits_per_subword as f64;
        let pb = code.parity_bits_per_subword as f64;
        let n = k + pb;
        let s = code.subwords_per_segment(segment_bytes) as i32;
        let q = 1.0 - rber;
        let p0 = q.powf(n);
        let p1 = n * rber * q.powf(n - 1.0);
        let p1_parity = pb * rber * q.powf(n - 1.0);
        let clean = p0.powi(s);
        let correctable = (p0 + p1).powi(s);
        SegmentErrorRates {
            dirty: 1.0 - clean,
            uncorrectable: (1.0 - correctable).max(0.0),
            parity_only: ((p0 + p1_parity).powi(s) - clean).max(0.0),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.dirty == 0.0
    }
}
