//! Segment error checking and correction.
//!
//! A segment of `d` weights is split into fixed-width subwords, each protected by
//! an extended Hamming (SEC-DED) parity word. Checking is a single parallel
//! syndrome pass; correction is the slower path the corrector hub runs.
//! Bit order everywhere is little-endian: bit `i` is bit `i % 8` of byte `i / 8`.

mod fault;
mod secded;

pub use fault::{FaultModel, SegmentErrorRates};
pub use secded::SecDedCodec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    #[serde(rename = "data_bits", default = "default_data_bits")]
    pub data_bits_per_subword: usize,
    #[serde(rename = "parity_bits", default = "default_parity_bits")]
    pub parity_bits_per_subword: usize,
    /// NAND-CMOS cycles the corrector hub needs per segment.
    #[serde(default = "default_correction_cycles")]
    pub correction_cycles: u32,
}

fn default_data_bits() -> usize {
    64
}
fn default_parity_bits() -> usize {
    8
}
fn default_correction_cycles() -> u32 {
    8
}

impl Default for CodeConfig {
    fn default() -> Self {
        CodeConfig {
            data_bits_per_subword: default_data_bits(),
            parity_bits_per_subword: default_parity_bits(),
            correction_cycles: default_correction_cycles(),
        }
    }
}

/// Smallest `r` with `2^r >= k + r + 1`.
pub fn hamming_check_bits(k: usize) -> usize {
    let mut r = 1;
    while (1usize << r) < k + r + 1 {
        r += 1;
    }
    r
}

impl CodeConfig {
    pub fn validate(&self) -> Result<()> {
        let k = self.data_bits_per_subword;
        if k == 0 || k > 64 || k % 8 != 0 {
            return Err(Error::config(
                "ecc.data_bits",
                format!("must be a multiple of 8 in 8..=64, got {k}"),
            ));
        }
        let need = hamming_check_bits(k) + 1;
        if self.parity_bits_per_subword != need {
            return Err(Error::config(
                "ecc.parity_bits",
                format!("SEC-DED over {k} data bits needs {need} parity bits, got {}", self.parity_bits_per_subword),
            ));
        }
        Ok(())
    }

    pub fn subword_bytes(&self) -> usize {
        self.data_bits_per_subword / 8
    }

    pub fn subwords_per_segment(&self, segment_bytes: usize) -> usize {
        segment_bytes.div_ceil(self.subword_bytes())
    }

    pub fn parity_bits_for(&self, segment_bytes: usize) -> usize {
        self.subwords_per_segment(segment_bytes) * self.parity_bits_per_subword
    }

    pub fn parity_bytes_for(&self, segment_bytes: usize) -> usize {
        self.parity_bits_for(segment_bytes).div_ceil(8)
    }

    /// Stored bytes (data + parity) for one segment.
    pub fn codeword_bytes(&self, segment_bytes: usize) -> usize {
        segment_bytes + self.parity_bytes_for(segment_bytes)
    }

    pub fn code_rate(&self) -> f64 {
        let k = self.data_bits_per_subword as f64;
        k / (k + self.parity_bits_per_subword as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Codeword {
    pub data: Vec<u8>,
    pub parity: Vec<u8>,
}

impl Codeword {
    pub fn bit_len(&self) -> usize {
        (self.data.len() + self.parity.len()) * 8
    }

    /// Flips bit `i` of the concatenation `data ++ parity`.
    pub fn flip(&mut self, i: usize) {
        let n = self.data.len() * 8;
        if i < n {
            flip_bit(&mut self.data, i);
        } else {
            flip_bit(&mut self.parity, i - n);
        }
    }

    pub fn concat(&self) -> Vec<u8> {
        let mut v = self.data.clone();
        v.extend_from_slice(&self.parity);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    Clean,
    Dirty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrectionOutcome {
    Corrected,
    DetectedUncorrectable,
}

/// Interface to the segment code so other block codes can be plugged in.
pub trait SegmentCodec: Send + Sync {
    fn config(&self) -> &CodeConfig;

    fn encode(&self, data: &[u8]) -> Result<Vec<u8>>;

    fn check(&self, data: &[u8], parity: &[u8]) -> CheckStatus;

    /// Returns the repaired data and whether every subword was repairable.
    /// Clean input is returned unchanged with `Corrected`.
    fn correct(&self, data: &[u8], parity: &[u8]) -> (Vec<u8>, CorrectionOutcome);

    fn encode_codeword(&self, data: &[u8]) -> Result<Codeword> {
        Ok(Codeword {
            data: data.to_vec(),
            parity: self.encode(data)?,
        })
    }
}

pub fn encode(segment: &[u8], cfg: &CodeConfig) -> Result<Vec<u8>> {
    SecDedCodec::new(*cfg)?.encode(segment)
}

pub fn check(cw: &Codeword, cfg: &CodeConfig) -> Result<CheckStatus> {
    Ok(SecDedCodec::new(*cfg)?.check(&cw.data, &cw.parity))
}

pub fn correct(cw: &Codeword, cfg: &CodeConfig) -> Result<(Vec<u8>, CorrectionOutcome)> {
    Ok(SecDedCodec::new(*cfg)?.correct(&cw.data, &cw.parity))
}

#[inline]
pub(crate) fn get_bit(bytes: &[u8], i: usize) -> bool {
    (bytes[i / 8] >> (i % 8)) & 1 == 1
}

#[inline]
pub(crate) fn flip_bit(bytes: &mut [u8], i: usize) {
    bytes[i / 8] ^= 1 << (i % 8);
}
