use super::{get_bit, CheckStatus, CodeConfig, CorrectionOutcome, SegmentCodec};
use crate::{Error, Result};

/// Extended Hamming SEC-DED over `data_bits` subwords, default (72,64).
///
/// Parity word layout per subword: bits `0..r` are the Hamming check bits (check
/// bit `j` sits at code position `2^j`), bit `r` is the overall parity.
#[derive(Debug, Clone)]
pub struct SecDedCodec {
    cfg: CodeConfig,
    r: usize,
    /// Hamming position (1-based) of each data bit.
    positions: Vec<u16>,
    /// Inverse of `positions`; `u16::MAX` for check-bit or out-of-range positions.
    data_index: Vec<u16>,
    /// Syndrome contribution of byte `b` of a subword with value `v`: `tables[b][v]`.
    tables: Vec<[u16; 256]>,
    correction_enabled: bool,
}

impl SecDedCodec {
    pub fn new(cfg: CodeConfig) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.data_bits_per_subword;
        let r = cfg.parity_bits_per_subword - 1;
        let positions: Vec<u16> = (1u16..)
            .filter(|p| !p.is_power_of_two())
            .take(k)
            .collect();
        let mut data_index = vec![u16::MAX; 1 << r];
        for (i, &p) in positions.iter().enumerate() {
            data_index[p as usize] = i as u16;
        }
        let mut tables = vec![[0u16; 256]; k / 8];
        for (b, table) in tables.iter_mut().enumerate() {
            for v in 0..256usize {
                table[v] = (0..8)
                    .filter(|bit| v >> bit & 1 == 1)
                    .fold(0, |s, bit| s ^ positions[b * 8 + bit]);
            }
        }
        Ok(SecDedCodec {
            cfg,
            r,
            positions,
            data_index,
            tables,
            correction_enabled: true,
        })
    }

    /// Test hook: a corrector that reports success without repairing anything.
    #[doc(hidden)]
    pub fn with_correction_disabled(mut self) -> Self {
        self.correction_enabled = false;
        self
    }

    fn data_syndrome(&self, sub: &[u8]) -> u16 {
        sub.iter()
            .zip(&self.tables)
            .fold(0, |s, (&v, t)| s ^ t[v as usize])
    }

    fn subword_parity(&self, sub: &[u8]) -> u16 {
        let syn = self.data_syndrome(sub);
        let ones: u32 = sub.iter().map(|b| b.count_ones()).sum::<u32>() + syn.count_ones();
        syn | (((ones & 1) as u16) << self.r)
    }

    fn read_parity(&self, parity: &[u8], i: usize) -> u16 {
        let pb = self.cfg.parity_bits_per_subword;
        if pb == 8 {
            return parity.get(i).copied().unwrap_or(0) as u16;
        }
        (0..pb).fold(0u16, |acc, j| {
            let bit = i * pb + j;
            if bit / 8 < parity.len() && get_bit(parity, bit) {
                acc | (1 << j)
            } else {
                acc
            }
        })
    }

    /// Per-subword status: `None` clean, `Some(Ok(bit))` single error at data bit
    /// (or `usize::MAX` when it is in the parity word), `Some(Err(()))` uncorrectable.
    fn diagnose(&self, sub: &[u8], stored: u16) -> Option<std::result::Result<usize, ()>> {
        let check_mask = (1u16 << self.r) - 1;
        let fresh = self.subword_parity(sub);
        let syndrome = (fresh ^ stored) & check_mask;
        let ones: u32 = sub.iter().map(|b| b.count_ones()).sum::<u32>() + stored.count_ones();
        let odd = ones & 1 == 1;
        match (syndrome, odd) {
            (0, false) => None,
            (0, true) => Some(Ok(usize::MAX)),
            (s, true) if s.is_power_of_two() => Some(Ok(usize::MAX)),
            (s, true) => match self.data_index.get(s as usize) {
                Some(&idx) if idx != u16::MAX => Some(Ok(idx as usize)),
                _ => Some(Err(())),
            },
            (_, false) => Some(Err(())),
        }
    }

    pub fn positions(&self) -> &[u16] {
        &self.positions
    }
}

impl SegmentCodec for SecDedCodec {
    fn config(&self) -> &CodeConfig {
        &self.cfg
    }

    fn encode(&self, data: &[u8]) -> Result<Vec<u8>> {
        let w = self.cfg.subword_bytes();
        if data.is_empty() || data.len() % w != 0 {
            return Err(Error::LengthMismatch {
                expected: data.len().div_ceil(w).max(1) * w,
                actual: data.len(),
            });
        }
        let pb = self.cfg.parity_bits_per_subword;
        let mut out = vec![0u8; self.cfg.parity_bytes_for(data.len())];
        for (i, sub) in data.chunks(w).enumerate() {
            let p = self.subword_parity(sub);
            for j in 0..pb {
                if p >> j & 1 == 1 {
                    let bit = i * pb + j;
                    out[bit / 8] |= 1 << (bit % 8);
                }
            }
        }
        Ok(out)
    }

    fn check(&self, data: &[u8], parity: &[u8]) -> CheckStatus {
        let w = self.cfg.subword_bytes();
        let clean = data
            .chunks(w)
            .enumerate()
            .all(|(i, sub)| self.subword_parity(sub) == self.read_parity(parity, i));
        if clean {
            CheckStatus::Clean
        } else {
            CheckStatus::Dirty
        }
    }

    fn correct(&self, data: &[u8], parity: &[u8]) -> (Vec<u8>, CorrectionOutcome) {
        let mut out = data.to_vec();
        let mut outcome = CorrectionOutcome::Corrected;
        let w = self.cfg.subword_bytes();
        for (i, sub) in data.chunks(w).enumerate() {
            match self.diagnose(sub, self.read_parity(parity, i)) {
                None | Some(Ok(usize::MAX)) => {}
                Some(Ok(bit)) => {
                    let global = i * w * 8 + bit;
                    if self.correction_enabled && global / 8 < out.len() {
                        super::flip_bit(&mut out, global);
                    }
                }
                Some(Err(())) => {
                    if self.correction_enabled {
                        outcome = CorrectionOutcome::DetectedUncorrectable;
                    }
                }
            }
        }
        (out, outcome)
    }
}
