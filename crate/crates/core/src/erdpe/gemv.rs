use std::sync::Arc;

use super::{reference_dot, DotEngine, DotJob, DotStats, DotValue, Vector};
use crate::ecc::{FaultModel, SegmentCodec};
use crate::{Error, Result};

/// Weight matrix stored one output column after another: column `j` is
/// `data[j * inner..(j + 1) * inner]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub columns: usize,
    pub inner: usize,
    pub data: Vector,
}

impl WeightMatrix {
    pub fn new(columns: usize, inner: usize, data: Vector) -> Result<Self> {
        if data.len() != columns * inner {
            return Err(Error::LengthMismatch { expected: columns * inner, actual: data.len() });
        }
        Ok(WeightMatrix { columns, inner, data })
    }

    pub fn column(&self, j: usize) -> Vector {
        let r = j * self.inner..(j + 1) * self.inner;
        match &self.data {
            Vector::Int8(v) => Vector::Int8(v[r].to_vec()),
            Vector::Bf16(v) => Vector::Bf16(v[r].to_vec()),
        }
    }

    pub fn reference_gemv(&self, activation: &Vector) -> Result<Vec<DotValue>> {
        (0..self.columns)
            .map(|j| reference_dot(&self.column(j), activation))
            .collect()
    }
}

/// One dot-product job per output column, all sharing the same activation.
pub fn gemv_decompose(
    m: &WeightMatrix,
    activation: &Vector,
    segment_factor: usize,
    codec: &dyn SegmentCodec,
) -> Result<Vec<DotJob>> {
    if activation.len() != m.inner {
        return Err(Error::LengthMismatch { expected: m.inner, actual: activation.len() });
    }
    let act = Arc::new(activation.clone());
    (0..m.columns)
        .map(|j| DotJob::new(&m.column(j), Arc::clone(&act), segment_factor, codec))
        .collect()
}

/// Runs each job as its own NAND read, `read_base + j` for column `j`.
pub fn run_gemv(
    jobs: &[DotJob],
    engine: &DotEngine<'_>,
    fault: &FaultModel,
    read_base: u64,
) -> Result<(Vec<DotValue>, DotStats, bool)> {
    let mut out = Vec::with_capacity(jobs.len());
    let mut stats = DotStats::default();
    let mut corrupt = false;
    for (j, job) in jobs.iter().enumerate() {
        let mut raw = job.stored_codewords();
        fault.inject_in_place(&mut raw, read_base + j as u64);
        let (v, s, c) = engine.run_raw(job, &raw, &[job.activations()])?;
        out.push(v[0]);
        stats.merge(&s);
        corrupt |= c;
    }
    Ok((out, stats, corrupt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecc::{CodeConfig, SecDedCodec};
    use crate::erdpe::{EcdpOptions, UncorrectablePolicy};

    #[test]
    fn gemv_matches_reference_under_faults() {
        let c = SecDedCodec::new(CodeConfig::default()).unwrap();
        let (cols, inner) = (16, 200);
        let data: Vec<i8> = (0..cols * inner).map(|i| ((i * 31 + 7) % 255) as i8).collect();
        let m = WeightMatrix::new(cols, inner, Vector::Int8(data)).unwrap();
        let act = Vector::Int8((0..inner).map(|i| (i % 13) as i8 - 6).collect());
        let jobs = gemv_decompose(&m, &act, 32, &c).unwrap();
        assert_eq!(jobs.len(), cols);
        let opts = EcdpOptions { policy: UncorrectablePolicy::Proceed, ..Default::default() };
        let engine = DotEngine::new(&c, opts);
        let fault = FaultModel::new(1e-4, 1).unwrap();
        let (v, stats, corrupt) = run_gemv(&jobs, &engine, &fault, 0).unwrap();
        assert_eq!(stats.segments_total, 16 * 7);
        if !corrupt {
            assert_eq!(v, m.reference_gemv(&act).unwrap());
        }
        assert!(WeightMatrix::new(2, 3, Vector::Int8(vec![0; 5])).is_err());
        assert!(gemv_decompose(&m, &Vector::Int8(vec![0; 3]), 32, &c).is_err());
    }
}
