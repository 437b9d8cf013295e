use std::collections::BTreeMap;

use super::{
    bf16_to_f32, Bf16Accumulation, DotJob, DotResult, DotStats, DotValue, EcdpOptions, Scoreboard,
    SegmentState, UncorrectablePolicy, Vector,
};
use crate::ecc::{CheckStatus, CorrectionOutcome, FaultModel, SegmentCodec};
use crate::model::WeightPrecision;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
enum Acc {
    Int(i32),
    Float { sum: f32, comp: f32, kahan: bool },
}

impl Acc {
    fn new(precision: WeightPrecision, mode: Bf16Accumulation) -> Acc {
        match precision {
            WeightPrecision::Int8 => Acc::Int(0),
            WeightPrecision::Bf16 => Acc::Float {
                sum: 0.0,
                comp: 0.0,
                kahan: mode == Bf16Accumulation::Compensated,
            },
        }
    }

    fn from_value(v: DotValue, mode: Bf16Accumulation) -> Acc {
        match v {
            DotValue::Int(i) => Acc::Int(i),
            DotValue::Float(f) => Acc::Float {
                sum: f,
                comp: 0.0,
                kahan: mode == Bf16Accumulation::Compensated,
            },
        }
    }

    fn value(self) -> DotValue {
        match self {
            Acc::Int(i) => DotValue::Int(i),
            Acc::Float { sum, .. } => DotValue::Float(sum),
        }
    }

    fn add_f32(&mut self, x: f32) {
        if let Acc::Float { sum, comp, kahan } = self {
            if *kahan {
                let y = x - *comp;
                let t = *sum + y;
                *comp = (t - *sum) - y;
                *sum = t;
            } else {
                *sum += x;
            }
        }
    }

    /// Accumulates `data` (one segment's storage bytes) against `act[offset..]`.
    /// Activation positions past the end count as zero.
    fn add_segment(&mut self, data: &[u8], act: &Vector, offset: usize) {
        match (self, act) {
            (Acc::Int(s), Vector::Int8(a)) => {
                for (k, &w) in data.iter().enumerate() {
                    let x = a.get(offset + k).copied().unwrap_or(0);
                    *s = s.wrapping_add((w as i8 as i32) * (x as i32));
                }
            }
            (acc @ Acc::Float { .. }, Vector::Bf16(a)) => {
                for (k, c) in data.chunks_exact(2).enumerate() {
                    let w = bf16_to_f32(u16::from_le_bytes([c[0], c[1]]));
                    let x = bf16_to_f32(a.get(offset + k).copied().unwrap_or(0));
                    // bf16 x bf16 is exact in f32
                    acc.add_f32(w * x);
                }
            }
            _ => unreachable!("precision checked by caller"),
        }
    }
}

/// Reference dot product: in-order accumulation over clean data.
pub fn reference_dot(weights: &Vector, activations: &Vector) -> Result<DotValue> {
    if weights.len() != activations.len() {
        return Err(Error::LengthMismatch { expected: weights.len(), actual: activations.len() });
    }
    match (weights, activations) {
        (Vector::Int8(w), Vector::Int8(a)) => Ok(DotValue::Int(
            w.iter()
                .zip(a)
                .fold(0i32, |s, (&w, &a)| s.wrapping_add(w as i32 * a as i32)),
        )),
        (Vector::Bf16(w), Vector::Bf16(a)) => Ok(DotValue::Float(
            w.iter()
                .zip(a)
                .fold(0f32, |s, (&w, &a)| s + bf16_to_f32(w) * bf16_to_f32(a)),
        )),
        _ => Err(Error::ShapeMismatch("weight and activation precision differ".into())),
    }
}

fn commit_into(
    acc: &mut Acc,
    scoreboard: &mut Scoreboard,
    corrected: &BTreeMap<usize, Vec<u8>>,
    act: &Vector,
    segment_factor: usize,
) -> Result<()> {
    for (idx, state) in scoreboard.iter() {
        if state != SegmentState::Checked {
            return Err(Error::MissingCorrection { segment: idx });
        }
        if !corrected.contains_key(&idx) {
            return Err(Error::MissingCorrection { segment: idx });
        }
    }
    for idx in scoreboard.indices() {
        acc.add_segment(&corrected[&idx], act, idx * segment_factor);
        scoreboard.remove(idx);
    }
    Ok(())
}

/// Folds every scoreboard entry into `value`, in ascending segment order, and
/// empties the scoreboard. Fails if any entry has no corrected data yet.
pub fn deferred_commit(
    value: DotValue,
    scoreboard: &mut Scoreboard,
    corrected: &BTreeMap<usize, Vec<u8>>,
    activations: &Vector,
    segment_factor: usize,
    mode: Bf16Accumulation,
) -> Result<DotValue> {
    let mut acc = Acc::from_value(value, mode);
    commit_into(&mut acc, scoreboard, corrected, activations, segment_factor)?;
    Ok(acc.value())
}

/// Out-of-order dot-product lane bound to a codec.
pub struct DotEngine<'a> {
    codec: &'a dyn SegmentCodec,
    opts: EcdpOptions,
}

impl<'a> DotEngine<'a> {
    pub fn new(codec: &'a dyn SegmentCodec, opts: EcdpOptions) -> Self {
        DotEngine { codec, opts }
    }

    pub fn options(&self) -> EcdpOptions {
        self.opts
    }

    /// Runs the lane over a raw read image (`segments` codewords back to back)
    /// against one or more activation vectors. Each weight segment is read and
    /// checked once regardless of how many activations reuse it.
    pub fn run_raw(
        &self,
        job: &DotJob,
        raw: &[u8],
        activations: &[&Vector],
    ) -> Result<(Vec<DotValue>, DotStats, bool)> {
        let cw = job.codeword_bytes();
        let seg = job.segment_bytes();
        let n = job.segments();
        if raw.len() != n * cw {
            return Err(Error::LengthMismatch { expected: n * cw, actual: raw.len() });
        }
        for a in activations {
            if a.precision() != job.precision() {
                return Err(Error::ShapeMismatch("activation precision differs from weights".into()));
            }
        }
        let d = job.segment_factor();
        let corr_cycles = self.codec.config().correction_cycles as u64;
        let mut accs: Vec<Acc> = activations
            .iter()
            .map(|_| Acc::new(job.precision(), self.opts.bf16))
            .collect();
        let mut stats = DotStats {
            segments_total: n as u64,
            ..Default::default()
        };
        let mut scoreboard = Scoreboard::new();
        let mut corrected = BTreeMap::new();
        // (segment, cycle the corrector returns it, needs a commit cycle)
        let mut returns: Vec<(usize, u64, bool)> = Vec::new();
        let mut corrupt = false;

        for i in 0..n {
            let word = &raw[i * cw..(i + 1) * cw];
            let (data, parity) = word.split_at(seg);
            match self.codec.check(data, parity) {
                CheckStatus::Clean => {
                    for (acc, a) in accs.iter_mut().zip(activations) {
                        acc.add_segment(data, a, i * d);
                    }
                }
                CheckStatus::Dirty => {
                    stats.segments_dirty += 1;
                    scoreboard.insert(i, SegmentState::AwaitingCorrection);
                    let ready = i as u64 + 1 + corr_cycles;
                    let (fixed, outcome) = self.codec.correct(data, parity);
                    match outcome {
                        CorrectionOutcome::Corrected => {
                            stats.segments_corrected += 1;
                            if fixed == data {
                                // masked-buffer re-check: nothing to repair
                                scoreboard.remove(i);
                                for (acc, a) in accs.iter_mut().zip(activations) {
                                    acc.add_segment(data, a, i * d);
                                }
                                stats.parity_only += 1;
                                returns.push((i, ready, false));
                            } else {
                                scoreboard.set_state(i, SegmentState::Checked);
                                corrected.insert(i, fixed);
                                stats.deferred_commits += 1;
                                returns.push((i, ready, true));
                            }
                        }
                        CorrectionOutcome::DetectedUncorrectable => {
                            stats.segments_uncorrectable += 1;
                            if self.opts.policy == UncorrectablePolicy::Abort {
                                return Err(Error::UncorrectableSegment { segment: i });
                            }
                            corrupt = true;
                            scoreboard.set_state(i, SegmentState::Checked);
                            corrected.insert(i, data.to_vec());
                            stats.deferred_commits += 1;
                            returns.push((i, ready, true));
                        }
                    }
                }
            }
        }

        let mut t = n as u64;
        for &(_, ready, commits) in &returns {
            t = t.max(ready) + commits as u64;
        }
        stats.lane_cycles = t;

        for (acc, a) in accs.iter_mut().zip(activations) {
            let mut sb = scoreboard.clone();
            commit_into(acc, &mut sb, &corrected, a, d)?;
        }
        Ok((accs.into_iter().map(Acc::value).collect(), stats, corrupt))
    }
}

/// Reads `job` from NAND under `fault` (read `read_index`) and runs the lane.
pub fn ooo_ecdp(
    job: &DotJob,
    codec: &dyn SegmentCodec,
    fault: &FaultModel,
    read_index: u64,
    opts: EcdpOptions,
) -> Result<DotResult> {
    let mut raw = job.stored_codewords();
    fault.inject_in_place(&mut raw, read_index);
    let (values, stats, corrupt) = DotEngine::new(codec, opts).run_raw(job, &raw, &[job.activations()])?;
    Ok(DotResult {
        value: values[0],
        stats,
        corrupt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecc::{CodeConfig, SecDedCodec};
    use crate::erdpe::f32_to_bf16;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn codec() -> SecDedCodec {
        SecDedCodec::new(CodeConfig::default()).unwrap()
    }

    fn int8_job(h: usize, seed: u64) -> DotJob {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<i8> = (0..h).map(|_| rng.random()).collect();
        let a: Vec<i8> = (0..h).map(|_| rng.random()).collect();
        DotJob::new(&Vector::Int8(w), Arc::new(Vector::Int8(a)), 32, &codec()).unwrap()
    }

    fn flip(raw: &mut [u8], job: &DotJob, segment: usize, bit: usize) {
        let at = segment * job.codeword_bytes() * 8 + bit;
        raw[at / 8] ^= 1 << (at % 8);
    }

    fn expected(job: &DotJob) -> DotValue {
        let a = match job.activations() {
            Vector::Int8(v) => Vector::Int8(v[..job.len()].to_vec()),
            Vector::Bf16(v) => Vector::Bf16(v[..job.len()].to_vec()),
        };
        reference_dot(&job.clean_weights(), &a).unwrap()
    }

    #[test]
    fn clean_read_matches_reference() {
        let c = codec();
        for h in [1, 31, 32, 100, 4096] {
            let job = int8_job(h, h as u64);
            let r = ooo_ecdp(&job, &c, &FaultModel::none(), 0, EcdpOptions::default()).unwrap();
            assert_eq!(r.value, expected(&job));
            assert_eq!(r.stats.segments_total, h.div_ceil(32) as u64);
            assert_eq!(r.stats.lane_cycles, r.stats.segments_total);
        }
    }

    #[test]
    fn hand_computed_small_dot() {
        let w = Vector::Int8(vec![1, -2, 3]);
        let a = Vector::Int8(vec![4, 5, -6]);
        assert_eq!(reference_dot(&w, &a).unwrap(), DotValue::Int(4 - 10 - 18));
        let job = DotJob::new(&w, Arc::new(a), 32, &codec()).unwrap();
        let r = ooo_ecdp(&job, &codec(), &FaultModel::none(), 0, EcdpOptions::default()).unwrap();
        assert_eq!(r.value, DotValue::Int(-24));
    }

    #[test]
    fn single_flips_are_corrected_and_deferred() {
        let c = codec();
        let job = int8_job(320, 3);
        let mut raw = job.stored_codewords();
        flip(&mut raw, &job, 2, 5);
        flip(&mut raw, &job, 2, 64 + 9); // second subword, still one flip each
        flip(&mut raw, &job, 7, 200);
        let (v, stats, corrupt) = DotEngine::new(&c, EcdpOptions::default())
            .run_raw(&job, &raw, &[job.activations()])
            .unwrap();
        assert_eq!(v[0], expected(&job));
        assert!(!corrupt);
        assert_eq!(stats.segments_dirty, 2);
        assert_eq!(stats.segments_corrected, 2);
        assert_eq!(stats.deferred_commits, 2);
        assert_eq!(stats.parity_only, 0);
    }

    #[test]
    fn parity_only_flip_commits_immediately() {
        let c = codec();
        let job = int8_job(64, 4);
        let mut raw = job.stored_codewords();
        flip(&mut raw, &job, 1, 256 + 3); // inside the parity bytes
        let (v, stats, _) = DotEngine::new(&c, EcdpOptions::default())
            .run_raw(&job, &raw, &[job.activations()])
            .unwrap();
        assert_eq!(v[0], expected(&job));
        assert_eq!(stats.segments_dirty, 1);
        assert_eq!(stats.parity_only, 1);
        assert_eq!(stats.deferred_commits, 0);
    }

    #[test]
    fn lane_cycles_include_correction_latency() {
        // 4 segments, dirty segment 1 returns at 1 + 1 + 8 = 10, commit takes one more
        let c = codec();
        let job = int8_job(128, 5);
        let mut raw = job.stored_codewords();
        flip(&mut raw, &job, 1, 0);
        let (_, stats, _) = DotEngine::new(&c, EcdpOptions::default())
            .run_raw(&job, &raw, &[job.activations()])
            .unwrap();
        assert_eq!(stats.lane_cycles, 11);
    }

    #[test]
    fn disabled_corrector_is_detected() {
        let c = codec().with_correction_disabled();
        let job = int8_job(64, 6);
        let mut raw = job.stored_codewords();
        flip(&mut raw, &job, 0, 0);
        let (v, _, _) = DotEngine::new(&c, EcdpOptions::default())
            .run_raw(&job, &raw, &[job.activations()])
            .unwrap();
        assert_ne!(v[0], expected(&job));
    }

    #[test]
    fn uncorrectable_abort_and_proceed() {
        let c = codec();
        let job = int8_job(64, 7);
        let mut raw = job.stored_codewords();
        flip(&mut raw, &job, 1, 0);
        flip(&mut raw, &job, 1, 1);
        let err = DotEngine::new(&c, EcdpOptions::default())
            .run_raw(&job, &raw, &[job.activations()])
            .unwrap_err();
        assert_eq!(err, Error::UncorrectableSegment { segment: 1 });
        let opts = EcdpOptions { policy: UncorrectablePolicy::Proceed, ..Default::default() };
        let (_, stats, corrupt) = DotEngine::new(&c, opts)
            .run_raw(&job, &raw, &[job.activations()])
            .unwrap();
        assert!(corrupt);
        assert_eq!(stats.segments_uncorrectable, 1);
        assert_eq!(stats.segments_dirty, stats.segments_corrected + stats.segments_uncorrectable);
    }

    #[test]
    fn deferred_commit_needs_corrections() {
        let mut sb = Scoreboard::new();
        sb.insert(0, SegmentState::AwaitingCorrection);
        let a = Vector::Int8(vec![1; 32]);
        let err = deferred_commit(DotValue::Int(0), &mut sb, &BTreeMap::new(), &a, 32, Bf16Accumulation::Fp32)
            .unwrap_err();
        assert_eq!(err, Error::MissingCorrection { segment: 0 });

        sb.set_state(0, SegmentState::Checked);
        let mut corrected = BTreeMap::new();
        corrected.insert(0, vec![2u8; 32]);
        let v = deferred_commit(DotValue::Int(5), &mut sb, &corrected, &a, 32, Bf16Accumulation::Fp32).unwrap();
        assert_eq!(v, DotValue::Int(5 + 64));
        assert!(sb.is_empty());
    }

    #[test]
    fn multiple_activations_share_one_read() {
        let c = codec();
        let job = int8_job(96, 8);
        let mut raw = job.stored_codewords();
        flip(&mut raw, &job, 0, 17);
        let a2 = Vector::Int8((0..96).map(|i| (i % 7) as i8 - 3).collect());
        let (v, stats, _) = DotEngine::new(&c, EcdpOptions::default())
            .run_raw(&job, &raw, &[job.activations(), &a2])
            .unwrap();
        assert_eq!(v[1], reference_dot(&job.clean_weights(), &a2).unwrap());
        assert_eq!(stats.segments_total, 3);
    }

    #[test]
    fn bf16_with_errors_within_rounding() {
        let c = codec();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 512;
        let w: Vec<u16> = (0..h).map(|_| f32_to_bf16(rng.random_range(-1.0..1.0))).collect();
        let a: Vec<u16> = (0..h).map(|_| f32_to_bf16(rng.random_range(-1.0..1.0))).collect();
        let job = DotJob::new(&Vector::Bf16(w.clone()), Arc::new(Vector::Bf16(a.clone())), 32, &c).unwrap();
        let exact: f64 = w
            .iter()
            .zip(&a)
            .map(|(&x, &y)| bf16_to_f32(x) as f64 * bf16_to_f32(y) as f64)
            .sum();
        let abs_sum: f64 = w
            .iter()
            .zip(&a)
            .map(|(&x, &y)| (bf16_to_f32(x) as f64 * bf16_to_f32(y) as f64).abs())
            .sum();
        let mut raw = job.stored_codewords();
        for s in [0, 3, 9, 15] {
            flip(&mut raw, &job, s, 11 * s + 1);
        }
        for mode in [Bf16Accumulation::Fp32, Bf16Accumulation::Compensated] {
            let opts = EcdpOptions { bf16: mode, ..Default::default() };
            let (v, stats, _) = DotEngine::new(&c, opts).run_raw(&job, &raw, &[job.activations()]).unwrap();
            assert_eq!(stats.deferred_commits, 4);
            let err = (v[0].as_f64() - exact).abs();
            let bound = h as f64 * f32::EPSILON as f64 * abs_sum;
            assert!(err <= bound, "{mode:?}: {err} > {bound}");
            if mode == Bf16Accumulation::Compensated {
                assert!(err <= 4.0 * f32::EPSILON as f64 * abs_sum);
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let c = codec();
        let w = Vector::Int8(vec![0; 10]);
        assert!(DotJob::new(&w, Arc::new(Vector::Int8(vec![0; 5])), 32, &c).is_err());
        assert!(DotJob::new(&w, Arc::new(Vector::Bf16(vec![0; 10])), 32, &c).is_err());
        assert!(DotJob::new(&w, Arc::new(Vector::Int8(vec![0; 10])), 4, &c).is_err());
        assert!(reference_dot(&w, &Vector::Int8(vec![0; 9])).is_err());
    }
}
