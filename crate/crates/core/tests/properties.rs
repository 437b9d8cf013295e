use std::sync::Arc;

use nvsim_core::ecc::{CodeConfig, CorrectionOutcome, SecDedCodec, SegmentCodec};
use nvsim_core::erdpe::{reference_dot, DotEngine, DotJob, DotValue, EcdpOptions, Vector};
use nvsim_core::nand::{stream, NandConfig, PrefetchPlan};
use nvsim_core::sched::{rebalance, Bitmap, SchedulerParams};
use proptest::prelude::*;

fn codec() -> SecDedCodec {
    SecDedCodec::new(CodeConfig::default()).unwrap()
}

fn brute_rebalance(delta: f64, c_th: f64, bits: &[bool]) -> Vec<bool> {
    let mut out = bits.to_vec();
    if delta <= c_th {
        return out;
    }
    let mut k = (delta / c_th).ceil() as usize;
    let mut i = out.len();
    while k > 0 && i > 0 {
        i -= 1;
        if out[i] {
            out[i] = false;
            k -= 1;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn ecc_round_trip_with_one_flip_per_subword(
        data in proptest::collection::vec(any::<u8>(), 1..8usize).prop_map(|v| v.repeat(8)),
        flips in proptest::collection::vec(proptest::option::of(0..72usize), 64),
    ) {
        let c = codec();
        let cw = c.encode_codeword(&data).unwrap();
        let subwords = data.len() / 8;
        let mut bad = cw.clone();
        for (s, f) in flips.iter().take(subwords).enumerate() {
            if let Some(b) = f {
                let bit = if *b < 64 { s * 64 + b } else { data.len() * 8 + s * 8 + (b - 64) };
                bad.flip(bit);
            }
        }
        prop_assert_eq!(c.correct(&bad.data, &bad.parity), (data, CorrectionOutcome::Corrected));
    }

    #[test]
    fn scheduler_matches_brute_force(
        bits in proptest::collection::vec(any::<bool>(), 1..=64),
        c_npu in 0.5f64..5000.0,
        u in 1u64..8192,
        ratio in 1u64..64,
        frac in 0.0f64..100.0,
    ) {
        let p = SchedulerParams { c_npu, u, p: u * ratio };
        let c_th = ratio as f64 * c_npu;
        let delta = frac * c_th;
        let got = rebalance(delta, &p, &Bitmap::from_bits(bits.clone()));
        prop_assert_eq!(got.bits(), &brute_rebalance(delta, c_th, &bits)[..]);
        prop_assert!(got.popcount() <= bits.iter().filter(|&&b| b).count());
    }

    #[test]
    fn int8_result_is_independent_of_error_pattern(
        w in proptest::collection::vec(any::<i8>(), 1..600),
        pattern_a in proptest::collection::vec(proptest::option::weighted(0.3, 0..72usize), 76),
        pattern_b in proptest::collection::vec(proptest::option::weighted(0.3, 0..72usize), 76),
    ) {
        let a: Vec<i8> = w.iter().map(|&x| x.wrapping_mul(7).wrapping_add(3)).collect();
        let c = codec();
        let wv = Vector::Int8(w);
        let av = Vector::Int8(a);
        let want = reference_dot(&wv, &av).unwrap();
        let job = DotJob::new(&wv, Arc::new(av.clone()), 32, &c).unwrap();
        let engine = DotEngine::new(&c, EcdpOptions::default());
        let stored = job.stored_codewords();
        for pattern in [&pattern_a, &pattern_b] {
            // at most one flip per subword: segments become dirty in arbitrary
            // positions and commit out of order
            let mut raw = stored.clone();
            for (sub, f) in pattern.iter().enumerate().take(job.segments() * 4) {
                if let Some(b) = f {
                    let (seg, s) = (sub / 4, sub % 4);
                    let bit = if *b < 64 { s * 64 + b } else { 256 + s * 8 + (b - 64) };
                    let at = seg * 36 * 8 + bit;
                    raw[at / 8] ^= 1 << (at % 8);
                }
            }
            let (values, stats, corrupt) = engine.run_raw(&job, &raw, &[&av]).unwrap();
            prop_assert!(!corrupt);
            prop_assert_eq!(stats.segments_uncorrectable, 0);
            prop_assert_eq!(values[0], want);
            prop_assert!(matches!(values[0], DotValue::Int(_)));
        }
    }

    #[test]
    fn stream_delivers_every_planned_byte(pages in 1u64..64, fifo in 2usize..5, clusters in 1usize..6) {
        let cfg = NandConfig { clusters, fifo_pages: fifo, ..NandConfig::default() };
        let plan = PrefetchPlan::sequential(&cfg, 36, 32, pages);
        let r = stream(&plan, &cfg);
        prop_assert_eq!(r.delivered_bytes, plan.payload_bytes());
        prop_assert_eq!(r.arrivals.len() as u64, pages * clusters as u64);
        prop_assert!(r.finish_cycle >= cfg.read_latency_cycles() + 1);
    }
}
