//! Oracle and identity checks run by `nvsim validate`.

use std::sync::Arc;

use nvsim_core::ecc::{CheckStatus, CodeConfig, CorrectionOutcome, FaultModel, SecDedCodec, SegmentCodec};
use nvsim_core::erdpe::{ooo_ecdp, DotJob, DotValue, EcdpOptions, Vector};
use nvsim_core::model::{builtin_model, derive_breakdown, WorkloadTrace};
use nvsim_core::nand::{aggregate_bandwidth, stream_with_rate, PrefetchPlan};
use nvsim_core::rng;
use nvsim_core::sched::{rebalance, Bitmap, SchedulerParams};
use nvsim_core::sim::{hardware_preset, peak_throughput, run_inference, SimOptions};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ValidateOptions {
    pub seed: u64,
    /// Replaces the corrector with one that never repairs (harness self-test).
    pub disable_correction: bool,
}

fn codec(opts: &ValidateOptions) -> SecDedCodec {
    let c = SecDedCodec::new(CodeConfig::default()).expect("default code is valid");
    if opts.disable_correction {
        c.with_correction_disabled()
    } else {
        c
    }
}

fn peak_identity() -> Check {
    let want = [("NVLLM", 307.2e9), ("NVLLM-12C", 396.8e9), ("NVLLM-16C", 486.4e9)];
    let mut detail = Vec::new();
    let mut passed = true;
    for (n, w) in want {
        let p = peak_throughput(&hardware_preset(n).expect("preset"));
        passed &= p == w;
        detail.push(format!("{n} {:.1} GOPS", p / 1e9));
    }
    Check { name: "peak throughput", passed, detail: detail.join(", ") }
}

fn bandwidth_identity() -> Check {
    let cfg = hardware_preset("NVLLM").expect("preset").nand;
    let bw = aggregate_bandwidth(&cfg);
    // 32 planes x 16 KiB per 5.12 us: exactly 100 KiB/us
    let kib_per_us = bw / 1024.0 / 1e6;
    Check {
        name: "NAND bandwidth",
        passed: (kib_per_us - 100.0).abs() < 1e-9,
        detail: format!("NVLLM {kib_per_us:.0} GB/s ({kib_per_us} KiB/us = {bw:.4e} B/s)"),
    }
}

fn stream_identity() -> Check {
    let cfg = hardware_preset("NVLLM").expect("preset").nand;
    let code = CodeConfig::default();
    let cw = code.codeword_bytes(cfg.lane_width);
    let plan = PrefetchPlan::sequential(&cfg, cw, cfg.lane_width, 256);
    let r = stream_with_rate(&plan, &cfg, 2.0);
    let measured = r.delivery_rate() * cfg.clock_hz();
    let supply = aggregate_bandwidth(&cfg) * code.code_rate();
    let err = measured / supply - 1.0;
    Check {
        name: "stream delivery",
        passed: err.abs() < 0.01,
        detail: format!("{:.2} GB/s payload vs {:.2} GB/s supply ({:+.3}%)", measured / 1e9, supply / 1e9, 100.0 * err),
    }
}

fn ecc_sweep(opts: &ValidateOptions) -> Check {
    let c = codec(opts);
    let cfg = *c.config();
    let data: Vec<u8> = (0..32u8).map(|i| i.wrapping_mul(73).wrapping_add(11)).collect();
    let cw = c.encode_codeword(&data).expect("encode");
    let mut failures = 0usize;
    let mut singles = 0usize;
    for i in 0..cw.bit_len() {
        let mut bad = cw.clone();
        bad.flip(i);
        singles += 1;
        let ok = c.check(&bad.data, &bad.parity) == CheckStatus::Dirty
            && c.correct(&bad.data, &bad.parity) == (data.clone(), CorrectionOutcome::Corrected);
        failures += usize::from(!ok);
    }
    let k = cfg.data_bits_per_subword;
    let pb = cfg.parity_bits_per_subword;
    let mut doubles = 0usize;
    for s in 0..data.len() * 8 / k {
        let bits: Vec<usize> = (s * k..(s + 1) * k).chain((0..pb).map(|j| data.len() * 8 + s * pb + j)).collect();
        for (x, &a) in bits.iter().enumerate() {
            for &b in &bits[x + 1..] {
                let mut bad = cw.clone();
                bad.flip(a);
                bad.flip(b);
                doubles += 1;
                let flagged = c.check(&bad.data, &bad.parity) == CheckStatus::Dirty
                    && c.correct(&bad.data, &bad.parity).1 == CorrectionOutcome::DetectedUncorrectable;
                failures += usize::from(!flagged);
            }
        }
    }
    Check {
        name: "ECC exhaustive flips",
        passed: failures == 0,
        detail: format!("{singles} single, {doubles} double patterns, {failures} failures"),
    }
}

fn brute_dot(w: &[i8], a: &[i8]) -> i32 {
    w.iter().zip(a).fold(0i32, |s, (&x, &y)| s.wrapping_add(x as i32 * y as i32))
}

/// Largest number of injected flips landing in one subword of any segment.
fn worst_subword_flips(stored: &[u8], raw: &[u8], segment_bytes: usize, cfg: &CodeConfig) -> usize {
    let cw = segment_bytes + cfg.parity_bytes_for(segment_bytes);
    let k = cfg.data_bits_per_subword;
    let pb = cfg.parity_bits_per_subword;
    let mut worst = 0;
    for (s, r) in stored.chunks(cw).zip(raw.chunks(cw)) {
        let mut per = vec![0usize; segment_bytes * 8 / k];
        for bit in 0..cw * 8 {
            if (s[bit / 8] ^ r[bit / 8]) >> (bit % 8) & 1 == 1 {
                let data_bits = segment_bytes * 8;
                let sub = if bit < data_bits { bit / k } else { (bit - data_bits) / pb };
                per[sub] += 1;
            }
        }
        worst = worst.max(per.into_iter().max().unwrap_or(0));
    }
    worst
}

/// Runs are classified by the flips actually injected: with at most one flip
/// per subword the result must be exact; runs with two or more are outside the
/// code's guarantee and only counted.
fn ecdp_equivalence(opts: &ValidateOptions, jobs: usize) -> Check {
    let c = codec(opts);
    let mut r = rng::stream(opts.seed, "validate-ecdp", 0);
    let (mut compared, mut beyond, mut mismatches) = (0usize, 0usize, 0usize);
    for j in 0..jobs {
        let h = [256, 1024, 4096][j % 3];
        let rber = [0.0, 1e-4, 1e-3][(j / 3) % 3];
        let w: Vec<i8> = (0..h).map(|_| r.random()).collect();
        let a: Vec<i8> = (0..h).map(|_| r.random()).collect();
        let want = brute_dot(&w, &a);
        let job = DotJob::new(&Vector::Int8(w), Arc::new(Vector::Int8(a)), 32, &c).expect("job");
        let fault = FaultModel::new(rber, opts.seed).expect("rber");
        let stored = job.stored_codewords();
        let raw = fault.inject(&stored, j as u64);
        if worst_subword_flips(&stored, &raw, job.segment_bytes(), c.config()) > 1 {
            beyond += 1;
            continue;
        }
        compared += 1;
        match ooo_ecdp(&job, &c, &fault, j as u64, EcdpOptions::default()) {
            Ok(res) if res.value == DotValue::Int(want) => {}
            _ => mismatches += 1,
        }
    }
    Check {
        name: "ECDP oracle equivalence",
        passed: mismatches == 0 && compared > 0,
        detail: format!("{compared} correctable runs compared, {mismatches} mismatches; {beyond} runs with >1 flip in a subword excluded"),
    }
}

fn brute_rebalance(delta: f64, p: &SchedulerParams, bits: &[bool]) -> Vec<bool> {
    let c_th = (p.p / p.u) as f64 * p.c_npu;
    let mut out = bits.to_vec();
    if delta > c_th {
        let k = (delta / c_th).ceil() as usize;
        let set: Vec<usize> = (0..out.len()).filter(|&i| out[i]).collect();
        for &i in set.iter().rev().take(k) {
            out[i] = false;
        }
    }
    out
}

fn scheduler_equivalence(opts: &ValidateOptions, n: usize) -> Check {
    let mut r = rng::stream(opts.seed, "validate-sched", 0);
    let mut bad = 0;
    for _ in 0..n {
        let h = r.random_range(1..=64);
        let bits: Vec<bool> = (0..h).map(|_| r.random()).collect();
        let u = r.random_range(1..=4096u64);
        let p = SchedulerParams { c_npu: r.random_range(1.0..2000.0), u, p: u * r.random_range(1..=64u64) };
        let delta = r.random_range(0.0..p.c_th() * 80.0);
        if rebalance(delta, &p, &Bitmap::from_bits(bits.clone())).bits() != brute_rebalance(delta, &p, &bits) {
            bad += 1;
        }
    }
    Check { name: "scheduler brute force", passed: bad == 0, detail: format!("{n} instances, {bad} mismatches") }
}

fn work_conservation() -> Check {
    let m = builtin_model("OPT-1.3B").expect("preset");
    let hw = hardware_preset("NVLLM").expect("preset");
    let c = SecDedCodec::new(CodeConfig::default()).expect("codec");
    let trace = WorkloadTrace::single(16, 16);
    let b = derive_breakdown(&m);
    let want: u64 = (1..=32u64).map(|ctx| b.linear_macs() + b.attention_agg_ops(ctx) / 2).sum();
    match run_inference(&m, &trace, &hw, &c, &FaultModel::none(), &SimOptions::default()) {
        Ok(o) => Check {
            name: "MAC conservation",
            passed: o.metrics.total_macs == want,
            detail: format!("{} MACs simulated, {want} expected", o.metrics.total_macs),
        },
        Err(e) => Check { name: "MAC conservation", passed: false, detail: e.to_string() },
    }
}

pub fn run_all(opts: &ValidateOptions) -> Vec<Check> {
    vec![
        peak_identity(),
        bandwidth_identity(),
        stream_identity(),
        ecc_sweep(opts),
        ecdp_equivalence(opts, 3000),
        scheduler_equivalence(opts, 10_000),
        work_conservation(),
    ]
}

pub fn render(checks: &[Check]) -> String {
    let w = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in checks {
        s.push_str(&format!("{:<4}  {:<w$}  {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    s
}
