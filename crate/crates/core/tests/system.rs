use nvsim_core::ecc::{CodeConfig, FaultModel, SecDedCodec};
use nvsim_core::erdpe::UncorrectablePolicy;
use nvsim_core::model::{builtin_model, builtin_model_names, derive_breakdown, ModelFamily, ModelSpec, WeightPrecision, WorkloadTrace};
use nvsim_core::sim::{hardware_preset, peak_throughput, run_inference, HwConfig, RunOutput, SimOptions, HARDWARE_PRESETS};
use nvsim_core::Error;

fn codec() -> SecDedCodec {
    SecDedCodec::new(CodeConfig::default()).unwrap()
}

fn run(model: &ModelSpec, trace: &WorkloadTrace, hw: &HwConfig, rber: f64, opts: SimOptions) -> RunOutput {
    run_inference(model, trace, hw, &codec(), &FaultModel::new(rber, 11).unwrap(), &opts).unwrap()
}

fn proceed() -> SimOptions {
    SimOptions { on_uncorrectable: UncorrectablePolicy::Proceed, ..SimOptions::default() }
}

fn toy(precision: WeightPrecision) -> ModelSpec {
    ModelSpec {
        name: "toy".into(),
        family: ModelFamily::Llama,
        num_layers: 2,
        d_model: 128,
        d_ffn: 256,
        num_heads: 4,
        head_dim: 32,
        num_kv_heads: Some(2),
        vocab_size: 256,
        max_positions: 0,
        weight_precision: precision,
    }
}

#[test]
fn macs_are_conserved_under_any_schedule() {
    let trace = WorkloadTrace { turns: vec![nvsim_core::model::Turn { prefill: 8, decode: 40 }], initial_kv_len: 300 };
    for name in ["OPT-1.3B", "LLaMA3-8B"] {
        let m = builtin_model(name).unwrap();
        let b = derive_breakdown(&m);
        let want: u64 = (301..=348u64).map(|ctx| b.linear_macs() + b.attention_agg_ops(ctx) / 2).sum();
        for hw in HARDWARE_PRESETS {
            let hw = hardware_preset(hw).unwrap();
            for (rber, sched) in [(0.0, true), (0.0, false), (1e-3, true)] {
                // a small C_npu forces rebalancing within the trace
                let opts = SimOptions { sched_enabled: sched, c_npu_cycles: 2.0, ..proceed() };
                let o = run(&m, &trace, &hw, rber, opts);
                assert_eq!(o.metrics.total_macs, want, "{name} {} rber {rber} sched {sched}", hw.name);
                if sched {
                    assert!(o.metrics.scheduler_events > 0);
                }
            }
        }
    }
}

#[test]
fn throughput_never_exceeds_bounds() {
    for hwn in HARDWARE_PRESETS {
        let hw = hardware_preset(hwn).unwrap();
        for name in builtin_model_names() {
            let m = builtin_model(name).unwrap();
            let b = derive_breakdown(&m);
            let o = run(&m, &WorkloadTrace::single(16, 48), &hw, 0.0, SimOptions::default());
            let ffn_bw_bound = hw.nand_bandwidth() / b.ffn_bytes as f64;
            let compute_bound = peak_throughput(&hw) / b.per_token_ops(17) as f64;
            let tps = o.metrics.tokens_per_second;
            assert!(tps <= ffn_bw_bound.min(compute_bound), "{name} on {hwn}: {tps}");
        }
    }
}

#[test]
fn opt30b_decode_within_ffn_bandwidth_bound() {
    let m = builtin_model("OPT-30B").unwrap();
    let hw = hardware_preset("NVLLM").unwrap();
    let trace = WorkloadTrace { turns: vec![nvsim_core::model::Turn { prefill: 1, decode: 8 }], initial_kv_len: 63 };
    let o = run(&m, &trace, &hw, 0.0, SimOptions::default());
    let bound = 1.024e11 / derive_breakdown(&m).ffn_bytes as f64;
    assert!(o.metrics.tokens_per_second <= bound);
    assert!(o.metrics.tokens_per_second > 0.5 * bound, "{} vs {bound}", o.metrics.tokens_per_second);
}

#[test]
fn decode_byte_audit_on_toy() {
    let m = toy(WeightPrecision::Int8);
    let hw = hardware_preset("NVLLM").unwrap();
    let o = run(&m, &WorkloadTrace::single(3, 2), &hw, 0.0, SimOptions::default());
    let rec = &o.tokens[1];
    assert_eq!((rec.tokens, rec.kv_len), (1, 4));
    // FFN per layer: gate + up 256 cols x 4 segs, down 128 cols x 8 segs; LM head 256 x 4
    let segs = 2 * (2 * 256 * 4 + 128 * 8) + 256 * 4;
    assert_eq!(rec.nand_bytes, segs * 36);
    // all Q/K/V/O on the NPU: q + o 128 x 128, k + v 64 x 128; KV rows 2 x 64 x 2 B
    let qkvo = 2 * 128 * 128 + 2 * 64 * 128;
    let row = 2 * 64 * 2;
    let kv = 4 * row + row;
    assert_eq!(rec.dram_bytes, 2 * (qkvo + kv));
    // activations in/out of each FFN stage, then LM head in + logits out
    assert_eq!(rec.io_bytes, 2 * (2 * 128 * 2) + 128 * 2 + 256 * 2);
}

#[test]
fn identical_seed_gives_identical_output() {
    let m = builtin_model("OPT-2.7B").unwrap();
    let hw = hardware_preset("NVLLM-12C").unwrap();
    let trace = WorkloadTrace::single(32, 64);
    let opts = SimOptions { record_events: true, ..proceed() };
    let a = run(&m, &trace, &hw, 1e-3, opts);
    let b = run(&m, &trace, &hw, 1e-3, opts);
    assert_eq!(a, b);
    assert_eq!(a.events, b.events);
    assert!(a.events.windows(2).all(|w| w[0].timestamp_ps <= w[1].timestamp_ps));
    let c = run_inference(&m, &trace, &hw, &codec(), &FaultModel::new(1e-3, 12).unwrap(), &opts).unwrap();
    assert_ne!(a.metrics.dirty_segments, c.metrics.dirty_segments);
}

#[test]
fn scheduler_never_hurts_long_decode() {
    let b = |m: &str, hw: &str, sched: bool| {
        let trace = WorkloadTrace { turns: vec![nvsim_core::model::Turn { prefill: 1, decode: 256 }], initial_kv_len: 3839 };
        run(&builtin_model(m).unwrap(), &trace, &hardware_preset(hw).unwrap(), 0.0, SimOptions { sched_enabled: sched, ..SimOptions::default() })
    };
    for hw in HARDWARE_PRESETS {
        for m in ["OPT-6.7B", "LLaMA2-7B"] {
            let on = b(m, hw, true).metrics.tokens_per_second;
            let off = b(m, hw, false).metrics.tokens_per_second;
            assert!(on >= off, "{m} on {hw}: {on} < {off}");
        }
    }
}

#[test]
fn io_energy_is_negligible_for_large_models() {
    for hw in HARDWARE_PRESETS {
        let hw = hardware_preset(hw).unwrap();
        for name in ["OPT-6.7B", "OPT-13B", "OPT-30B", "LLaMA2-7B", "LLaMA2-13B", "LLaMA3-8B"] {
            let o = run(&builtin_model(name).unwrap(), &WorkloadTrace::single(64, 64), &hw, 0.0, SimOptions::default());
            let e = &o.metrics.energy;
            assert!(e.io_j < 0.02 * e.data_movement_j, "{name} on {}: {} of {}", hw.name, e.io_j, e.data_movement_j);
        }
    }
}

#[test]
fn correction_work_grows_with_rber() {
    let m = builtin_model("OPT-1.3B").unwrap();
    let hw = hardware_preset("NVLLM").unwrap();
    let trace = WorkloadTrace::single(4, 8);
    let r: Vec<RunOutput> = [0.0, 1e-4, 1e-3].iter().map(|&x| run(&m, &trace, &hw, x, proceed())).collect();
    assert_eq!(r[0].metrics.dirty_segments, 0);
    assert!(r[0].metrics.dirty_segments < r[1].metrics.dirty_segments);
    assert!(r[1].metrics.dirty_segments < r[2].metrics.dirty_segments);
    assert!(r[0].metrics.seconds_per_inference <= r[1].metrics.seconds_per_inference);
    assert!(r[1].metrics.seconds_per_inference <= r[2].metrics.seconds_per_inference);
    // expected dirty fraction 1 - (1 - p)^288 per 36-byte codeword
    let segs = r[2].tokens.iter().map(|t| t.nand_bytes / 36).sum::<u64>() as f64;
    let p = 1.0 - (1.0f64 - 1e-3).powi(288);
    let got = r[2].metrics.dirty_segments as f64 / segs;
    assert!((got / p - 1.0).abs() < 0.01, "{got} vs {p}");
}

#[test]
fn abort_policy_reports_uncorrectable() {
    let m = builtin_model("OPT-1.3B").unwrap();
    let hw = hardware_preset("NVLLM").unwrap();
    let e = run_inference(&m, &WorkloadTrace::single(4, 4), &hw, &codec(), &FaultModel::new(1e-3, 1).unwrap(), &SimOptions::default());
    assert!(matches!(e, Err(Error::UncorrectableAbort { .. })), "{e:?}");
}

#[test]
fn functional_lanes_agree_with_reference() {
    for precision in [WeightPrecision::Int8, WeightPrecision::Bf16] {
        let m = toy(precision);
        let hw = hardware_preset("NVLLM").unwrap();
        let opts = SimOptions { functional: true, ..proceed() };
        let o = run(&m, &WorkloadTrace::single(2, 2), &hw, 1e-4, opts);
        assert!(o.metrics.dirty_segments > 0, "{precision:?}");
        assert_eq!(o.metrics.functional_mismatches, 0, "{precision:?}");
        let clean = run(&m, &WorkloadTrace::single(2, 2), &hw, 0.0, opts);
        assert_eq!(clean.metrics.dirty_segments, 0);
        assert_eq!(clean.metrics.total_macs, o.metrics.total_macs);
    }
}

#[test]
fn functional_mode_rejects_large_models() {
    let m = builtin_model("OPT-1.3B").unwrap();
    let hw = hardware_preset("NVLLM").unwrap();
    let opts = SimOptions { functional: true, ..SimOptions::default() };
    let e = run_inference(&m, &WorkloadTrace::single(1, 1), &hw, &codec(), &FaultModel::none(), &opts);
    assert!(matches!(e, Err(Error::Config { .. })), "{e:?}");
}

#[test]
fn dram_capacity_is_enforced() {
    let m = builtin_model("OPT-30B").unwrap();
    let mut hw = hardware_preset("NVLLM").unwrap();
    hw.dram.capacity_gib = 1.0;
    let e = run_inference(&m, &WorkloadTrace::single(8, 8), &hw, &codec(), &FaultModel::none(), &SimOptions::default());
    assert!(matches!(e, Err(Error::CapacityExceeded { .. })), "{e:?}");
}
