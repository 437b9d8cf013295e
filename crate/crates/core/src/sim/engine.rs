use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::events::{run_graph, Dispatch, Executor, Resource, SimEvent, SimEventKind, Task};
use super::functional::FunctionalNand;
use super::metrics::{summarize, Metrics, Phase, TokenRecord};
use super::HwConfig;
use crate::ecc::{FaultModel, SegmentCodec, SegmentErrorRates};
use crate::erdpe::UncorrectablePolicy;
use crate::model::{derive_breakdown, MatrixKind, ModelSpec, WorkloadTrace};
use crate::nand::{analytic_stream_cycles, build_layout, WeightLayout};
use crate::rng;
use crate::sched::{projection_ranges, KvScheduler, RebalanceEvent, SchedulerParams};
use crate::{Error, Result};

/// Bytes per activation element crossing the IO link.
pub const ACTIVATION_BYTES: u64 = 2;
/// Bytes per cached K or V element.
pub const KV_BYTES: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimOptions {
    pub sched_enabled: bool,
    /// NPU cycles per column for the scheduler; 0 derives it from the NPU.
    pub c_npu_cycles: f64,
    pub per_layer_bitmaps: bool,
    /// NPU share of prefill Q/K/V/O columns; `None` uses the peak-throughput ratio.
    pub prefill_npu_share: Option<f64>,
    pub on_uncorrectable: UncorrectablePolicy,
    /// Run the bit-level dot-product engine on real stored weights (small models only).
    pub functional: bool,
    pub record_events: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            sched_enabled: true,
            c_npu_cycles: 0.0,
            per_layer_bitmaps: false,
            prefill_npu_share: None,
            on_uncorrectable: UncorrectablePolicy::Abort,
            functional: false,
            record_events: false,
        }
    }
}

/// Largest model (bytes) accepted in functional mode.
pub const FUNCTIONAL_LIMIT_BYTES: u64 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub tokens: Vec<TokenRecord>,
    pub rebalances: Vec<RebalanceEvent>,
    #[serde(skip)]
    pub events: Vec<SimEvent>,
}

/// ECC outcome of one cluster's share of a NAND stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct ClusterEcc {
    pub dirty: u64,
    pub uncorrectable: u64,
    pub deferred: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct NandCluster {
    pub segments: u64,
    pub ecc: ClusterEcc,
}

#[derive(Debug, Clone)]
pub(crate) enum Work {
    Npu { cycles: u64, dram_bytes: u64 },
    Nand { clusters: Vec<NandCluster> },
    Io { bytes: u64 },
}

fn cycles_to_ps(cycles: u64, mhz: f64) -> u64 {
    (cycles as f64 * 1e6 / mhz).round() as u64
}

fn seconds_to_ps(s: f64) -> u64 {
    (s * 1e12).round() as u64
}

struct PassExec<'a> {
    hw: &'a HwConfig,
    codeword_bytes: usize,
    passes: u64,
    correction_cycles: u64,
    nand_free_ps: u64,
    nand_cycles: u64,
    npu_cycles: u64,
    stall_cycles: u64,
    lane_cycles: u64,
}

impl Executor<Work> for PassExec<'_> {
    fn dispatch(&mut self, _: usize, task: &Task<Work>, start_ps: u64) -> Dispatch {
        match &task.work {
            Work::Io { bytes } => Dispatch {
                duration_ps: seconds_to_ps(self.hw.io.transfer_seconds(*bytes)),
                marks: vec![],
            },
            Work::Npu { cycles, dram_bytes } => {
                let compute = cycles_to_ps(*cycles, self.hw.npu.clock_mhz);
                let dram = seconds_to_ps(self.hw.dram.transfer_seconds(*dram_bytes));
                let d = compute.max(dram);
                self.npu_cycles += (d as f64 * self.hw.npu.clock_mhz / 1e6).round() as u64;
                let marks = if *dram_bytes > 0 { vec![(dram, SimEventKind::DramBurstDone)] } else { vec![] };
                Dispatch { duration_ps: d, marks }
            }
            Work::Nand { clusters } => {
                let cfg = &self.hw.nand;
                let warm_up = cfg.read_latency_cycles() + 1;
                let idle_ps = start_ps.saturating_sub(self.nand_free_ps);
                let idle = (idle_ps as f64 * cfg.clock_mhz / 1e6) as u64;
                let penalty = warm_up.saturating_sub(idle);
                let mut worst = 0u64;
                let mut worst_stall = 0u64;
                let mut any_extra = false;
                for c in clusters {
                    if c.segments == 0 {
                        continue;
                    }
                    let body = analytic_stream_cycles(c.segments, self.passes, self.codeword_bytes, cfg, true);
                    let extra = c.ecc.deferred * self.passes
                        + if c.ecc.dirty > 0 { self.correction_cycles } else { 0 };
                    any_extra |= extra > 0;
                    let total = body + penalty + extra;
                    if total > worst {
                        worst = total;
                        worst_stall = body - c.segments * self.passes + penalty;
                    }
                }
                self.nand_cycles += worst;
                self.stall_cycles += worst_stall;
                self.lane_cycles += worst;
                let d = cycles_to_ps(worst, cfg.clock_mhz);
                self.nand_free_ps = start_ps + d;
                let mut marks = vec![];
                if penalty > 0 && worst > 0 {
                    marks.push((cycles_to_ps(penalty, cfg.clock_mhz), SimEventKind::PageReadDone));
                }
                if any_extra {
                    marks.push((d, SimEventKind::CorrectionDone));
                }
                Dispatch { duration_ps: d, marks }
            }
        }
    }
}

enum Ecc<'a> {
    Off,
    Sampled {
        rates: SegmentErrorRates,
        rng: ChaCha8Rng,
    },
    Functional(Box<FunctionalNand<'a>>),
}

struct Sim<'a> {
    model: &'a ModelSpec,
    hw: &'a HwConfig,
    opts: &'a SimOptions,
    layout: WeightLayout,
    ecc: Ecc<'a>,
    /// Segments per cluster of each layer's FFN stage; the LM head is the last entry.
    ffn_segments: Vec<Vec<u64>>,
}

#[derive(Debug, Default)]
struct PassTotals {
    macs: u64,
    nand_bytes: u64,
    dram_bytes: u64,
    io_bytes: u64,
    corrected: u64,
    deferred: u64,
    uncorrectable: u64,
    dirty: u64,
}

impl<'a> Sim<'a> {
    fn sample(&mut self, segments: u64, token: usize, layer: usize) -> Result<ClusterEcc> {
        let Ecc::Sampled { rates, rng } = &mut self.ecc else {
            return Ok(ClusterEcc::default());
        };
        if segments == 0 || rates.is_zero() {
            return Ok(ClusterEcc::default());
        }
        let dirty = binomial(segments, rates.dirty, rng);
        let unc = binomial(dirty, rates.uncorrectable / rates.dirty, rng);
        let correctable_rate = rates.dirty - rates.uncorrectable;
        let parity_only = if correctable_rate > 0.0 {
            binomial(dirty - unc, rates.parity_only / correctable_rate, rng)
        } else {
            0
        };
        if unc > 0 && self.opts.on_uncorrectable == UncorrectablePolicy::Abort {
            return Err(Error::UncorrectableAbort { token, layer, count: unc });
        }
        Ok(ClusterEcc { dirty, uncorrectable: unc, deferred: dirty - parity_only })
    }

    /// Per-cluster segment counts when `n` of a matrix's columns run in flash,
    /// spread evenly over clusters.
    fn spread(&self, n: usize, inner: usize) -> Vec<u64> {
        let c = self.hw.nand.clusters;
        let spc = inner.div_ceil(self.hw.nand.lane_width) as u64;
        (0..c)
            .map(|i| (n / c + usize::from(i < n % c)) as u64 * spc)
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn nand_task(
        &mut self,
        layer: usize,
        per_cluster: Vec<u64>,
        functional_cols: Vec<(MatrixKind, usize, Vec<Vec<usize>>)>,
        passes: u64,
        token: usize,
        totals: &mut PassTotals,
    ) -> Result<Work> {
        let cw = self.layout.codeword_bytes() as u64;
        let mut clusters = Vec::with_capacity(per_cluster.len());
        let ecc_per_cluster = if let Ecc::Functional(f) = &mut self.ecc {
            f.run_stage(layer, &functional_cols, passes as usize, token)?
        } else {
            Vec::new()
        };
        for (i, &segments) in per_cluster.iter().enumerate() {
            let ecc = match ecc_per_cluster.get(i) {
                Some(e) => *e,
                None => self.sample(segments, token, layer)?,
            };
            totals.nand_bytes += segments * cw;
            totals.dirty += ecc.dirty;
            totals.corrected += ecc.dirty - ecc.uncorrectable;
            totals.uncorrectable += ecc.uncorrectable;
            totals.deferred += ecc.deferred;
            clusters.push(NandCluster { segments, ecc });
        }
        Ok(Work::Nand { clusters })
    }

    /// Column lists per cluster for functional mode.
    fn striped_columns(&self, layer: usize, kind: MatrixKind) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.hw.nand.clusters];
        for e in self.layout.entries_for(layer, kind) {
            out[e.cluster].extend(e.columns.clone());
        }
        out
    }

    fn round_robin(&self, cols: impl Iterator<Item = usize>) -> Vec<Vec<usize>> {
        let c = self.hw.nand.clusters;
        let mut out = vec![Vec::new(); c];
        for (i, col) in cols.enumerate() {
            out[i % c].push(col);
        }
        out
    }

    /// Builds the task graph of one forward pass over `t` tokens that starts
    /// with `ctx0` cached tokens. `npu_cols[layer][m]` is the NPU column count
    /// of projection `m` (Q, K, V, O).
    fn build_pass(
        &mut self,
        t: usize,
        ctx0: usize,
        npu_cols: &[[usize; 4]],
        token: usize,
        totals: &mut PassTotals,
    ) -> Result<Vec<Task<Work>>> {
        let m = self.model;
        let d = m.d_model;
        let kv = m.kv_dim();
        let bpw = m.bytes_per_weight() as u64;
        let npu = self.hw.npu;
        let tt = t as u64;
        let ranges = projection_ranges(m);
        let widths = [d, kv, kv, d];
        let functional = matches!(self.ecc, Ecc::Functional(_));
        let mut tasks: Vec<Task<Work>> = Vec::new();
        let mut last: Vec<usize> = Vec::new();

        let npu_proj = |cols: usize| -> u64 {
            let segs = cols as u64 * d.div_ceil(npu.lane_width) as u64 * tt;
            segs.div_ceil(npu.ecdp as u64)
        };

        for layer in 0..m.num_layers {
            let split = npu_cols[layer.min(npu_cols.len() - 1)];
            for group in [&[0usize, 1, 2][..], &[3usize][..]] {
                let nand_cols: Vec<usize> = group.iter().map(|&i| widths[i] - split[i]).collect();
                let any_nand = nand_cols.iter().any(|&n| n > 0);
                let mut inputs = last.clone();
                if any_nand {
                    let bytes = tt * d as u64 * ACTIVATION_BYTES;
                    totals.io_bytes += bytes;
                    tasks.push(Task { resource: Resource::Io, layer, deps: last.clone(), work: Work::Io { bytes } });
                    inputs = vec![tasks.len() - 1];
                }
                let npu_c: usize = group.iter().map(|&i| split[i]).sum();
                let mut joins = Vec::new();
                if npu_c > 0 {
                    let dram_bytes = npu_c as u64 * d as u64 * bpw;
                    totals.dram_bytes += dram_bytes;
                    totals.macs += npu_c as u64 * d as u64 * tt;
                    tasks.push(Task {
                        resource: Resource::Npu,
                        layer,
                        deps: last.clone(),
                        work: Work::Npu { cycles: npu_proj(npu_c), dram_bytes },
                    });
                    joins.push(tasks.len() - 1);
                }
                if any_nand {
                    let mut per_cluster = vec![0u64; self.hw.nand.clusters];
                    let mut fcols = Vec::new();
                    for (&i, &n) in group.iter().zip(&nand_cols) {
                        for (acc, s) in per_cluster.iter_mut().zip(self.spread(n, d)) {
                            *acc += s;
                        }
                        if functional && n > 0 {
                            let (kind, _) = &ranges[i];
                            // the bitmap clears tail columns first
                            let cols = self.round_robin(widths[i] - n..widths[i]);
                            fcols.push((*kind, d, cols));
                        }
                    }
                    let total_nand: usize = nand_cols.iter().sum();
                    totals.macs += total_nand as u64 * d as u64 * tt;
                    let work = self.nand_task(layer, per_cluster, fcols, tt, token, totals)?;
                    tasks.push(Task { resource: Resource::Nand, layer, deps: inputs, work });
                    let nand_idx = tasks.len() - 1;
                    let bytes = tt * total_nand as u64 * ACTIVATION_BYTES;
                    totals.io_bytes += bytes;
                    tasks.push(Task { resource: Resource::Io, layer, deps: vec![nand_idx], work: Work::Io { bytes } });
                    joins.push(tasks.len() - 1);
                }
                last = joins;

                if group.len() == 3 {
                    // attention aggregation over the cache
                    let ctx_sum: u64 = (0..tt).map(|i| (ctx0 as u64) + i + 1).sum();
                    let macs = 2 * ctx_sum * d as u64;
                    totals.macs += macs;
                    let kv_row = 2 * kv as u64 * KV_BYTES;
                    let dram_bytes = (ctx0 as u64 + tt) * kv_row + tt * kv_row;
                    totals.dram_bytes += dram_bytes;
                    tasks.push(Task {
                        resource: Resource::Npu,
                        layer,
                        deps: last.clone(),
                        work: Work::Npu { cycles: macs.div_ceil(npu.macs_per_cycle()), dram_bytes },
                    });
                    last = vec![tasks.len() - 1];
                }
            }

            if m.d_ffn > 0 {
                let bytes = tt * d as u64 * ACTIVATION_BYTES;
                totals.io_bytes += 2 * bytes;
                tasks.push(Task { resource: Resource::Io, layer, deps: last.clone(), work: Work::Io { bytes } });
                let io_in = tasks.len() - 1;
                let ffn_macs: u64 = m
                    .layer_matrices()
                    .iter()
                    .filter(|x| x.kind.is_ffn())
                    .map(|x| x.weights())
                    .sum();
                totals.macs += ffn_macs * tt;
                let fcols = if functional {
                    m.layer_matrices()
                        .iter()
                        .filter(|x| x.kind.is_ffn())
                        .map(|x| (x.kind, x.inner, self.striped_columns(layer, x.kind)))
                        .collect()
                } else {
                    Vec::new()
                };
                let per_cluster = self.ffn_segments[layer].clone();
                let work = self.nand_task(layer, per_cluster, fcols, tt, token, totals)?;
                tasks.push(Task { resource: Resource::Nand, layer, deps: vec![io_in], work });
                let n = tasks.len() - 1;
                tasks.push(Task { resource: Resource::Io, layer, deps: vec![n], work: Work::Io { bytes } });
                last = vec![tasks.len() - 1];
            }
        }

        // LM head in flash
        let layer = m.num_layers;
        let head = m.lm_head();
        let bytes_in = tt * d as u64 * ACTIVATION_BYTES;
        let bytes_out = tt * head.columns as u64 * ACTIVATION_BYTES;
        totals.io_bytes += bytes_in + bytes_out;
        totals.macs += head.weights() * tt;
        tasks.push(Task { resource: Resource::Io, layer, deps: last, work: Work::Io { bytes: bytes_in } });
        let io_in = tasks.len() - 1;
        let fcols = if functional {
            vec![(MatrixKind::LmHead, head.inner, self.striped_columns(layer, MatrixKind::LmHead))]
        } else {
            Vec::new()
        };
        let per_cluster = self.ffn_segments[layer].clone();
        let work = self.nand_task(layer, per_cluster, fcols, tt, token, totals)?;
        tasks.push(Task { resource: Resource::Nand, layer, deps: vec![io_in], work });
        let n = tasks.len() - 1;
        tasks.push(Task { resource: Resource::Io, layer, deps: vec![n], work: Work::Io { bytes: bytes_out } });
        Ok(tasks)
    }
}

fn binomial(n: u64, p: f64, rng: &mut ChaCha8Rng) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("binomial parameters").sample(rng)
}

pub fn prefill_share(hw: &HwConfig, opts: &SimOptions) -> f64 {
    opts.prefill_npu_share
        .unwrap_or_else(|| hw.npu_peak() / (hw.npu_peak() + hw.nand_peak()))
        .clamp(0.0, 1.0)
}

/// DRAM must hold every layer's Q/K/V/O weights plus the KV cache at the
/// trace's peak context.
fn check_dram(model: &ModelSpec, hw: &HwConfig, peak_ctx: usize) -> Result<()> {
    let per_layer_w: u64 = model
        .layer_matrices()
        .iter()
        .filter(|m| m.kind.is_attention())
        .map(|m| m.weights())
        .sum::<u64>()
        * model.bytes_per_weight() as u64;
    let per_layer_kv = peak_ctx as u64 * 2 * model.kv_dim() as u64 * KV_BYTES;
    let cap = hw.dram.capacity_bytes();
    let mut used = 0u64;
    for layer in 0..model.num_layers {
        used += per_layer_w + per_layer_kv;
        if used > cap {
            return Err(Error::CapacityExceeded {
                layer,
                what: "DRAM (Q/K/V/O weights + KV cache)".into(),
                needed: (per_layer_w + per_layer_kv) * model.num_layers as u64,
                available: cap,
            });
        }
    }
    Ok(())
}

pub fn run_inference(
    model: &ModelSpec,
    trace: &WorkloadTrace,
    hw: &HwConfig,
    codec: &dyn SegmentCodec,
    fault: &FaultModel,
    opts: &SimOptions,
) -> Result<RunOutput> {
    model.validate()?;
    trace.validate()?;
    hw.validate()?;
    fault.validate()?;
    let code = *codec.config();
    let layout = build_layout(model, &hw.nand, &code)?;
    let peak_ctx = trace.kv_len_after(trace.turns.len().saturating_sub(1));
    check_dram(model, hw, peak_ctx)?;

    let mut ffn_segments = vec![vec![0u64; hw.nand.clusters]; model.num_layers + 1];
    for e in layout.entries() {
        if e.matrix.is_ffn() || e.matrix == MatrixKind::LmHead {
            ffn_segments[e.layer][e.cluster] += e.segments();
        }
    }

    let ecc = if opts.functional {
        if model.total_bytes() > FUNCTIONAL_LIMIT_BYTES {
            return Err(Error::config(
                "sim.functional",
                format!("model has {} bytes; functional mode is limited to {FUNCTIONAL_LIMIT_BYTES}", model.total_bytes()),
            ));
        }
        Ecc::Functional(Box::new(FunctionalNand::new(model, &layout, codec, *fault, opts.on_uncorrectable)?))
    } else if fault.rber > 0.0 {
        let rates = SegmentErrorRates::new(fault.rber, &code, layout.segment_bytes());
        Ecc::Sampled { rates, rng: rng::stream(fault.seed, "ecc-stage", 0) }
    } else {
        Ecc::Off
    };

    let mut sim = Sim {
        model,
        hw,
        opts,
        layout,
        ecc,
        ffn_segments,
    };

    let params = SchedulerParams::for_model(model, &hw.nand, &hw.npu, opts.c_npu_cycles);
    let mut sched = KvScheduler::new(model, &hw.npu, params, opts.per_layer_bitmaps);
    sched.reset();
    let share = prefill_share(hw, opts);
    let widths = [model.d_model, model.kv_dim(), model.kv_dim(), model.d_model];
    let prefill_split = [widths.map(|w| (w as f64 * share).round() as usize)];
    let ranges = projection_ranges(model);
    let breakdown = derive_breakdown(model);

    let mut exec = PassExec {
        hw,
        codeword_bytes: sim.layout.codeword_bytes(),
        passes: 1,
        correction_cycles: code.correction_cycles as u64,
        nand_free_ps: 0,
        nand_cycles: 0,
        npu_cycles: 0,
        stall_cycles: 0,
        lane_cycles: 0,
    };
    let mut now = 0u64;
    let mut kv_len = trace.initial_kv_len;
    let mut records = Vec::new();
    let mut rebalances = Vec::new();
    let mut events = Vec::new();
    let mut pass = 0usize;
    let mut token = 0usize;

    let run_pass = |sim: &mut Sim<'_>,
                        exec: &mut PassExec<'_>,
                        phase: Phase,
                        t: usize,
                        ctx0: usize,
                        split: &[[usize; 4]],
                        popcount: usize,
                        pass: usize,
                        token: usize,
                        now: &mut u64,
                        events: &mut Vec<SimEvent>|
     -> Result<TokenRecord> {
        if let Ecc::Sampled { rng, .. } = &mut sim.ecc {
            *rng = rng::stream(fault.seed, "ecc-stage", pass as u64);
        }
        let mut totals = PassTotals::default();
        let tasks = sim.build_pass(t, ctx0, split, token, &mut totals)?;
        exec.passes = t as u64;
        exec.nand_cycles = 0;
        exec.npu_cycles = 0;
        exec.stall_cycles = 0;
        exec.lane_cycles = 0;
        let start = *now;
        let log = if opts.record_events { Some(&mut *events) } else { None };
        let end = run_graph(&tasks, start, pass, exec, log);
        *now = end;
        if opts.record_events {
            events.push(SimEvent {
                timestamp_ps: end,
                kind: SimEventKind::TokenDone,
                pass,
                layer: sim.model.num_layers,
                task: tasks.len(),
            });
        }
        let expected_macs: u64 = (0..t as u64)
            .map(|i| breakdown.linear_macs() + breakdown.attention_agg_ops(ctx0 as u64 + i + 1) / 2)
            .sum();
        debug_assert_eq!(totals.macs, expected_macs);
        Ok(TokenRecord {
            index: pass,
            phase,
            tokens: t,
            kv_len: ctx0 + t,
            start_s: start as f64 * 1e-12,
            seconds: (end - start) as f64 * 1e-12,
            cycles_nand: exec.nand_cycles,
            cycles_npu: exec.npu_cycles,
            stall_fraction: if exec.lane_cycles > 0 { exec.stall_cycles as f64 / exec.lane_cycles as f64 } else { 0.0 },
            bitmap_popcount: popcount,
            dirty_segments: totals.dirty,
            corrected_segments: totals.corrected,
            deferred_commits: totals.deferred,
            uncorrectable_segments: totals.uncorrectable,
            macs: totals.macs,
            nand_bytes: totals.nand_bytes,
            dram_bytes: totals.dram_bytes,
            io_bytes: totals.io_bytes,
        })
    };

    for turn in &trace.turns {
        let rec = run_pass(
            &mut sim, &mut exec, Phase::Prefill, turn.prefill, kv_len, &prefill_split,
            widths.iter().sum(), pass, token, &mut now, &mut events,
        )?;
        kv_len += turn.prefill;
        token += turn.prefill;
        pass += 1;
        records.push(rec);
        for _ in 0..turn.decode {
            let split: Vec<[usize; 4]> = (0..if opts.per_layer_bitmaps { model.num_layers } else { 1 })
                .map(|layer| {
                    if opts.sched_enabled {
                        let b = sched.bitmap(layer);
                        [0, 1, 2, 3].map(|i| b.count_in(ranges[i].1.clone()))
                    } else {
                        widths
                    }
                })
                .collect();
            let popcount = split.iter().map(|s| s.iter().sum::<usize>()).sum::<usize>() / split.len();
            let rec = run_pass(
                &mut sim, &mut exec, Phase::Decode, 1, kv_len, &split, popcount, pass, token, &mut now,
                &mut events,
            )?;
            kv_len += 1;
            if opts.sched_enabled {
                if let Some(ev) = sched.on_token_end(token, kv_len) {
                    rebalances.push(ev);
                }
            }
            token += 1;
            pass += 1;
            records.push(rec);
        }
    }

    let mismatches = match &sim.ecc {
        Ecc::Functional(f) => f.mismatches(),
        _ => 0,
    };
    let metrics = summarize(model, hw, &records, rebalances.len(), mismatches);
    Ok(RunOutput {
        metrics,
        tokens: records,
        rebalances,
        events,
    })
}
