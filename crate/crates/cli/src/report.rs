//! Artifact writers and their loaders.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use nvsim_core::config::Experiment;
use nvsim_core::sim::{Metrics, RunOutput, TokenRecord};
use serde_json::Value;

pub const METRICS_FILE: &str = "metrics.json";
pub const TOKENS_FILE: &str = "tokens.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CONFIG_FILE: &str = "config.json";
pub const EVENTS_FILE: &str = "events.csv";

pub fn metrics_json(m: &Metrics) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("metrics serialize");
    s.push('\n');
    s
}

pub fn tokens_csv(records: &[TokenRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn summary(exp: &Experiment, out: &RunOutput) -> String {
    let m = &out.metrics;
    let mut s = String::new();
    let turns = exp.trace.turns.len();
    let _ = writeln!(s, "model            {}", m.model);
    let _ = writeln!(s, "hardware         {} ({:.1} GOPS peak)", m.hardware, m.peak_ops_per_second / 1e9);
    let _ = writeln!(
        s,
        "trace            {} prefill + {} decode tokens, {turns} turn(s)",
        m.prefill_tokens, m.decode_tokens
    );
    let _ = writeln!(s, "decode tokens/s  {:.3}", m.tokens_per_second);
    let _ = writeln!(s, "s/inference      {:.4}", m.seconds_per_inference);
    let _ = writeln!(
        s,
        "prefill          {:.4} s ({:.1}% of end-to-end)",
        m.prefill_seconds,
        100.0 * m.prefill_fraction
    );
    let _ = writeln!(s, "decode           {:.4} s", m.decode_seconds);
    let e = &m.energy;
    let _ = writeln!(
        s,
        "energy/token     {:.5} J (run totals: nand {:.3e} J, io {:.3e} J, dram {:.3e} J, mac {:.3e} J)",
        m.energy_joules_per_token, e.nand_j, e.io_j, e.dram_j, e.mac_j
    );
    let _ = writeln!(s, "lane stall       {:.4}", m.stall_fraction);
    let _ = writeln!(
        s,
        "ecc segments     dirty {}, corrected {}, deferred {}, uncorrectable {}",
        m.dirty_segments, m.corrected_segments, m.deferred_commits, m.uncorrectable_segments
    );
    let _ = writeln!(s, "rebalances       {}", m.scheduler_events);
    if exp.opts.functional {
        let _ = writeln!(s, "lane mismatches  {}", m.functional_mismatches);
    }
    s
}

pub fn events_csv(out: &RunOutput) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in &out.events {
        w.serialize(e)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn write_run(dir: &Path, exp: &Experiment, effective: &Value, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(METRICS_FILE), metrics_json(&out.metrics))?;
    fs::write(dir.join(TOKENS_FILE), tokens_csv(&out.tokens)?)?;
    fs::write(dir.join(SUMMARY_FILE), summary(exp, out))?;
    let mut cfg = serde_json::to_string_pretty(effective)?;
    cfg.push('\n');
    fs::write(dir.join(CONFIG_FILE), cfg)?;
    if exp.opts.record_events {
        fs::write(dir.join(EVENTS_FILE), events_csv(out)?)?;
    }
    Ok(())
}

pub fn load_metrics(path: &Path) -> Result<Metrics> {
    let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&s)?)
}

pub fn load_tokens(path: &Path) -> Result<Vec<TokenRecord>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Rows of a sweep: axis value column then metric columns.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub status: String,
    pub tokens_per_second: Option<f64>,
    pub seconds_per_inference: Option<f64>,
    pub prefill_fraction: Option<f64>,
    pub energy_joules_per_token: Option<f64>,
    pub stall_fraction: Option<f64>,
    pub corrected_segments: Option<u64>,
    pub uncorrectable_segments: Option<u64>,
}

impl SweepRow {
    pub fn ok(value: String, m: &Metrics) -> Self {
        SweepRow {
            value,
            status: "ok".into(),
            tokens_per_second: Some(m.tokens_per_second),
            seconds_per_inference: Some(m.seconds_per_inference),
            prefill_fraction: Some(m.prefill_fraction),
            energy_joules_per_token: Some(m.energy_joules_per_token),
            stall_fraction: Some(m.stall_fraction),
            corrected_segments: Some(m.corrected_segments),
            uncorrectable_segments: Some(m.uncorrectable_segments),
        }
    }

    pub fn failed(value: String, status: &str) -> Self {
        SweepRow {
            value,
            status: status.into(),
            tokens_per_second: None,
            seconds_per_inference: None,
            prefill_fraction: None,
            energy_joules_per_token: None,
            stall_fraction: None,
            corrected_segments: None,
            uncorrectable_segments: None,
        }
    }
}

const SWEEP_HEADER: [&str; 9] = [
    "value",
    "status",
    "tokens_per_second",
    "seconds_per_inference",
    "prefill_fraction",
    "energy_joules_per_token",
    "stall_fraction",
    "corrected_segments",
    "uncorrectable_segments",
];

pub fn sweep_csv(axis: &str, rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let mut header = SWEEP_HEADER.to_vec();
    header[0] = axis;
    w.write_record(&header)?;
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn load_sweep(path: &Path) -> Result<(String, Vec<SweepRow>)> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut records = r.records();
    let header = records.next().context("empty sweep file")??;
    let axis = header.get(0).unwrap_or_default().to_string();
    let mut rows = Vec::new();
    let names = csv::StringRecord::from(SWEEP_HEADER.to_vec());
    for rec in records {
        rows.push(rec?.deserialize(Some(&names))?);
    }
    Ok((axis, rows))
}
