//! `nvsim` command-line front end.

pub mod report;
pub mod validate;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nvsim_core::config::{self, describe_keys, Experiment, ExperimentConfig};
use nvsim_core::ecc::SecDedCodec;
use nvsim_core::model::derive_breakdown;
use nvsim_core::sim::{
    baseline_run, roofline_point, run_inference, BaselineKind, BaselineParams, RooflineMachine, RunOutput,
};
use nvsim_core::Error;
use rayon::prelude::*;
use serde_json::Value;

use report::SweepRow;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_UNCORRECTABLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "nvsim", version, about = "Simulator for NAND-centric LLM inference")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct GlobalArgs {
    /// Experiment config (JSON); defaults apply when omitted
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides fault.seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Artifact directory; overrides output.dir
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Parallel runs for sweeps
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Overrides hardware.preset
    #[arg(long, global = true)]
    pub preset: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write metrics.json, tokens.csv and summary.txt
    #[command(after_long_help = keys_help())]
    Simulate,
    /// Run the experiment once per value of a config key
    Sweep {
        /// Dotted config key, e.g. fault.rber or hardware.preset
        #[arg(long)]
        axis: String,
        /// Comma-separated values; each is parsed as JSON, else taken as a string
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
    },
    /// Run the oracle and identity checks
    Validate {
        #[arg(long, hide = true)]
        disable_correction: bool,
    },
    /// Analytic baselines next to the simulated design
    Baseline,
    /// Arithmetic intensity and bound per phase
    Roofline,
}

fn keys_help() -> String {
    format!("Config keys (key, default, meaning):\n{}", describe_keys())
}

/// Raw document after CLI overrides; the source for both resolution and sweeps.
pub fn load_document(g: &GlobalArgs) -> Result<(Value, Option<PathBuf>)> {
    let (mut doc, base) = match &g.config {
        Some(p) => {
            let s = std::fs::read_to_string(p)
                .map_err(|e| Error::config("", format!("{}: {e}", p.display())))?;
            let v: Value = serde_json::from_str(&s).map_err(|e| Error::config("", format!("malformed JSON: {e}")))?;
            (v, p.parent().map(Path::to_path_buf))
        }
        None => (ExperimentConfig::default().to_value(), None),
    };
    if let Some(s) = g.seed {
        config::set_path(&mut doc, "fault.seed", s.into())?;
    }
    if let Some(p) = &g.preset {
        config::set_path(&mut doc, "hardware.preset", p.clone().into())?;
    }
    if let Some(o) = &g.out {
        config::set_path(&mut doc, "output.dir", o.to_string_lossy().into_owned().into())?;
    }
    Ok((doc, base))
}

pub struct Prepared {
    pub config: ExperimentConfig,
    pub experiment: Experiment,
}

pub fn prepare(doc: Value, base: Option<&Path>) -> Result<Prepared> {
    let config = ExperimentConfig::from_value(doc)?;
    let experiment = config.resolve(base)?;
    Ok(Prepared { config, experiment })
}

pub fn execute(e: &Experiment) -> Result<RunOutput> {
    let codec = SecDedCodec::new(e.code)?;
    Ok(run_inference(&e.model, &e.trace, &e.hw, &codec, &e.fault, &e.opts)?)
}

fn cmd_simulate(g: &GlobalArgs) -> Result<i32> {
    let (doc, base) = load_document(g)?;
    let p = prepare(doc, base.as_deref())?;
    let out = execute(&p.experiment)?;
    let dir = &p.config.output.dir;
    report::write_run(dir, &p.experiment, &p.config.effective_document()?, &out)?;
    print!("{}", report::summary(&p.experiment, &out));
    println!("artifacts        {}", dir.display());
    Ok(0)
}

fn parse_value(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string()))
}

fn status_of(e: &anyhow::Error) -> &'static str {
    match e.downcast_ref::<Error>() {
        Some(Error::UncorrectableAbort { .. }) => "uncorrectable-abort",
        Some(Error::CapacityExceeded { .. }) => "capacity-exceeded",
        _ => "error",
    }
}

pub fn run_sweep(doc: &Value, base: Option<&Path>, axis: &str, values: &[String], jobs: usize) -> Result<Vec<SweepRow>> {
    let axis = if axis == "hardware" { "hardware.preset" } else { axis };
    if !config::CONFIG_KEYS.iter().any(|(k, _)| *k == axis) {
        return Err(Error::config(axis, "unknown sweep axis").into());
    }
    // every row must at least parse and validate before any run starts
    let prepared: Vec<Prepared> = values
        .iter()
        .map(|v| {
            let mut d = doc.clone();
            config::set_path(&mut d, axis, parse_value(v))?;
            prepare(d, base)
        })
        .collect::<Result<_>>()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    Ok(pool.install(|| {
        prepared
            .par_iter()
            .zip(values)
            .map(|(p, v)| match execute(&p.experiment) {
                Ok(o) => SweepRow::ok(v.clone(), &o.metrics),
                Err(e) => SweepRow::failed(v.clone(), status_of(&e)),
            })
            .collect()
    }))
}

fn cmd_sweep(g: &GlobalArgs, axis: &str, values: &[String]) -> Result<i32> {
    let (doc, base) = load_document(g)?;
    let rows = run_sweep(&doc, base.as_deref(), axis, values, g.jobs)?;
    let csv = report::sweep_csv(axis, &rows)?;
    let dir = ExperimentConfig::from_value(doc)?.output.dir;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(0)
}

fn cmd_validate(g: &GlobalArgs, disable_correction: bool) -> Result<i32> {
    let opts = validate::ValidateOptions { seed: g.seed.unwrap_or(0), disable_correction };
    let checks = validate::run_all(&opts);
    print!("{}", validate::render(&checks));
    Ok(if checks.iter().all(|c| c.passed) { 0 } else { EXIT_FAILURE })
}

fn cmd_baseline(g: &GlobalArgs) -> Result<i32> {
    let (doc, base) = load_document(g)?;
    let p = prepare(doc, base.as_deref())?;
    let e = &p.experiment;
    let params = BaselineParams::default();
    let ours = execute(e)?.metrics;
    println!("{} on trace of {} prefill + {} decode tokens", e.model.name, ours.prefill_tokens, ours.decode_tokens);
    println!("{:<16} {:>12} {:>12} {:>10} {:>10}", "design", "tokens/s", "s/inf", "prefill%", "speedup");
    println!(
        "{:<16} {:>12.3} {:>12.4} {:>10.1} {:>10}",
        e.hw.name,
        ours.tokens_per_second,
        ours.seconds_per_inference,
        100.0 * ours.prefill_fraction,
        "-"
    );
    for k in BaselineKind::ALL {
        let r = baseline_run(k, &e.model, &e.trace, &params);
        println!(
            "{:<16} {:>12.3} {:>12.4} {:>10.1} {:>9.2}x",
            k.name(),
            r.tokens_per_second,
            r.seconds_per_inference,
            100.0 * r.prefill_fraction,
            ours.tokens_per_second / r.tokens_per_second
        );
    }
    Ok(0)
}

fn cmd_roofline(g: &GlobalArgs) -> Result<i32> {
    let (doc, base) = load_document(g)?;
    let p = prepare(doc, base.as_deref())?;
    let e = &p.experiment;
    let machines = [RooflineMachine::from_hw(&e.hw), RooflineMachine::a800()];
    let b = derive_breakdown(&e.model);
    println!("{}: {:.2} GOPs per token at context 1", e.model.name, b.per_token_ops(1) as f64 / 1e9);
    println!("{:<10} {:<16} {:>12} {:>13} {:>14}", "machine", "phase", "ops/byte", "bound", "attainable");
    for m in &machines {
        for (label, ctx, tokens) in [
            ("decode@128", 128, 1),
            ("decode@2048", 2048, 1),
            ("prefill x128", 0, 128),
            ("prefill x1024", 0, 1024),
        ] {
            let pt = roofline_point(&e.model, ctx, tokens, m);
            println!(
                "{:<10} {:<16} {:>12.3} {:>13} {:>9.1} GOPS",
                m.name,
                label,
                pt.intensity,
                format!("{:?}", pt.bound),
                pt.attainable_ops / 1e9
            );
        }
    }
    Ok(0)
}

pub fn exit_code(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<Error>() {
        Some(Error::CapacityExceeded { .. }) => EXIT_CAPACITY,
        Some(Error::UncorrectableAbort { .. } | Error::UncorrectableSegment { .. }) => EXIT_UNCORRECTABLE,
        Some(
            Error::Config { .. }
            | Error::UnknownModel { .. }
            | Error::UnknownHardware { .. }
            | Error::InvalidModel(_)
            | Error::InvalidCode(_)
            | Error::UnknownBaseline(_),
        ) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    let g = &cli.global;
    if g.jobs == 0 {
        bail!(Error::config("--jobs", "must be >= 1"));
    }
    match &cli.command {
        Command::Simulate => cmd_simulate(g),
        Command::Sweep { axis, values } => {
            let values: Vec<String> = values.iter().filter(|v| !v.trim().is_empty()).cloned().collect();
            cmd_sweep(g, axis, &values)
        }
        Command::Validate { disable_correction } => cmd_validate(g, *disable_correction),
        Command::Baseline => cmd_baseline(g),
        Command::Roofline => cmd_roofline(g),
    }
}

/// Parses `args`, runs, and reports errors on stderr; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
