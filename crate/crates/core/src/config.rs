//! Versioned JSON experiment schema.
//!
//! A document names a model and a hardware preset and overrides any subset of
//! the remaining keys. Hardware sections are deep-merged over the preset, so
//! `{"hardware": {"preset": "NVLLM-16C", "nand": {"fifo_pages": 4}}}` keeps every
//! other 16C parameter.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::ecc::{CodeConfig, FaultModel};
use crate::erdpe::UncorrectablePolicy;
use crate::model::{builtin_model, ModelSpec, WorkloadTrace};
use crate::sim::{hardware_preset, HwConfig, SimOptions};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ModelSource {
    /// Preset name, or a path to a JSON model descriptor.
    Name(String),
    Inline(ModelSpec),
}

impl<'de> Deserialize<'de> for ModelSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match Value::deserialize(d)? {
            Value::String(s) => Ok(ModelSource::Name(s)),
            v @ Value::Object(_) => serde_json::from_value(v).map(ModelSource::Inline).map_err(D::Error::custom),
            other => Err(D::Error::custom(format!("expected a preset name, path or model object, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardwareSection {
    pub preset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nand_ecdp: Option<usize>,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub nand: Map<String, Value>,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub npu: Map<String, Value>,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub dram: Map<String, Value>,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub io: Map<String, Value>,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub energy: Map<String, Value>,
}

impl Default for HardwareSection {
    fn default() -> Self {
        HardwareSection {
            preset: "NVLLM".into(),
            nand_ecdp: None,
            nand: Map::new(),
            npu: Map::new(),
            dram: Map::new(),
            io: Map::new(),
            energy: Map::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultSection {
    pub rber: f64,
    /// Top-level seed; every random stream in a run derives from it.
    pub seed: u64,
    pub on_uncorrectable: UncorrectablePolicy,
}

impl Default for FaultSection {
    fn default() -> Self {
        FaultSection { rber: 0.0, seed: 0, on_uncorrectable: UncorrectablePolicy::Abort }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedSection {
    pub enabled: bool,
    pub c_npu_cycles: f64,
    pub per_layer_bitmaps: bool,
}

impl Default for SchedSection {
    fn default() -> Self {
        SchedSection { enabled: true, c_npu_cycles: 0.0, per_layer_bitmaps: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub prefill_npu_share: Option<f64>,
    pub functional: bool,
    pub record_events: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("nvsim-out") }
    }
}

fn default_model() -> ModelSource {
    ModelSource::Name("OPT-1.3B".into())
}

fn default_trace() -> WorkloadTrace {
    WorkloadTrace::single(128, 128)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_model")]
    pub model: ModelSource,
    #[serde(default)]
    pub hardware: HardwareSection,
    #[serde(default)]
    pub ecc: CodeConfig,
    #[serde(default)]
    pub fault: FaultSection,
    #[serde(default)]
    pub sched: SchedSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default = "default_trace")]
    pub trace: WorkloadTrace,
    #[serde(default)]
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            model: default_model(),
            hardware: HardwareSection::default(),
            ecc: CodeConfig::default(),
            fault: FaultSection::default(),
            sched: SchedSection::default(),
            sim: SimSection::default(),
            trace: default_trace(),
            output: OutputSection::default(),
        }
    }
}

/// Everything a run needs, fully validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub model: ModelSpec,
    pub hw: HwConfig,
    pub code: CodeConfig,
    pub fault: FaultModel,
    pub trace: WorkloadTrace,
    pub opts: SimOptions,
}

fn path_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> Error {
    let path = e.path().to_string();
    let path = if path == "." { String::new() } else { path };
    Error::config(path, e.inner().to_string())
}

fn prefix(e: Error, p: &str) -> Error {
    match e {
        Error::Config { path, message } if !path.starts_with(p) => Error::config(format!("{p}.{path}"), message),
        other => other,
    }
}

fn merge_section<T: Serialize + for<'de> Deserialize<'de>>(base: &T, over: &Map<String, Value>, path: &str) -> Result<T> {
    let mut v = serde_json::to_value(base).expect("hardware sections serialize");
    merge(&mut v, &Value::Object(over.clone()));
    serde_path_to_error::deserialize(v).map_err(|e| prefix(path_error(e), path))
}

/// Recursively overlays `over` onto `base`.
pub fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o.clone(),
    }
}

impl ExperimentConfig {
    pub fn from_value(v: Value) -> Result<Self> {
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(v).map_err(path_error)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", cfg.schema_version),
            ));
        }
        Ok(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s).map_err(|e| Error::config("", format!("malformed JSON: {e}")))?;
        Self::from_value(v)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::config("", format!("{}: {e}", path.display())))?;
        Self::from_json_str(&s)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn resolve_hardware(&self) -> Result<HwConfig> {
        let h = &self.hardware;
        let mut hw = hardware_preset(&h.preset).map_err(|e| match e {
            Error::UnknownHardware { .. } => Error::config("hardware.preset", e.to_string()),
            other => other,
        })?;
        if let Some(n) = h.nand_ecdp {
            hw.nand_ecdp = n;
        }
        hw.nand = merge_section(&hw.nand, &h.nand, "hardware.nand")?;
        if hw.nand.clusters != hardware_preset(&h.preset)?.nand.clusters && h.nand_ecdp.is_none() {
            hw.nand_ecdp = hw.nand.clusters;
        }
        hw.npu = merge_section(&hw.npu, &h.npu, "hardware.npu")?;
        hw.dram = merge_section(&hw.dram, &h.dram, "hardware.dram")?;
        hw.io = merge_section(&hw.io, &h.io, "hardware.io")?;
        hw.energy = merge_section(&hw.energy, &h.energy, "hardware.energy")?;
        hw.validate().map_err(|e| prefix(e, "hardware"))?;
        Ok(hw)
    }

    /// Model descriptor paths are taken relative to `base_dir`.
    pub fn resolve_model(&self, base_dir: Option<&Path>) -> Result<ModelSpec> {
        let m = match &self.model {
            ModelSource::Inline(m) => m.clone(),
            ModelSource::Name(n) => match builtin_model(n) {
                Ok(m) => m,
                Err(e) => {
                    let p = base_dir.map_or_else(|| PathBuf::from(n), |b| b.join(n));
                    if p.is_file() {
                        ModelSpec::from_json_file(&p)?
                    } else {
                        return Err(Error::config("model", e.to_string()));
                    }
                }
            },
        };
        m.validate().map_err(|e| Error::config("model", e.to_string()))?;
        Ok(m)
    }

    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<Experiment> {
        let model = self.resolve_model(base_dir)?;
        let hw = self.resolve_hardware()?;
        self.ecc.validate()?;
        let fault = FaultModel::new(self.fault.rber, self.fault.seed)?;
        self.trace.validate()?;
        if self.trace.turns.is_empty() {
            return Err(Error::config("trace.turns", "at least one turn is required"));
        }
        if let Some(s) = self.sim.prefill_npu_share {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::config("sim.prefill_npu_share", format!("must be in [0, 1], got {s}")));
            }
        }
        if self.sched.c_npu_cycles < 0.0 || self.sched.c_npu_cycles.is_nan() {
            return Err(Error::config("sched.c_npu_cycles", "must be >= 0 (0 derives it from the NPU)"));
        }
        Ok(Experiment {
            model,
            hw,
            code: self.ecc,
            fault,
            trace: self.trace.clone(),
            opts: SimOptions {
                sched_enabled: self.sched.enabled,
                c_npu_cycles: self.sched.c_npu_cycles,
                per_layer_bitmaps: self.sched.per_layer_bitmaps,
                prefill_npu_share: self.sim.prefill_npu_share,
                on_uncorrectable: self.fault.on_uncorrectable,
                functional: self.sim.functional,
                record_events: self.sim.record_events,
            },
        })
    }

    /// The document with every hardware key spelled out from the resolved preset.
    pub fn effective_document(&self) -> Result<Value> {
        let hw = self.resolve_hardware()?;
        let mut v = self.to_value();
        v["hardware"] = serde_json::json!({
            "preset": self.hardware.preset,
            "nand_ecdp": hw.nand_ecdp,
            "nand": hw.nand,
            "npu": hw.npu,
            "dram": hw.dram,
            "io": hw.io,
            "energy": hw.energy,
        });
        Ok(v)
    }
}

/// Dotted leaf paths of a document; arrays and nulls are leaves.
pub fn flatten(v: &Value) -> BTreeMap<String, Value> {
    fn go(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
        match v {
            Value::Object(m) if !m.is_empty() => {
                for (k, x) in m {
                    let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    go(&p, x, out);
                }
            }
            _ => {
                out.insert(prefix.to_string(), v.clone());
            }
        }
    }
    let mut out = BTreeMap::new();
    go("", v, &mut out);
    out
}

/// Sets `path` in a raw document, creating intermediate objects.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    if !CONFIG_KEYS.iter().any(|(k, _)| *k == path) {
        return Err(Error::config(path, "unknown config key"));
    }
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let obj = match cur {
            Value::Object(m) => m,
            _ => return Err(Error::config(parts[..i].join("."), "not an object")),
        };
        if i + 1 == parts.len() {
            obj.insert(p.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split yields at least one part")
}

/// Every config key with a one-line description. `--help` renders this with
/// the defaults taken from the schema.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("schema_version", "config schema version (required)"),
    ("model", "preset name, path to a model JSON, or an inline model object"),
    ("hardware.preset", "NVLLM, NVLLM-12C or NVLLM-16C; the keys below override it"),
    ("hardware.nand_ecdp", "in-flash dot-product lanes (one per cluster)"),
    ("hardware.nand.clusters", "plane clusters"),
    ("hardware.nand.planes_per_cluster", "planes per cluster"),
    ("hardware.nand.page_kib", "page size, KiB"),
    ("hardware.nand.read_latency_us", "page read latency, us"),
    ("hardware.nand.fifo_pages", "page FIFO depth per cluster"),
    ("hardware.nand.clock_mhz", "NAND-CMOS clock, MHz"),
    ("hardware.nand.lane_width", "weights per segment"),
    ("hardware.nand.plane_capacity_gib", "plane capacity, GiB"),
    ("hardware.nand.cache_read", "planes may start the next read while the page buffer waits"),
    ("hardware.npu.ecdp", "NPU dot-product lanes"),
    ("hardware.npu.clock_mhz", "NPU clock, MHz"),
    ("hardware.npu.lane_width", "NPU lane width"),
    ("hardware.dram.channels", "DRAM channels"),
    ("hardware.dram.mtps", "transfer rate, MT/s"),
    ("hardware.dram.bus_bytes", "bus width per channel, bytes"),
    ("hardware.dram.latency_ns", "access latency, ns"),
    ("hardware.dram.capacity_gib", "capacity, GiB"),
    ("hardware.io.bandwidth_gbps", "NAND die <-> NPU link bandwidth, GB/s"),
    ("hardware.io.latency_ns", "link latency, ns"),
    ("hardware.energy.nand_pj_per_byte", "NAND array -> NAND-CMOS, pJ/B"),
    ("hardware.energy.io_pj_per_byte", "NAND die <-> NPU, pJ/B"),
    ("hardware.energy.dram_pj_per_byte", "DRAM <-> NPU, pJ/B"),
    ("hardware.energy.mac_pj", "per MAC, pJ"),
    ("hardware.energy.flash_channel_pj_per_byte", "SSD flash channel, pJ/B (baseline only)"),
    ("hardware.energy.flash_channel_share", "fraction of baseline flash bytes crossing the channel"),
    ("ecc.data_bits", "data bits per SEC-DED subword"),
    ("ecc.parity_bits", "parity bits per subword"),
    ("ecc.correction_cycles", "corrector cycles per dirty segment"),
    ("fault.rber", "raw bit error rate per read bit"),
    ("fault.seed", "top-level seed"),
    ("fault.on_uncorrectable", "abort or proceed"),
    ("sched.enabled", "KV-aware Q/K/V/O rebalancing"),
    ("sched.c_npu_cycles", "NPU cycles per column; 0 derives it"),
    ("sched.per_layer_bitmaps", "one bitmap per layer instead of one shared"),
    ("sim.prefill_npu_share", "NPU share of prefill Q/K/V/O columns; null uses the peak ratio"),
    ("sim.functional", "bit-level lanes over stored weights (models <= 64 MiB)"),
    ("sim.record_events", "keep the event log"),
    ("trace.turns", "list of {prefill, decode} token counts"),
    ("trace.initial_kv_len", "KV entries present before the first turn"),
    ("output.dir", "artifact directory"),
];

/// `key  default  description` lines for help output.
pub fn describe_keys() -> String {
    let defaults = flatten(&ExperimentConfig::default().effective_document().expect("defaults resolve"));
    let w = CONFIG_KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (k, d) in CONFIG_KEYS {
        let def = defaults.get(*k).map_or_else(|| "-".to_string(), Value::to_string);
        s.push_str(&format!("  {k:<w$}  {def:<14} {d}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn key_table_matches_schema() {
        let doc = ExperimentConfig::default().effective_document().unwrap();
        let keys: Vec<String> = flatten(&doc).into_keys().collect();
        let mut table: Vec<String> = CONFIG_KEYS.iter().map(|(k, _)| k.to_string()).collect();
        table.sort();
        assert_eq!(keys, table);
    }

    #[test]
    fn effective_document_round_trips() {
        let c = ExperimentConfig::default();
        let doc = c.effective_document().unwrap();
        let back = ExperimentConfig::from_value(doc).unwrap();
        assert_eq!(back.resolve(None).unwrap(), c.resolve(None).unwrap());
    }

    #[test]
    fn minimal_document_resolves() {
        let c = ExperimentConfig::from_value(json!({"schema_version": 1})).unwrap();
        let e = c.resolve(None).unwrap();
        assert_eq!(e.hw.name, "NVLLM");
        assert_eq!(e.model.name, "OPT-1.3B");
    }

    #[test]
    fn overrides_merge_over_preset() {
        let c = ExperimentConfig::from_value(json!({
            "schema_version": 1,
            "hardware": {"preset": "NVLLM-16C", "nand": {"fifo_pages": 4}}
        }))
        .unwrap();
        let hw = c.resolve_hardware().unwrap();
        assert_eq!(hw.nand.clusters, 16);
        assert_eq!(hw.nand.fifo_pages, 4);
        assert_eq!(hw.nand_ecdp, 16);
    }

    #[test]
    fn errors_carry_field_paths() {
        let bad = |v: Value| match ExperimentConfig::from_value(v).and_then(|c| c.resolve(None).map(|_| ())) {
            Err(Error::Config { path, .. }) => path,
            other => panic!("{other:?}"),
        };
        assert_eq!(bad(json!({"schema_version": 1, "fault": {"rber": 2.0}})), "fault.rber");
        assert_eq!(bad(json!({"schema_version": 1, "fault": {"rbr": 0.1}})), "fault.rbr");
        assert_eq!(bad(json!({"schema_version": 1, "hardware": {"nand": {"clustrs": 3}}})), "hardware.nand.clustrs");
        assert_eq!(bad(json!({"schema_version": 1, "hardware": {"npu": {"ecdp": 0}}})), "hardware.npu");
        assert_eq!(bad(json!({"schema_version": 1, "hardware": {"preset": "X"}})), "hardware.preset");
        assert_eq!(bad(json!({"schema_version": 2})), "schema_version");
        assert_eq!(bad(json!({"schema_version": 1, "bogus": 1})), "bogus");
        assert_eq!(bad(json!({"schema_version": 1, "model": "GPT-5"})), "model");
        assert_eq!(bad(json!({"schema_version": 1, "model": {"name": "x"}})), "model");
        assert_eq!(bad(json!({"schema_version": 1, "trace": {"turns": [{"prefill": 0, "decode": 1}]}})), "trace.turns[0]");
    }

    #[test]
    fn set_path_creates_and_rejects() {
        let mut doc = json!({"schema_version": 1});
        set_path(&mut doc, "hardware.nand.fifo_pages", json!(3)).unwrap();
        set_path(&mut doc, "fault.rber", json!(1e-4)).unwrap();
        assert_eq!(doc["hardware"]["nand"]["fifo_pages"], 3);
        assert!(set_path(&mut doc, "fault.rbr", json!(0)).is_err());
        let c = ExperimentConfig::from_value(doc).unwrap();
        assert_eq!(c.fault.rber, 1e-4);
    }

    #[test]
    fn help_lists_every_key() {
        let h = describe_keys();
        for (k, _) in CONFIG_KEYS {
            assert!(h.contains(k));
        }
        assert!(h.contains("\"NVLLM\""));
    }
}
