//! Transformer shape descriptors and the workload quantities derived from them.
//!
//! Conventions:
//! - one MAC counts as 2 ops;
//! - embedding lookups are gathers and cost no MACs;
//! - the LM head (final output projection) is a GEMV and counts as a linear layer,
//!   even when its weights are tied to the token embedding;
//! - softmax, normalization and residual adds are lumped as `d_model` ops per layer.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightPrecision {
    #[serde(rename = "INT8")]
    Int8,
    #[serde(rename = "BF16")]
    Bf16,
}

impl WeightPrecision {
    pub fn bytes(self) -> usize {
        match self {
            WeightPrecision::Int8 => 1,
            WeightPrecision::Bf16 => 2,
        }
    }

    pub fn bits(self) -> usize {
        self.bytes() * 8
    }
}

/// Architecture family. Decides FFN gating, norm shapes, embedding tying and
/// whether positions are learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    /// GPT-style: LayerNorm (weight + bias), up/down FFN, learned positions,
    /// LM head tied to the token embedding.
    Opt,
    /// Gated FFN (gate + up + down), RMSNorm, rotary positions, untied LM head.
    Llama,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub family: ModelFamily,
    pub num_layers: usize,
    pub d_model: usize,
    pub d_ffn: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    /// Defaults to `num_heads` (plain multi-head attention).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_kv_heads: Option<usize>,
    pub vocab_size: usize,
    /// Learned position-embedding rows; 0 for rotary models.
    #[serde(default)]
    pub max_positions: usize,
    pub weight_precision: WeightPrecision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatrixKind {
    Q,
    K,
    V,
    O,
    FfnGate,
    FfnUp,
    FfnDown,
    LmHead,
}

impl MatrixKind {
    pub fn is_attention(self) -> bool {
        matches!(self, MatrixKind::Q | MatrixKind::K | MatrixKind::V | MatrixKind::O)
    }

    pub fn is_ffn(self) -> bool {
        matches!(self, MatrixKind::FfnGate | MatrixKind::FfnUp | MatrixKind::FfnDown)
    }
}

/// A weight matrix as stored: `columns` output elements, each a dot product
/// over `inner` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixShape {
    pub kind: MatrixKind,
    pub columns: usize,
    pub inner: usize,
}

impl MatrixShape {
    pub fn weights(&self) -> u64 {
        self.columns as u64 * self.inner as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentBreakdown {
    pub attention_proj_bytes: u64,
    pub ffn_bytes: u64,
    pub embedding_bytes: u64,
    /// Untied LM head weights; 0 when tied to the embedding.
    pub lm_head_bytes: u64,
    pub norm_bytes: u64,
    pub attention_proj_ops: u64,
    pub ffn_ops: u64,
    pub lm_head_ops: u64,
    /// Softmax / normalization / residual.
    pub misc_ops: u64,
    num_layers: u64,
    d_model: u64,
}

impl ComponentBreakdown {
    pub fn total_bytes(&self) -> u64 {
        self.attention_proj_bytes
            + self.ffn_bytes
            + self.embedding_bytes
            + self.lm_head_bytes
            + self.norm_bytes
    }

    /// Ops in GEMV layers (Q/K/V/O, FFN, LM head) per token.
    pub fn linear_ops(&self) -> u64 {
        self.attention_proj_ops + self.ffn_ops + self.lm_head_ops
    }

    pub fn linear_macs(&self) -> u64 {
        self.linear_ops() / 2
    }

    /// Score (QK^T) plus aggregation (AV) at context length `ctx`, all layers.
    pub fn attention_agg_ops(&self, ctx: u64) -> u64 {
        2 * 2 * ctx * self.d_model * self.num_layers
    }

    pub fn per_token_ops(&self, ctx: u64) -> u64 {
        self.linear_ops() + self.misc_ops + self.attention_agg_ops(ctx)
    }
}

impl ModelSpec {
    pub fn kv_heads(&self) -> usize {
        self.num_kv_heads.unwrap_or(self.num_heads)
    }

    pub fn kv_dim(&self) -> usize {
        self.kv_heads() * self.head_dim
    }

    pub fn bytes_per_weight(&self) -> usize {
        self.weight_precision.bytes()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(format!("{}: {m}", self.name)));
        for (field, v) in [
            ("num_layers", self.num_layers),
            ("d_model", self.d_model),
            ("num_heads", self.num_heads),
            ("head_dim", self.head_dim),
            ("vocab_size", self.vocab_size),
        ] {
            if v == 0 {
                return bad(format!("{field} must be > 0"));
            }
        }
        if self.d_model != self.num_heads * self.head_dim {
            return bad(format!(
                "d_model {} != num_heads {} x head_dim {}",
                self.d_model, self.num_heads, self.head_dim
            ));
        }
        let kv = self.kv_heads();
        if kv == 0 || self.num_heads % kv != 0 {
            return bad(format!("num_kv_heads {kv} must divide num_heads {}", self.num_heads));
        }
        Ok(())
    }

    /// Per-layer weight matrices in execution order.
    pub fn layer_matrices(&self) -> Vec<MatrixShape> {
        let d = self.d_model;
        let kv = self.kv_dim();
        let mut m = vec![
            MatrixShape { kind: MatrixKind::Q, columns: d, inner: d },
            MatrixShape { kind: MatrixKind::K, columns: kv, inner: d },
            MatrixShape { kind: MatrixKind::V, columns: kv, inner: d },
            MatrixShape { kind: MatrixKind::O, columns: d, inner: d },
        ];
        if self.d_ffn > 0 {
            if self.family == ModelFamily::Llama {
                m.push(MatrixShape { kind: MatrixKind::FfnGate, columns: self.d_ffn, inner: d });
            }
            m.push(MatrixShape { kind: MatrixKind::FfnUp, columns: self.d_ffn, inner: d });
            m.push(MatrixShape { kind: MatrixKind::FfnDown, columns: d, inner: self.d_ffn });
        }
        m
    }

    pub fn lm_head(&self) -> MatrixShape {
        MatrixShape {
            kind: MatrixKind::LmHead,
            columns: self.vocab_size,
            inner: self.d_model,
        }
    }

    fn norm_params(&self) -> u64 {
        let per_norm = match self.family {
            ModelFamily::Opt => 2 * self.d_model,
            ModelFamily::Llama => self.d_model,
        } as u64;
        // two per layer plus the final norm
        (2 * self.num_layers as u64 + 1) * per_norm
    }

    pub fn tied_embeddings(&self) -> bool {
        self.family == ModelFamily::Opt
    }

    pub fn total_bytes(&self) -> u64 {
        derive_breakdown(self).total_bytes()
    }

    pub fn from_json_file(path: &Path) -> Result<ModelSpec> {
        let text = std::fs::read_to_string(path)?;
        let spec: ModelSpec = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidModel(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }
}

pub fn derive_breakdown(spec: &ModelSpec) -> ComponentBreakdown {
    let bpw = spec.bytes_per_weight() as u64;
    let layers = spec.num_layers as u64;
    let mats = spec.layer_matrices();
    let attn: u64 = mats.iter().filter(|m| m.kind.is_attention()).map(|m| m.weights()).sum();
    let ffn: u64 = mats.iter().filter(|m| m.kind.is_ffn()).map(|m| m.weights()).sum();
    let lm = spec.lm_head().weights();
    let d = spec.d_model as u64;
    let embedding = (spec.vocab_size as u64 + spec.max_positions as u64) * d;

    ComponentBreakdown {
        attention_proj_bytes: layers * attn * bpw,
        ffn_bytes: layers * ffn * bpw,
        embedding_bytes: embedding * bpw,
        lm_head_bytes: if spec.tied_embeddings() { 0 } else { lm * bpw },
        norm_bytes: spec.norm_params() * bpw,
        attention_proj_ops: 2 * layers * attn,
        ffn_ops: 2 * layers * ffn,
        lm_head_ops: 2 * lm,
        misc_ops: layers * d,
        num_layers: layers,
        d_model: d,
    }
}

pub fn ffn_fraction(spec: &ModelSpec) -> f64 {
    let b = derive_breakdown(spec);
    let total = b.total_bytes();
    if total == 0 {
        0.0
    } else {
        b.ffn_bytes as f64 / total as f64
    }
}

struct Preset {
    name: &'static str,
    family: ModelFamily,
    layers: usize,
    d_model: usize,
    d_ffn: usize,
    heads: usize,
    kv_heads: Option<usize>,
    vocab: usize,
    positions: usize,
}

// OPT learned positions carry a 2-row offset on top of the 2048 context.
const PRESETS: &[Preset] = &[
    Preset { name: "OPT-1.3B", family: ModelFamily::Opt, layers: 24, d_model: 2048, d_ffn: 8192, heads: 32, kv_heads: None, vocab: 50272, positions: 2050 },
    Preset { name: "OPT-2.7B", family: ModelFamily::Opt, layers: 32, d_model: 2560, d_ffn: 10240, heads: 32, kv_heads: None, vocab: 50272, positions: 2050 },
    Preset { name: "OPT-6.7B", family: ModelFamily::Opt, layers: 32, d_model: 4096, d_ffn: 16384, heads: 32, kv_heads: None, vocab: 50272, positions: 2050 },
    Preset { name: "OPT-13B", family: ModelFamily::Opt, layers: 40, d_model: 5120, d_ffn: 20480, heads: 40, kv_heads: None, vocab: 50272, positions: 2050 },
    Preset { name: "OPT-30B", family: ModelFamily::Opt, layers: 48, d_model: 7168, d_ffn: 28672, heads: 56, kv_heads: None, vocab: 50272, positions: 2050 },
    Preset { name: "LLaMA2-7B", family: ModelFamily::Llama, layers: 32, d_model: 4096, d_ffn: 11008, heads: 32, kv_heads: None, vocab: 32000, positions: 0 },
    Preset { name: "LLaMA2-13B", family: ModelFamily::Llama, layers: 40, d_model: 5120, d_ffn: 13824, heads: 40, kv_heads: None, vocab: 32000, positions: 0 },
    Preset { name: "LLaMA3-8B", family: ModelFamily::Llama, layers: 32, d_model: 4096, d_ffn: 14336, heads: 32, kv_heads: Some(8), vocab: 128256, positions: 0 },
];

pub fn builtin_model_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

pub fn builtin_model(name: &str) -> Result<ModelSpec> {
    let p = PRESETS
        .iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownModel {
            name: name.to_string(),
            available: builtin_model_names().join(", "),
        })?;
    Ok(ModelSpec {
        name: p.name.to_string(),
        family: p.family,
        num_layers: p.layers,
        d_model: p.d_model,
        d_ffn: p.d_ffn,
        num_heads: p.heads,
        head_dim: p.d_model / p.heads,
        num_kv_heads: p.kv_heads,
        vocab_size: p.vocab,
        max_positions: p.positions,
        weight_precision: WeightPrecision::Int8,
    })
}

/// One conversation turn: prompt tokens then generated tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    pub prefill: usize,
    pub decode: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadTrace {
    pub turns: Vec<Turn>,
    #[serde(default)]
    pub initial_kv_len: usize,
}

impl WorkloadTrace {
    pub fn single(prefill: usize, decode: usize) -> Self {
        WorkloadTrace {
            turns: vec![Turn { prefill, decode }],
            initial_kv_len: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.turns.iter().enumerate() {
            if t.prefill == 0 || t.decode == 0 {
                return Err(Error::config(
                    format!("trace.turns[{i}]"),
                    "prefill and decode token counts must be >= 1",
                ));
            }
        }
        Ok(())
    }

    /// KV length after turn `t` (0-based) completes.
    pub fn kv_len_after(&self, t: usize) -> usize {
        self.initial_kv_len
            + self.turns[..=t]
                .iter()
                .map(|x| x.prefill + x.decode)
                .sum::<usize>()
    }

    pub fn prefill_tokens(&self) -> usize {
        self.turns.iter().map(|t| t.prefill).sum()
    }

    pub fn decode_tokens(&self) -> usize {
        self.turns.iter().map(|t| t.decode).sum()
    }
}
