use std::sync::Arc;

use rand::Rng;

use super::engine::ClusterEcc;
use crate::ecc::{FaultModel, SegmentCodec};
use crate::erdpe::{f32_to_bf16, reference_dot, DotEngine, DotJob, DotValue, EcdpOptions, UncorrectablePolicy, Vector};
use crate::model::{MatrixKind, ModelSpec, WeightPrecision};
use crate::nand::{NandArray, WeightLayout};
use crate::rng;
use crate::{Error, Result};

fn column_key(layer: usize, kind: MatrixKind, col: usize) -> u64 {
    ((layer as u64) << 40) | ((kind as u64) << 32) | col as u64
}

fn random_vector<R: Rng>(precision: WeightPrecision, n: usize, r: &mut R) -> Vector {
    match precision {
        WeightPrecision::Int8 => Vector::Int8((0..n).map(|_| r.random()).collect()),
        WeightPrecision::Bf16 => Vector::Bf16((0..n).map(|_| f32_to_bf16(r.random_range(-1.0..1.0))).collect()),
    }
}

/// Stored weights plus the bit-level lane, for small models.
pub(crate) struct FunctionalNand<'a> {
    array: NandArray,
    codec: &'a dyn SegmentCodec,
    fault: FaultModel,
    opts: EcdpOptions,
    precision: WeightPrecision,
    lane_width: usize,
    reads: u64,
    mismatches: u64,
}

impl<'a> FunctionalNand<'a> {
    pub fn new(
        model: &ModelSpec,
        layout: &WeightLayout,
        codec: &'a dyn SegmentCodec,
        fault: FaultModel,
        policy: UncorrectablePolicy,
    ) -> Result<Self> {
        let precision = model.weight_precision;
        let seed = fault.seed;
        let array = NandArray::program(layout.clone(), codec, |layer, kind, col| {
            let inner = if kind == MatrixKind::FfnDown { model.d_ffn } else { model.d_model };
            let mut r = rng::stream(seed, "weights", column_key(layer, kind, col));
            random_vector(precision, inner, &mut r).to_bytes()
        })?;
        Ok(FunctionalNand {
            array,
            codec,
            fault,
            opts: EcdpOptions { policy, ..Default::default() },
            precision,
            lane_width: layout.config().lane_width,
            reads: 0,
            mismatches: 0,
        })
    }

    pub fn mismatches(&self) -> u64 {
        self.mismatches
    }

    fn decode(&self, bytes: &[u8]) -> Vector {
        match self.precision {
            WeightPrecision::Int8 => Vector::Int8(bytes.iter().map(|&b| b as i8).collect()),
            WeightPrecision::Bf16 => {
                Vector::Bf16(bytes.chunks(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
            }
        }
    }

    fn agrees(&self, got: DotValue, want: DotValue, w: &Vector, a: &Vector) -> bool {
        match (got, want) {
            (DotValue::Int(x), DotValue::Int(y)) => x == y,
            (DotValue::Float(x), DotValue::Float(y)) => {
                let (Vector::Bf16(w), Vector::Bf16(a)) = (w, a) else { return false };
                let mag: f64 = w
                    .iter()
                    .zip(a)
                    .map(|(&p, &q)| (crate::erdpe::bf16_to_f32(p) as f64 * crate::erdpe::bf16_to_f32(q) as f64).abs())
                    .sum();
                ((x - y) as f64).abs() <= 2.0 * w.len() as f64 * f32::EPSILON as f64 * mag
            }
            _ => false,
        }
    }

    /// Runs every column of a stage through the lane; returns per-cluster ECC outcomes.
    pub fn run_stage(
        &mut self,
        layer: usize,
        matrices: &[(MatrixKind, usize, Vec<Vec<usize>>)],
        passes: usize,
        token: usize,
    ) -> Result<Vec<ClusterEcc>> {
        let clusters = matrices.first().map_or(0, |m| m.2.len());
        let mut out = vec![ClusterEcc::default(); clusters];
        let engine = DotEngine::new(self.codec, self.opts);
        for (kind, inner, per_cluster) in matrices {
            let mut r = rng::stream(self.fault.seed, "activations", ((token as u64) << 24) | column_key(layer, *kind, 0));
            let acts: Vec<Vector> = (0..passes).map(|_| random_vector(self.precision, *inner, &mut r)).collect();
            let act_refs: Vec<&Vector> = acts.iter().collect();
            for (c, cols) in per_cluster.iter().enumerate() {
                for &col in cols {
                    let clean = self
                        .array
                        .read_column(layer, *kind, col)
                        .ok_or_else(|| Error::ShapeMismatch(format!("{kind:?} column {col} not in layout")))?;
                    let mut raw = self.array.read_column_raw(layer, *kind, col).expect("column present");
                    self.fault.inject_in_place(&mut raw, self.reads);
                    self.reads += 1;
                    let w = self.decode(&clean);
                    let job = DotJob::new(&w, Arc::new(acts[0].clone()), self.lane_width, self.codec)?;
                    let (values, stats, corrupt) = match engine.run_raw(&job, &raw, &act_refs) {
                        Ok(v) => v,
                        Err(Error::UncorrectableSegment { .. }) => {
                            return Err(Error::UncorrectableAbort { token, layer, count: 1 })
                        }
                        Err(e) => return Err(e),
                    };
                    if !corrupt {
                        for (v, a) in values.iter().zip(&acts) {
                            if !self.agrees(*v, reference_dot(&w, a)?, &w, a) {
                                self.mismatches += 1;
                            }
                        }
                    }
                    let e = &mut out[c];
                    e.dirty += stats.segments_dirty;
                    e.uncorrectable += stats.segments_uncorrectable;
                    e.deferred += stats.deferred_commits;
                }
            }
        }
        Ok(out)
    }
}
