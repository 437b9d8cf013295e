use std::ops::Range;

use super::NandConfig;
use crate::ecc::{CodeConfig, SegmentCodec};
use crate::model::{MatrixKind, MatrixShape, ModelSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PageRef {
    pub cluster: usize,
    pub plane: usize,
    pub page: u64,
}

/// A contiguous run of output columns of one matrix stored on one cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutEntry {
    /// Transformer layer; the LM head uses `num_layers`.
    pub layer: usize,
    pub matrix: MatrixKind,
    pub cluster: usize,
    pub columns: Range<usize>,
    pub inner: usize,
    pub segments_per_column: usize,
    /// Cluster-local page index; cluster page `k` is page `k / ppc` of plane `k % ppc`.
    pub first_page: u64,
    pub pages: u64,
}

impl LayoutEntry {
    pub fn segments(&self) -> u64 {
        self.columns.len() as u64 * self.segments_per_column as u64
    }
}

/// Column-major striping of every in-flash matrix across clusters. Each
/// matrix's columns are split into `clusters` contiguous ranges; each column is
/// its sequence of codewords (segment data followed by its parity), packed into
/// pages without straddling.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightLayout {
    cfg: NandConfig,
    code: CodeConfig,
    bytes_per_weight: usize,
    segment_bytes: usize,
    codeword_bytes: usize,
    codewords_per_page: usize,
    entries: Vec<LayoutEntry>,
    pages_used: Vec<u64>,
}

impl WeightLayout {
    pub fn config(&self) -> &NandConfig {
        &self.cfg
    }

    pub fn code(&self) -> &CodeConfig {
        &self.code
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn segment_bytes(&self) -> usize {
        self.segment_bytes
    }

    pub fn codeword_bytes(&self) -> usize {
        self.codeword_bytes
    }

    pub fn codewords_per_page(&self) -> usize {
        self.codewords_per_page
    }

    /// Weight bytes carried by one full page.
    pub fn payload_per_page(&self) -> usize {
        self.codewords_per_page * self.segment_bytes
    }

    pub fn pages_used(&self, cluster: usize) -> u64 {
        self.pages_used[cluster]
    }

    pub fn total_pages(&self) -> u64 {
        self.pages_used.iter().sum()
    }

    pub fn page_ref(&self, cluster: usize, k: u64) -> PageRef {
        let ppc = self.cfg.planes_per_cluster as u64;
        PageRef {
            cluster,
            plane: (k % ppc) as usize,
            page: k / ppc,
        }
    }

    pub fn pages(&self, e: &LayoutEntry) -> Vec<PageRef> {
        (e.first_page..e.first_page + e.pages)
            .map(|k| self.page_ref(e.cluster, k))
            .collect()
    }

    /// Unpadded weight bytes mapped by the layout.
    pub fn mapped_weight_bytes(&self) -> u64 {
        self.entries
            .iter()
            .map(|e| (e.columns.len() * e.inner * self.bytes_per_weight) as u64)
            .sum()
    }

    pub fn stored_bytes(&self) -> u64 {
        self.entries
            .iter()
            .map(|e| e.segments() * self.codeword_bytes as u64)
            .sum()
    }

    pub fn entries_for(&self, layer: usize, matrix: MatrixKind) -> impl Iterator<Item = &LayoutEntry> {
        self.entries
            .iter()
            .filter(move |e| e.layer == layer && e.matrix == matrix)
    }

    /// Cluster and cluster-local codeword index of segment `segment` of a column.
    pub fn locate(&self, layer: usize, matrix: MatrixKind, column: usize, segment: usize) -> Option<(usize, u64)> {
        let e = self
            .entries_for(layer, matrix)
            .find(|e| e.columns.contains(&column))?;
        if segment >= e.segments_per_column {
            return None;
        }
        let idx = e.first_page * self.codewords_per_page as u64
            + ((column - e.columns.start) * e.segments_per_column + segment) as u64;
        Some((e.cluster, idx))
    }
}

fn in_flash_matrices(model: &ModelSpec) -> Vec<(usize, MatrixShape)> {
    let mut out = Vec::new();
    for layer in 0..model.num_layers {
        for m in model.layer_matrices() {
            out.push((layer, m));
        }
    }
    out.push((model.num_layers, model.lm_head()));
    out
}

pub fn build_layout(model: &ModelSpec, cfg: &NandConfig, code: &CodeConfig) -> Result<WeightLayout> {
    cfg.validate()?;
    code.validate()?;
    model.validate()?;
    let bpw = model.bytes_per_weight();
    let segment_bytes = cfg.lane_width * bpw;
    if segment_bytes % code.subword_bytes() != 0 {
        return Err(Error::config(
            "nand.lane_width",
            format!("segment of {segment_bytes} bytes is not a whole number of ECC subwords"),
        ));
    }
    let codeword_bytes = code.codeword_bytes(segment_bytes);
    let cpp = cfg.codewords_per_page(codeword_bytes);
    if cpp == 0 {
        return Err(Error::config("nand.page_kib", "page smaller than one codeword"));
    }
    let capacity_pages = cfg.pages_per_plane() * cfg.planes_per_cluster as u64;
    let mut pages_used = vec![0u64; cfg.clusters];
    let mut entries = Vec::new();
    if cfg.clusters == 0 {
        return Err(Error::CapacityExceeded {
            layer: 0,
            what: "no clusters".into(),
            needed: model.total_bytes(),
            available: 0,
        });
    }
    for (layer, m) in in_flash_matrices(model) {
        let spc = m.inner.div_ceil(cfg.lane_width);
        let chunk = m.columns.div_ceil(cfg.clusters);
        for (cluster, used) in pages_used.iter_mut().enumerate() {
            let start = (cluster * chunk).min(m.columns);
            let end = ((cluster + 1) * chunk).min(m.columns);
            if start == end {
                continue;
            }
            let segs = ((end - start) * spc) as u64;
            let pages = segs.div_ceil(cpp as u64);
            if *used + pages > capacity_pages {
                let page = cfg.page_bytes() as u64;
                return Err(Error::CapacityExceeded {
                    layer,
                    what: format!("{:?} on cluster {cluster}", m.kind),
                    needed: (*used + pages) * page,
                    available: capacity_pages * page,
                });
            }
            entries.push(LayoutEntry {
                layer,
                matrix: m.kind,
                cluster,
                columns: start..end,
                inner: m.inner,
                segments_per_column: spc,
                first_page: *used,
                pages,
            });
            *used += pages;
        }
    }
    Ok(WeightLayout {
        cfg: *cfg,
        code: *code,
        bytes_per_weight: bpw,
        segment_bytes,
        codeword_bytes,
        codewords_per_page: cpp,
        entries,
        pages_used,
    })
}

/// Byte-accurate NAND contents for small models.
#[derive(Debug, Clone)]
pub struct NandArray {
    layout: WeightLayout,
    /// Per cluster, pages in cluster-page order.
    clusters: Vec<Vec<u8>>,
}

impl NandArray {
    /// Programs every layout entry. `weights(layer, matrix, column)` returns the
    /// column's `inner * bytes_per_weight` storage bytes.
    pub fn program<F>(layout: WeightLayout, codec: &dyn SegmentCodec, weights: F) -> Result<NandArray>
    where
        F: Fn(usize, MatrixKind, usize) -> Vec<u8>,
    {
        let page = layout.cfg.page_bytes();
        let mut clusters: Vec<Vec<u8>> = layout
            .pages_used
            .iter()
            .map(|&p| vec![0u8; p as usize * page])
            .collect();
        let seg = layout.segment_bytes;
        let cw = layout.codeword_bytes;
        let cpp = layout.codewords_per_page as u64;
        for e in &layout.entries {
            for col in e.columns.clone() {
                let mut data = weights(e.layer, e.matrix, col);
                let want = e.inner * layout.bytes_per_weight;
                if data.len() != want {
                    return Err(Error::LengthMismatch { expected: want, actual: data.len() });
                }
                data.resize(e.segments_per_column * seg, 0);
                for (s, chunk) in data.chunks(seg).enumerate() {
                    let idx = e.first_page * cpp + ((col - e.columns.start) * e.segments_per_column + s) as u64;
                    let at = (idx / cpp) as usize * page + (idx % cpp) as usize * cw;
                    let bytes = &mut clusters[e.cluster][at..at + cw];
                    bytes[..seg].copy_from_slice(chunk);
                    bytes[seg..].copy_from_slice(&codec.encode(chunk)?);
                }
            }
        }
        Ok(NandArray { layout, clusters })
    }

    pub fn layout(&self) -> &WeightLayout {
        &self.layout
    }

    pub fn read_page(&self, p: PageRef) -> &[u8] {
        let page = self.layout.cfg.page_bytes();
        let k = p.page as usize * self.layout.cfg.planes_per_cluster + p.plane;
        &self.clusters[p.cluster][k * page..(k + 1) * page]
    }

    /// Raw codewords of one column, back to back.
    pub fn read_column_raw(&self, layer: usize, matrix: MatrixKind, column: usize) -> Option<Vec<u8>> {
        let e = self
            .layout
            .entries_for(layer, matrix)
            .find(|e| e.columns.contains(&column))?;
        let cw = self.layout.codeword_bytes;
        let cpp = self.layout.codewords_per_page as u64;
        let page = self.layout.cfg.page_bytes();
        let mut out = Vec::with_capacity(e.segments_per_column * cw);
        for s in 0..e.segments_per_column {
            let (cluster, idx) = self.layout.locate(layer, matrix, column, s)?;
            let k = idx / cpp;
            let p = self.layout.page_ref(cluster, k);
            let off = (idx % cpp) as usize * cw;
            out.extend_from_slice(&self.read_page(p)[off..off + cw]);
            debug_assert!(off + cw <= page);
        }
        Some(out)
    }

    /// Column weight bytes with parity and padding stripped.
    pub fn read_column(&self, layer: usize, matrix: MatrixKind, column: usize) -> Option<Vec<u8>> {
        let raw = self.read_column_raw(layer, matrix, column)?;
        let e = self
            .layout
            .entries_for(layer, matrix)
            .find(|e| e.columns.contains(&column))?;
        let seg = self.layout.segment_bytes;
        let mut out: Vec<u8> = raw
            .chunks(self.layout.codeword_bytes)
            .flat_map(|c| c[..seg].to_vec())
            .collect();
        out.truncate(e.inner * self.layout.bytes_per_weight);
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecc::SecDedCodec;
    use crate::erdpe::{DotJob, Vector};
    use crate::model::{builtin_model, ModelFamily, WeightPrecision};
    use std::collections::HashSet;
    use std::sync::Arc;

    fn toy() -> ModelSpec {
        ModelSpec {
            name: "toy".into(),
            family: ModelFamily::Opt,
            num_layers: 1,
            d_model: 64,
            d_ffn: 128,
            num_heads: 2,
            head_dim: 32,
            num_kv_heads: None,
            vocab_size: 50,
            max_positions: 0,
            weight_precision: WeightPrecision::Int8,
        }
    }

    fn weight(layer: usize, m: MatrixKind, col: usize, i: usize) -> u8 {
        (layer * 131 + m as usize * 17 + col * 7 + i * 3) as u8
    }

    #[test]
    fn toy_round_trip_on_one_cluster() {
        let model = toy();
        let cfg = NandConfig {
            clusters: 1,
            plane_capacity_gib: 1.0 / 1024.0,
            ..NandConfig::default()
        };
        let code = CodeConfig::default();
        let layout = build_layout(&model, &cfg, &code).unwrap();
        let expected: u64 = model.layer_matrices().iter().map(|m| m.weights()).sum::<u64>()
            + model.lm_head().weights();
        assert_eq!(layout.mapped_weight_bytes(), expected);
        let codec = SecDedCodec::new(code).unwrap();
        let arr = NandArray::program(layout.clone(), &codec, |l, m, c| {
            let inner = if m == MatrixKind::FfnDown { 128 } else { 64 };
            (0..inner).map(|i| weight(l, m, c, i)).collect()
        })
        .unwrap();
        for m in model.layer_matrices().iter().chain([model.lm_head()].iter()) {
            let layer = if m.kind == MatrixKind::LmHead { 1 } else { 0 };
            for col in 0..m.columns {
                let got = arr.read_column(layer, m.kind, col).unwrap();
                let want: Vec<u8> = (0..m.inner).map(|i| weight(layer, m.kind, col, i)).collect();
                assert_eq!(got, want, "{:?} col {col}", m.kind);
                // stored image equals what the dot-product engine encodes
                let w = Vector::Int8(want.iter().map(|&b| b as i8).collect());
                let job = DotJob::new(&w, Arc::new(Vector::Int8(vec![0; m.inner])), 32, &codec).unwrap();
                assert_eq!(arr.read_column_raw(layer, m.kind, col).unwrap(), job.stored_codewords());
            }
        }
    }

    #[test]
    fn codewords_mapped_once_and_pages_contiguous() {
        let model = toy();
        let cfg = NandConfig { clusters: 3, planes_per_cluster: 2, page_kib: 1, ..NandConfig::default() };
        let layout = build_layout(&model, &cfg, &CodeConfig::default()).unwrap();
        let mut seen = HashSet::new();
        for e in layout.entries() {
            for col in e.columns.clone() {
                for s in 0..e.segments_per_column {
                    assert!(seen.insert(layout.locate(e.layer, e.matrix, col, s).unwrap()));
                }
            }
            let pages = layout.pages(e);
            for plane in 0..cfg.planes_per_cluster {
                let idx: Vec<u64> = pages.iter().filter(|p| p.plane == plane).map(|p| p.page).collect();
                assert!(idx.windows(2).all(|w| w[1] == w[0] + 1));
            }
        }
    }

    #[test]
    fn opt30b_fits_in_128_gib() {
        let model = builtin_model("OPT-30B").unwrap();
        let layout = build_layout(&model, &NandConfig::default(), &CodeConfig::default()).unwrap();
        assert!(layout.stored_bytes() as f64 >= layout.mapped_weight_bytes() as f64 * 72.0 / 64.0);
        assert!(layout.total_pages() * 16384 < 128u64 << 30);
    }

    #[test]
    fn capacity_exceeded_names_layer() {
        let model = builtin_model("LLaMA2-13B").unwrap();
        let cfg = NandConfig { plane_capacity_gib: 0.05, ..NandConfig::default() };
        match build_layout(&model, &cfg, &CodeConfig::default()) {
            Err(Error::CapacityExceeded { layer, needed, available, .. }) => {
                assert!(layer < model.num_layers);
                assert!(needed > available);
            }
            other => panic!("{other:?}"),
        }
    }
}
