//! Exact top-k cosine retrieval by sharded brute-force scan.
//!
//! Rows and queries are unit norm, so the dot product is the cosine. In
//! int8 mode the scan runs over per-row scaled int8 codes and the best
//! `rescore_factor · k` candidates are re-scored against the float32 rows
//! when those are available.

mod kernels;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kernels::{dot_f32, Isa};

use crate::bank::{Dtype, EmbeddingMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_SHARD_SIZE: usize = 1 << 16;
pub const DEFAULT_RESCORE_FACTOR: usize = 10;
const QUERY_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: u32,
    pub score: f32,
}

/// Total order on hits: higher score first, then lower id.
pub fn hit_order(a: &Hit, b: &Hit) -> Ordering {
    b.score.total_cmp(&a.score).then(a.id.cmp(&b.id))
}

/// Heap entry ordered so that the heap's maximum is the worst kept hit.
#[derive(Clone, Copy)]
struct Worst<S>(S, u32);

impl<S: Copy + PartialOrd> PartialEq for Worst<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<S: Copy + PartialOrd> Eq for Worst<S> {}

impl<S: Copy + PartialOrd> PartialOrd for Worst<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<S: Copy + PartialOrd> Ord for Worst<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Lower score is "greater" (worse); at equal score, higher id is worse.
        other
            .0
            .partial_cmp(&self.0)
            .unwrap_or(Ordering::Equal)
            .then(self.1.cmp(&other.1))
    }
}

/// Bounded collector of the best `k` (score, id) pairs.
struct TopK<S: Copy + PartialOrd> {
    k: usize,
    heap: BinaryHeap<Worst<S>>,
}

impl<S: Copy + PartialOrd> TopK<S> {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.min(1 << 20) + 1),
        }
    }

    #[inline]
    fn push(&mut self, score: S, id: u32) {
        if self.heap.len() < self.k {
            self.heap.push(Worst(score, id));
            return;
        }
        let worst = self.heap.peek().expect("k > 0");
        if Worst(score, id) < *worst {
            self.heap.pop();
            self.heap.push(Worst(score, id));
        }
    }

    fn into_vec(self) -> Vec<(S, u32)> {
        self.heap.into_iter().map(|Worst(s, id)| (s, id)).collect()
    }
}

/// Flat index over an embedding matrix (float32, int8, or both).
#[derive(Debug)]
pub struct FlatIndex {
    exact: Option<EmbeddingMatrix>,
    quantized: Option<EmbeddingMatrix>,
    shard_size: usize,
    rescore_factor: usize,
    use_quantized: bool,
    isa: Isa,
}

impl FlatIndex {
    /// Exact float32 index.
    pub fn new(matrix: EmbeddingMatrix) -> Result<Self> {
        if matrix.dtype() != Dtype::Float32 {
            return Err(Error::InvalidInput("exact index needs a float32 matrix".into()));
        }
        Ok(Self {
            exact: Some(matrix),
            quantized: None,
            shard_size: DEFAULT_SHARD_SIZE,
            rescore_factor: DEFAULT_RESCORE_FACTOR,
            use_quantized: false,
            isa: Isa::detect(),
        })
    }

    /// Float32 rows plus their int8 codes; searches the codes and rescores.
    pub fn with_quantization(matrix: EmbeddingMatrix) -> Result<Self> {
        let q = quantize(&matrix)?;
        let mut idx = Self::new(matrix)?;
        idx.quantized = Some(q);
        idx.use_quantized = true;
        Ok(idx)
    }

    /// Int8-only index. Scores are the dequantized approximations since
    /// there are no float32 rows to rescore against.
    pub fn quantized_only(codes: EmbeddingMatrix) -> Result<Self> {
        if codes.dtype() != Dtype::Int8Scaled {
            return Err(Error::InvalidInput("expected an int8-scaled matrix".into()));
        }
        Ok(Self {
            exact: None,
            quantized: Some(codes),
            shard_size: DEFAULT_SHARD_SIZE,
            rescore_factor: DEFAULT_RESCORE_FACTOR,
            use_quantized: true,
            isa: Isa::detect(),
        })
    }

    pub fn from_matrix(matrix: EmbeddingMatrix, quantized: bool) -> Result<Self> {
        match (matrix.dtype(), quantized) {
            (Dtype::Float32, false) => Self::new(matrix),
            (Dtype::Float32, true) => Self::with_quantization(matrix),
            (Dtype::Int8Scaled, _) => Self::quantized_only(matrix),
        }
    }

    pub fn with_shard_size(mut self, shard_size: usize) -> Self {
        self.shard_size = shard_size.max(1);
        self
    }

    pub fn with_rescore_factor(mut self, factor: usize) -> Self {
        self.rescore_factor = factor.max(1);
        self
    }

    /// Switches between int8 and float32 scanning when both are present.
    pub fn set_quantized(&mut self, on: bool) {
        self.use_quantized = on && self.quantized.is_some();
        if self.exact.is_none() {
            self.use_quantized = true;
        }
    }

    pub fn is_quantized(&self) -> bool {
        self.use_quantized
    }

    fn matrix(&self) -> &EmbeddingMatrix {
        self.exact
            .as_ref()
            .or(self.quantized.as_ref())
            .expect("index holds a matrix")
    }

    pub fn len(&self) -> usize {
        self.matrix().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.matrix().dim()
    }

    pub fn exact_matrix(&self) -> Option<&EmbeddingMatrix> {
        self.exact.as_ref()
    }

    /// Float32 row (dequantized for int8-only indexes); `None` for null or
    /// out-of-range rows.
    pub fn row(&self, id: usize) -> Option<Vec<f32>> {
        let m = self.matrix();
        if id >= m.count() || m.is_null(id) {
            return None;
        }
        Some(match &self.exact {
            Some(e) => e.row_f32(id).to_vec(),
            None => m.row_dequantized(id),
        })
    }

    /// Ids of all non-null rows.
    pub fn live_ids(&self) -> Vec<u32> {
        let m = self.matrix();
        (0..m.count()).filter(|&i| !m.is_null(i)).map(|i| i as u32).collect()
    }

    fn shards(&self) -> Vec<Range<usize>> {
        let n = self.len();
        (0..n)
            .step_by(self.shard_size)
            .map(|s| s..(s + self.shard_size).min(n))
            .collect()
    }

    fn check_query(&self, q: &[f32]) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: q.len(),
            });
        }
        let n = crate::vecmath::norm(q);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidInput("query is null or zero".into()));
        }
        if (n - 1.0).abs() > QUERY_NORM_TOLERANCE {
            return Err(Error::InvalidInput(format!("query norm {n} is not 1")));
        }
        Ok(())
    }

    pub fn top_k(&self, query: &[f32], k: usize) -> Result<Vec<Hit>> {
        Ok(self.top_k_multi(&[query], k)?.pop().expect("one query"))
    }

    /// Top-k for several queries in a single pass over the matrix.
    pub fn top_k_multi<Q: AsRef<[f32]> + Sync>(&self, queries: &[Q], k: usize) -> Result<Vec<Vec<Hit>>> {
        if queries.is_empty() {
            return Err(Error::InvalidInput("empty query set".into()));
        }
        if k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        for q in queries {
            self.check_query(q.as_ref())?;
        }
        let qs: Vec<&[f32]> = queries.iter().map(|q| q.as_ref()).collect();
        if self.use_quantized {
            self.search_quantized(&qs, k)
        } else {
            Ok(self.search_exact(&qs, k))
        }
    }

    fn search_exact(&self, queries: &[&[f32]], k: usize) -> Vec<Vec<Hit>> {
        let m = self.exact.as_ref().expect("float32 rows");
        let dim = m.dim();
        let isa = self.isa;
        let partials: Vec<Vec<Vec<(f32, u32)>>> = self
            .shards()
            .into_par_iter()
            .map(|range| {
                let mut tops: Vec<TopK<f32>> = (0..queries.len()).map(|_| TopK::new(k)).collect();
                let rows = &m.data_f32()[range.start * dim..range.end * dim];
                kernels::scan_f32(isa, rows, dim, queries, |r, q, s| {
                    let id = range.start + r;
                    if !m.is_null(id) {
                        tops[q].push(s, id as u32);
                    }
                });
                tops.into_iter().map(TopK::into_vec).collect()
            })
            .collect();
        merge(partials, queries.len(), k)
            .into_iter()
            .map(|hits| hits.into_iter().map(|(s, id)| Hit { id, score: s }).collect())
            .collect()
    }

    fn search_quantized(&self, queries: &[&[f32]], k: usize) -> Result<Vec<Vec<Hit>>> {
        let codes = self.quantized.as_ref().expect("int8 codes");
        let dim = codes.dim();
        let isa = self.isa;
        let candidates = if self.exact.is_some() {
            k.saturating_mul(self.rescore_factor)
        } else {
            k
        };
        let qcodes: Vec<(Vec<i8>, f32)> = queries.iter().map(|q| quantize_row(q)).collect();
        let qrefs: Vec<&[i8]> = qcodes.iter().map(|(c, _)| c.as_slice()).collect();
        let partials: Vec<Vec<Vec<(f32, u32)>>> = self
            .shards()
            .into_par_iter()
            .map(|range| {
                let mut tops: Vec<TopK<f32>> =
                    (0..queries.len()).map(|_| TopK::new(candidates)).collect();
                let rows = &codes.data_i8()[range.start * dim..range.end * dim];
                kernels::scan_i8(isa, rows, dim, &qrefs, |r, q, dot| {
                    let id = range.start + r;
                    if !codes.is_null(id) {
                        let s = dot as f32 * codes.scale(id) * qcodes[q].1;
                        tops[q].push(s, id as u32);
                    }
                });
                tops.into_iter().map(TopK::into_vec).collect()
            })
            .collect();
        let merged = merge(partials, queries.len(), candidates);
        let Some(exact) = self.exact.as_ref() else {
            return Ok(merged
                .into_iter()
                .map(|hits| {
                    hits.into_iter()
                        .map(|(s, id)| Hit {
                            id,
                            score: s.clamp(-1.0, 1.0),
                        })
                        .collect()
                })
                .collect());
        };
        Ok(merged
            .into_iter()
            .zip(queries)
            .map(|(cands, q)| {
                let mut hits: Vec<Hit> = cands
                    .into_iter()
                    .map(|(_, id)| Hit {
                        id,
                        score: dot_with(isa, exact.row_f32(id as usize), q),
                    })
                    .collect();
                hits.sort_by(hit_order);
                hits.truncate(k);
                hits
            })
            .collect())
    }
}

fn dot_with(isa: Isa, row: &[f32], q: &[f32]) -> f32 {
    let mut out = 0.0;
    kernels::scan_f32(isa, row, row.len(), &[q], |_, _, s| out = s);
    out
}

/// Deterministic merge of per-shard candidates: score desc, id asc.
fn merge(partials: Vec<Vec<Vec<(f32, u32)>>>, nq: usize, k: usize) -> Vec<Vec<(f32, u32)>> {
    let mut per_query: Vec<Vec<(f32, u32)>> = vec![Vec::new(); nq];
    for shard in partials {
        for (q, hits) in shard.into_iter().enumerate() {
            per_query[q].extend(hits);
        }
    }
    for hits in &mut per_query {
        hits.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        hits.truncate(k);
    }
    per_query
}

/// Symmetric per-row int8 code: `scale = max|x| / 127`, `q = round(x / scale)`.
pub fn quantize_row(row: &[f32]) -> (Vec<i8>, f32) {
    let max = row.iter().fold(0.0f32, |m, &x| m.max(x.abs()));
    if max == 0.0 {
        return (vec![0; row.len()], 0.0);
    }
    let scale = max / 127.0;
    let codes = row
        .iter()
        .map(|&x| (x / scale).round().clamp(-127.0, 127.0) as i8)
        .collect();
    (codes, scale)
}

/// Quantizes every row of a float32 matrix; null rows stay null.
pub fn quantize(matrix: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if matrix.dtype() != Dtype::Float32 {
        return Err(Error::InvalidInput("can only quantize float32 matrices".into()));
    }
    let (dim, count) = (matrix.dim(), matrix.count());
    let rows: Vec<(Vec<i8>, f32)> = (0..count)
        .into_par_iter()
        .with_min_len(4096)
        .map(|i| {
            if matrix.is_null(i) {
                (vec![0; dim], 0.0)
            } else {
                quantize_row(matrix.row_f32(i))
            }
        })
        .collect();
    let nulls: Vec<bool> = (0..count).map(|i| matrix.is_null(i)).collect();
    let mut data = Vec::with_capacity(dim * count);
    let mut scales = Vec::with_capacity(count);
    for (codes, s) in rows {
        data.extend(codes);
        scales.push(s);
    }
    EmbeddingMatrix::from_i8(dim, data, scales, &nulls)
}

/// Fraction of `exact` ids found in `approx`, averaged over queries.
pub fn recall(approx: &[Vec<Hit>], exact: &[Vec<Hit>]) -> f64 {
    let mut found = 0usize;
    let mut total = 0usize;
    for (a, e) in approx.iter().zip(exact) {
        let ids: std::collections::HashSet<u32> = a.iter().map(|h| h.id).collect();
        found += e.iter().filter(|h| ids.contains(&h.id)).count();
        total += e.len();
    }
    if total == 0 {
        1.0
    } else {
        found as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(rows: &[Option<Vec<f32>>]) -> FlatIndex {
        FlatIndex::new(EmbeddingMatrix::from_rows(rows[0].as_ref().map_or(2, Vec::len), rows).unwrap())
            .unwrap()
    }

    #[test]
    fn forced_arithmetic() {
        let h = std::f32::consts::FRAC_1_SQRT_2;
        let idx = index(&[Some(vec![1.0, 0.0]), Some(vec![0.0, 1.0]), Some(vec![h, h])]);
        let hits = idx.top_k(&[1.0, 0.0], 2).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!((hits[0].id, hits[0].score), (0, 1.0));
        assert_eq!(hits[1].id, 2);
        assert!((hits[1].score - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-4);
    }

    #[test]
    fn k_larger_than_bank_skips_nulls() {
        let idx = index(&[Some(vec![1.0, 0.0]), None, Some(vec![0.0, 1.0])]);
        let hits = idx.top_k(&[0.0, 1.0], 10).unwrap();
        let ids: Vec<u32> = hits.iter().map(|h| h.id).collect();
        assert_eq!(ids, vec![2, 0]);
    }

    #[test]
    fn duplicate_rows_lower_id_first() {
        let idx = index(&[Some(vec![0.0, 1.0]), Some(vec![0.6, 0.8]), Some(vec![0.6, 0.8])])
            .with_shard_size(1);
        let hits = idx.top_k(&[0.6, 0.8], 2).unwrap();
        assert_eq!((hits[0].id, hits[1].id), (1, 2));
    }

    #[test]
    fn bad_queries() {
        let idx = index(&[Some(vec![1.0, 0.0])]);
        assert!(idx.top_k(&[0.0, 0.0], 1).is_err());
        assert!(idx.top_k(&[1.0, 0.0, 0.0], 1).is_err());
        assert!(idx.top_k(&[1.0, 0.0], 0).is_err());
        assert!(idx.top_k_multi::<Vec<f32>>(&[], 1).is_err());
    }

    #[test]
    fn quantize_examples() {
        let (codes, scale) = quantize_row(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(codes, vec![127, 0, 0, 0]);
        assert!((scale - 1.0 / 127.0).abs() < 1e-9);
        let m = EmbeddingMatrix::from_rows(2, &[None, Some(vec![0.6f32, -0.8])]).unwrap();
        let q = quantize(&m).unwrap();
        assert!(q.is_null(0));
        assert_eq!(q.row_i8(0), &[0, 0]);
        assert_eq!(q.row_i8(1), &[95, -127]);
    }

    #[test]
    fn quantized_only_index_returns_approximate_scores() {
        let m = EmbeddingMatrix::from_rows(2, &[Some(vec![1.0f32, 0.0]), Some(vec![0.0, 1.0])]).unwrap();
        let idx = FlatIndex::quantized_only(quantize(&m).unwrap()).unwrap();
        let hits = idx.top_k(&[1.0, 0.0], 1).unwrap();
        assert_eq!(hits[0].id, 0);
        assert!((hits[0].score - 1.0).abs() < 1e-2);
    }
}
