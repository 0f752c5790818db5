//! Task query embeddings and candidate-pool retrieval.

use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::embed::Encoder;
use crate::error::{Error, Result};
use crate::index::{hit_order, FlatIndex, Hit};
use crate::vecmath::normalized_f32;

/// Pool target as a multiple of the final augmentation budget.
pub const POOL_FACTOR: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryMode {
    AllAverage,
    LabelAverage,
    PerSentence,
}

impl FromStr for QueryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "all-average" => Ok(QueryMode::AllAverage),
            "label" | "label-average" => Ok(QueryMode::LabelAverage),
            "sent" | "per-sentence" => Ok(QueryMode::PerSentence),
            other => Err(Error::Config(format!("unknown query mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for QueryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            QueryMode::AllAverage => "all",
            QueryMode::LabelAverage => "label",
            QueryMode::PerSentence => "sent",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub vector: Vec<f32>,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    pub mode: QueryMode,
    pub queries: Vec<Query>,
    /// Training sentences skipped because they embedded to null.
    pub skipped: usize,
}

impl QuerySet {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn vectors(&self) -> Vec<&[f32]> {
        self.queries.iter().map(|q| q.vector.as_slice()).collect()
    }
}

fn accumulate(acc: &mut [f64], v: &[f32]) {
    for (a, &x) in acc.iter_mut().zip(v) {
        *a += x as f64;
    }
}

/// Builds queries from already-embedded training examples.
pub fn build_queries_from_embeddings(
    data: &LabeledDataset,
    embeddings: &[Option<Vec<f32>>],
    mode: QueryMode,
    dim: usize,
) -> Result<QuerySet> {
    let skipped = embeddings.iter().filter(|e| e.is_none()).count();
    if skipped > 0 {
        log::warn!("{skipped} training sentences embed to null and are skipped");
    }
    let queries = match mode {
        QueryMode::AllAverage => {
            let mut acc = vec![0.0; dim];
            for e in embeddings.iter().flatten() {
                accumulate(&mut acc, e);
            }
            let v = normalized_f32(&acc)
                .ok_or_else(|| Error::InvalidInput("no training example embeds".into()))?;
            vec![Query {
                vector: v,
                label: None,
            }]
        }
        QueryMode::LabelAverage => {
            let mut acc = vec![vec![0.0; dim]; data.num_classes()];
            let mut n = vec![0usize; data.num_classes()];
            for ((_, label), e) in data.examples().iter().zip(embeddings) {
                if let Some(e) = e {
                    accumulate(&mut acc[*label], e);
                    n[*label] += 1;
                }
            }
            let mut out = Vec::with_capacity(acc.len());
            for (label, a) in acc.iter().enumerate() {
                let v = (n[label] > 0).then(|| normalized_f32(a)).flatten();
                let Some(v) = v else {
                    return Err(Error::EmptyLabel {
                        label: data.labels()[label].clone(),
                    });
                };
                out.push(Query {
                    vector: v,
                    label: Some(label),
                });
            }
            out
        }
        QueryMode::PerSentence => {
            let out: Vec<Query> = data
                .examples()
                .iter()
                .zip(embeddings)
                .filter_map(|((_, label), e)| {
                    e.as_ref().map(|v| Query {
                        vector: v.clone(),
                        label: Some(*label),
                    })
                })
                .collect();
            if out.is_empty() {
                return Err(Error::InvalidInput("no training example embeds".into()));
            }
            out
        }
    };
    Ok(QuerySet {
        mode,
        queries,
        skipped,
    })
}

pub fn build_queries(data: &LabeledDataset, mode: QueryMode, encoder: &Encoder) -> Result<QuerySet> {
    let embeddings: Vec<Option<Vec<f32>>> = data.texts().map(|t| encoder.encode(t)).collect();
    build_queries_from_embeddings(data, &embeddings, mode, encoder.dim())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: u32,
    pub score: f32,
    /// Label of the best-scoring labeled query; advisory only.
    pub source_label: Option<usize>,
}

/// Per-query k so that the whole pool targets `POOL_FACTOR × budget`.
pub fn default_per_query_k(budget: usize, num_queries: usize) -> usize {
    (POOL_FACTOR * budget).div_ceil(num_queries.max(1)).max(1)
}

/// Union of per-query top-k hits, merged by max score.
pub fn retrieve_pool(qs: &QuerySet, index: &FlatIndex, per_query_k: usize) -> Result<Vec<PoolEntry>> {
    if qs.is_empty() {
        return Err(Error::InvalidInput("empty query set".into()));
    }
    if per_query_k == 0 {
        return Err(Error::InvalidInput("per-query k must be at least 1".into()));
    }
    let results = index.top_k_multi(&qs.vectors(), per_query_k)?;
    Ok(merge_hits(qs, &results))
}

pub fn merge_hits(qs: &QuerySet, results: &[Vec<Hit>]) -> Vec<PoolEntry> {
    let mut best: HashMap<u32, PoolEntry> = HashMap::new();
    for (q, hits) in qs.queries.iter().zip(results) {
        for h in hits {
            let candidate = PoolEntry {
                id: h.id,
                score: h.score,
                source_label: q.label,
            };
            best.entry(h.id)
                .and_modify(|e| {
                    if h.score > e.score {
                        *e = candidate;
                    }
                })
                .or_insert(candidate);
        }
    }
    let mut pool: Vec<PoolEntry> = best.into_values().collect();
    pool.sort_by(|a, b| {
        hit_order(
            &Hit {
                id: a.id,
                score: a.score,
            },
            &Hit {
                id: b.id,
                score: b.score,
            },
        )
    });
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::EmbeddingMatrix;

    fn two_examples() -> (LabeledDataset, Vec<Option<Vec<f32>>>) {
        let ds = LabeledDataset::from_named([("a", "x"), ("b", "y")]);
        (ds, vec![Some(vec![1.0, 0.0]), Some(vec![0.0, 1.0])])
    }

    #[test]
    fn all_average() {
        let (ds, e) = two_examples();
        let qs = build_queries_from_embeddings(&ds, &e, QueryMode::AllAverage, 2).unwrap();
        assert_eq!(qs.len(), 1);
        assert!((qs.queries[0].vector[0] - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-7);
        assert_eq!(qs.queries[0].label, None);
    }

    #[test]
    fn label_average() {
        let (ds, e) = two_examples();
        let qs = build_queries_from_embeddings(&ds, &e, QueryMode::LabelAverage, 2).unwrap();
        assert_eq!(qs.queries[0].vector, vec![1.0, 0.0]);
        assert_eq!(qs.queries[0].label, Some(0));
        assert_eq!(qs.queries[1].vector, vec![0.0, 1.0]);
        assert_eq!(qs.queries[1].label, Some(1));
    }

    #[test]
    fn per_sentence_keeps_order_and_skips_nulls() {
        let ds = LabeledDataset::from_named([("a", "x"), ("b", "y"), ("a", "z")]);
        let e = vec![Some(vec![1.0, 0.0]), None, Some(vec![0.0, 1.0])];
        let qs = build_queries_from_embeddings(&ds, &e, QueryMode::PerSentence, 2).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs.skipped, 1);
        assert_eq!(qs.queries[1].vector, vec![0.0, 1.0]);
    }

    #[test]
    fn label_without_embeddable_example_is_named() {
        let ds = LabeledDataset::from_named([("pos", "x"), ("neg", "y")]);
        let e = vec![Some(vec![1.0, 0.0]), None];
        match build_queries_from_embeddings(&ds, &e, QueryMode::LabelAverage, 2) {
            Err(Error::EmptyLabel { label }) => assert_eq!(label, "neg"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn max_merge_and_disjoint_union() {
        let qs = QuerySet {
            mode: QueryMode::LabelAverage,
            queries: vec![
                Query {
                    vector: vec![1.0, 0.0],
                    label: Some(0),
                },
                Query {
                    vector: vec![0.0, 1.0],
                    label: Some(1),
                },
            ],
            skipped: 0,
        };
        let r = vec![
            vec![Hit { id: 7, score: 0.8 }, Hit { id: 1, score: 0.5 }],
            vec![Hit { id: 7, score: 0.9 }, Hit { id: 2, score: 0.4 }],
        ];
        let pool = merge_hits(&qs, &r);
        assert_eq!(pool.len(), 3);
        assert_eq!(pool[0].id, 7);
        assert_eq!(pool[0].score, 0.9);
        assert_eq!(pool[0].source_label, Some(1));

        let r = vec![
            vec![Hit { id: 1, score: 0.8 }, Hit { id: 2, score: 0.5 }],
            vec![Hit { id: 3, score: 0.9 }, Hit { id: 4, score: 0.4 }],
        ];
        assert_eq!(merge_hits(&qs, &r).len(), 4);
    }

    #[test]
    fn single_query_pool_equals_top_k() {
        let m = EmbeddingMatrix::from_rows(
            2,
            &[Some(vec![1.0f32, 0.0]), Some(vec![0.6, 0.8]), Some(vec![0.0, 1.0])],
        )
        .unwrap();
        let idx = FlatIndex::new(m).unwrap();
        let qs = QuerySet {
            mode: QueryMode::AllAverage,
            queries: vec![Query {
                vector: vec![0.8, 0.6],
                label: None,
            }],
            skipped: 0,
        };
        let pool = retrieve_pool(&qs, &idx, 2).unwrap();
        let hits = idx.top_k(&[0.8, 0.6], 2).unwrap();
        assert_eq!(pool.iter().map(|p| p.id).collect::<Vec<_>>(), hits.iter().map(|h| h.id).collect::<Vec<_>>());
        assert!(retrieve_pool(&qs, &idx, 0).is_err());
    }

    #[test]
    fn per_query_k_split() {
        assert_eq!(default_per_query_k(4000, 2), 40_000);
        assert_eq!(default_per_query_k(10, 3), 67);
    }
}
