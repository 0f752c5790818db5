//! Unit-norm sentence embeddings: word average, SIF, and a trained linear
//! projection over word-average features.

mod sif;
mod triplet;
mod words;

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use sif::{
    embed_sif, fit_sif, remove_component, sif_weighted_average, SifParams, DEFAULT_SIF_A,
    MIN_FIT_SAMPLE,
};
pub use triplet::{
    batch_loss_and_grad, hard_negative, hinge, mean_batch_loss, mine_negatives, pair_features,
    train_projection, triplet_loss, ProjectionEncoder, TrainingTriple, TripletConfig,
    TripletTrainLog, DEFAULT_MARGIN,
};
pub use words::{tokenize, WordVectorTable};

use crate::bank::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::vecmath::normalized_f32;

/// Mean of in-vocabulary token vectors, unit-normalized. `None` when no token
/// is in the vocabulary (or the mean is zero).
pub fn embed_avg(sentence: &str, table: &WordVectorTable) -> Option<Vec<f32>> {
    let ids = table.token_ids(sentence);
    if ids.is_empty() {
        return None;
    }
    let mut acc = vec![0.0f64; table.dim()];
    for id in ids {
        for (s, &x) in acc.iter_mut().zip(table.vector(id)) {
            *s += x as f64;
        }
    }
    normalized_f32(&acc)
}

#[derive(Serialize, Deserialize)]
struct SifFile {
    params: SifParams,
    unigram: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackendKind {
    Avg,
    Sif,
    Projection,
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(BackendKind::Avg),
            "sif" => Ok(BackendKind::Sif),
            "proj" | "projection" => Ok(BackendKind::Projection),
            other => Err(Error::Config(format!("unknown embedding backend {other:?}"))),
        }
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::Avg => "avg",
            BackendKind::Sif => "sif",
            BackendKind::Projection => "proj",
        })
    }
}

/// A ready-to-use sentence encoder. Immutable; `encode` may be called from
/// any number of threads.
#[derive(Debug, Clone)]
pub enum Encoder {
    Avg(Arc<WordVectorTable>),
    Sif(Arc<WordVectorTable>, SifParams),
    Projection(Arc<WordVectorTable>, ProjectionEncoder),
}

impl Encoder {
    pub fn kind(&self) -> BackendKind {
        match self {
            Encoder::Avg(_) => BackendKind::Avg,
            Encoder::Sif(..) => BackendKind::Sif,
            Encoder::Projection(..) => BackendKind::Projection,
        }
    }

    pub fn table(&self) -> &WordVectorTable {
        match self {
            Encoder::Avg(t) | Encoder::Sif(t, _) | Encoder::Projection(t, _) => t,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Encoder::Projection(_, p) => p.d_out,
            _ => self.table().dim(),
        }
    }

    pub fn encode(&self, sentence: &str) -> Option<Vec<f32>> {
        match self {
            Encoder::Avg(t) => embed_avg(sentence, t),
            Encoder::Sif(t, p) => embed_sif(sentence, t, p),
            Encoder::Projection(t, p) => p
                .encode(sentence, t)
                .expect("projection input dim matches its table"),
        }
    }

    /// Fits SIF parameters on (up to `max_sample`) corpus sentences.
    pub fn fit_sif<S: AsRef<str> + Sync>(
        table: Arc<WordVectorTable>,
        corpus: &[S],
        a: f64,
        max_sample: usize,
    ) -> Result<Self> {
        let step = (corpus.len() / max_sample.max(1)).max(1);
        let sample: Vec<Vec<f64>> = corpus
            .iter()
            .step_by(step)
            .filter_map(|s| sif_weighted_average(s.as_ref(), &table, a))
            .collect();
        let params = fit_sif(&sample, a)?;
        Ok(Encoder::Sif(table, params))
    }

    pub fn projection(table: Arc<WordVectorTable>, enc: ProjectionEncoder) -> Result<Self> {
        if enc.d_in != table.dim() {
            return Err(Error::DimensionMismatch {
                expected: table.dim(),
                actual: enc.d_in,
            });
        }
        Ok(Encoder::Projection(table, enc))
    }

    /// Saves SIF parameters together with the unigram table they were fit with.
    pub fn save_sif(&self, path: &Path) -> Result<()> {
        let Encoder::Sif(table, params) = self else {
            return Err(Error::InvalidInput("not a SIF encoder".into()));
        };
        let file = SifFile {
            params: params.clone(),
            unigram: table.unigram_probs().to_vec(),
        };
        let json = serde_json::to_string(&file).expect("sif params serialize");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load_sif(mut table: WordVectorTable, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SifFile =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if file.params.pc.len() != table.dim() {
            return Err(Error::DimensionMismatch {
                expected: table.dim(),
                actual: file.params.pc.len(),
            });
        }
        table.set_unigram_probs(file.unigram)?;
        Ok(Encoder::Sif(Arc::new(table), file.params))
    }

    /// Embeds a corpus into a float32 matrix; unembeddable sentences become null rows.
    pub fn embed_all<S: AsRef<str> + Sync>(&self, sentences: &[S]) -> EmbeddingMatrix {
        let rows: Vec<Option<Vec<f32>>> = sentences
            .par_iter()
            .with_min_len(1024)
            .map(|s| self.encode(s.as_ref()))
            .collect();
        EmbeddingMatrix::from_rows(self.dim(), &rows).expect("encoder output matches its dim")
    }
}
