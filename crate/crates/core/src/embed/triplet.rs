//! Linear paraphrastic projection trained with a margin triplet loss and
//! in-batch hard negatives.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::embed_avg;
use super::words::WordVectorTable;
use crate::error::{Error, Result};
use crate::vecmath::normalized_f32;

pub const DEFAULT_MARGIN: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletConfig {
    pub margin: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Output dimension; `None` keeps the input dimension (identity init).
    pub d_out: Option<usize>,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            batch_size: 32,
            learning_rate: 0.5,
            epochs: 10,
            seed: 0,
            d_out: None,
        }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("triplet batch size must be at least 2".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Anchor, positive and in-batch hard negative, all unit norm.
#[derive(Debug, Clone, Copy)]
pub struct TrainingTriple<'a> {
    pub anchor: &'a [f32],
    pub positive: &'a [f32],
    pub negative: &'a [f32],
}

fn cos<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.into(), y.into());
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    let d = (aa * bb).sqrt();
    if d == 0.0 {
        0.0
    } else {
        ab / d
    }
}

pub fn hinge(cos_pos: f64, cos_neg: f64, margin: f64) -> f64 {
    (margin - cos_pos + cos_neg).max(0.0)
}

/// `max(0, margin − cos(x, y) + cos(x, y_c))`.
pub fn triplet_loss(t: &TrainingTriple<'_>, margin: f64) -> f64 {
    hinge(cos(t.anchor, t.positive), cos(t.anchor, t.negative), margin)
}

/// Index of the batch positive (other than `own`) most similar to the
/// anchor; ties go to the smallest index.
pub fn hard_negative<T, P>(anchor: &[T], positives: &[P], own: usize) -> Result<usize>
where
    T: Copy + Into<f64>,
    P: AsRef<[T]>,
{
    if positives.len() < 2 {
        return Err(Error::InvalidInput("hard negative mining needs a batch of at least 2".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for (j, p) in positives.iter().enumerate() {
        if j == own {
            continue;
        }
        let c = cos(anchor, p.as_ref());
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((j, c));
        }
    }
    Ok(best.expect("batch has another element").0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionEncoder {
    pub d_in: usize,
    pub d_out: usize,
    /// Row-major `d_out × d_in`.
    pub w: Vec<f64>,
}

impl ProjectionEncoder {
    pub fn identity(dim: usize) -> Self {
        let mut w = vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        Self {
            d_in: dim,
            d_out: dim,
            w,
        }
    }

    pub fn random(d_in: usize, d_out: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (d_in as f64).sqrt()).expect("valid std");
        Self {
            d_in,
            d_out,
            w: (0..d_in * d_out).map(|_| normal.sample(&mut rng)).collect(),
        }
    }

    fn project<T: Copy + Into<f64>>(&self, x: &[T]) -> Vec<f64> {
        project(&self.w, self.d_in, self.d_out, x)
    }

    /// Projects base features and re-normalizes; `None` for a zero result.
    pub fn apply(&self, features: &[f32]) -> Result<Option<Vec<f32>>> {
        if features.len() != self.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.d_in,
                actual: features.len(),
            });
        }
        Ok(normalized_f32(&self.project(features)))
    }

    pub fn encode(&self, sentence: &str, table: &WordVectorTable) -> Result<Option<Vec<f32>>> {
        match embed_avg(sentence, table) {
            Some(x) => self.apply(&x),
            None => Ok(None),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string(self).expect("encoder serializes");
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let enc: Self = serde_json::from_str(&s).map_err(|e| Error::format(path, e.to_string()))?;
        if enc.w.len() != enc.d_in * enc.d_out {
            return Err(Error::format(path, "weight matrix size does not match dims"));
        }
        Ok(enc)
    }
}

fn project<T: Copy + Into<f64>>(w: &[f64], d_in: usize, d_out: usize, x: &[T]) -> Vec<f64> {
    (0..d_out)
        .map(|r| {
            w[r * d_in..(r + 1) * d_in]
                .iter()
                .zip(x)
                .map(|(&a, &b)| a * b.into())
                .sum()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient of cos(a, b) with respect to `a`.
fn dcos(a: &[f64], b: &[f64], na: f64, nb: f64, c: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&ai, &bi)| bi / (na * nb) - c * ai / (na * na))
        .collect()
}

fn add_outer(grad: &mut [f64], d_in: usize, g: &[f64], x: &[f64], scale: f64) {
    for (r, &gr) in g.iter().enumerate() {
        let s = gr * scale;
        if s == 0.0 {
            continue;
        }
        for (dst, &xc) in grad[r * d_in..(r + 1) * d_in].iter_mut().zip(x) {
            *dst += s * xc;
        }
    }
}

/// Hard negatives for every anchor in a batch under projection `w`.
pub fn mine_negatives(
    w: &[f64],
    d_in: usize,
    d_out: usize,
    anchors: &[Vec<f64>],
    positives: &[Vec<f64>],
) -> Result<Vec<usize>> {
    let u: Vec<Vec<f64>> = anchors.iter().map(|x| project(w, d_in, d_out, x)).collect();
    let v: Vec<Vec<f64>> = positives.iter().map(|y| project(w, d_in, d_out, y)).collect();
    u.iter().enumerate().map(|(i, ui)| hard_negative(ui, &v, i)).collect()
}

/// Mean batch triplet loss and its gradient with respect to `w`, for fixed
/// negative assignments. The hinge has subgradient 0 at the kink.
pub fn batch_loss_and_grad(
    w: &[f64],
    d_in: usize,
    d_out: usize,
    anchors: &[Vec<f64>],
    positives: &[Vec<f64>],
    negatives: &[usize],
    margin: f64,
) -> (f64, Vec<f64>) {
    let n = anchors.len();
    let u: Vec<Vec<f64>> = anchors.iter().map(|x| project(w, d_in, d_out, x)).collect();
    let v: Vec<Vec<f64>> = positives.iter().map(|y| project(w, d_in, d_out, y)).collect();
    let norms_u: Vec<f64> = u.iter().map(|a| dot(a, a).sqrt()).collect();
    let norms_v: Vec<f64> = v.iter().map(|a| dot(a, a).sqrt()).collect();
    let mut grad = vec![0.0; w.len()];
    let mut total = 0.0;
    let scale = 1.0 / n as f64;
    for i in 0..n {
        let j = negatives[i];
        let (nu, nv, nq) = (norms_u[i], norms_v[i], norms_v[j]);
        if nu == 0.0 || nv == 0.0 || nq == 0.0 {
            continue;
        }
        let cp = dot(&u[i], &v[i]) / (nu * nv);
        let cn = dot(&u[i], &v[j]) / (nu * nq);
        let l = margin - cp + cn;
        if l <= 0.0 {
            continue;
        }
        total += l;
        let gu_pos = dcos(&u[i], &v[i], nu, nv, cp);
        let gu_neg = dcos(&u[i], &v[j], nu, nq, cn);
        let gu: Vec<f64> = gu_neg.iter().zip(&gu_pos).map(|(a, b)| a - b).collect();
        let gv = dcos(&v[i], &u[i], nv, nu, cp);
        let gq = dcos(&v[j], &u[i], nq, nu, cn);
        add_outer(&mut grad, d_in, &gu, &anchors[i], scale);
        add_outer(&mut grad, d_in, &gv, &positives[i], -scale);
        add_outer(&mut grad, d_in, &gq, &positives[j], scale);
    }
    (total * scale, grad)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TripletTrainLog {
    pub usable_pairs: usize,
    pub skipped_pairs: usize,
    pub epoch_losses: Vec<f64>,
}

/// Embeds both sides of each pair with the word-average backend, dropping
/// pairs where either side is null.
pub fn pair_features(
    pairs: &[(String, String)],
    table: &WordVectorTable,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (a, b) in pairs {
        if let (Some(x), Some(y)) = (embed_avg(a, table), embed_avg(b, table)) {
            xs.push(x.iter().map(|&v| v as f64).collect());
            ys.push(y.iter().map(|&v| v as f64).collect());
        }
    }
    (xs, ys)
}

/// Mean triplet loss over consecutive batches, mining negatives in each.
pub fn mean_batch_loss(
    w: &[f64],
    d_in: usize,
    d_out: usize,
    anchors: &[Vec<f64>],
    positives: &[Vec<f64>],
    batch_size: usize,
    margin: f64,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for start in (0..anchors.len()).step_by(batch_size) {
        let end = (start + batch_size).min(anchors.len());
        if end - start < 2 {
            continue;
        }
        let (a, p) = (&anchors[start..end], &positives[start..end]);
        let negs = mine_negatives(w, d_in, d_out, a, p)?;
        let (l, _) = batch_loss_and_grad(w, d_in, d_out, a, p, &negs, margin);
        total += l * (end - start) as f64;
        count += end - start;
    }
    if count == 0 {
        return Err(Error::InvalidInput("no batch of size ≥ 2 to evaluate".into()));
    }
    Ok(total / count as f64)
}

/// Trains the projection with plain mini-batch SGD. Single-threaded and
/// deterministic for a given seed.
pub fn train_projection(
    pairs: &[(String, String)],
    table: &WordVectorTable,
    cfg: &TripletConfig,
) -> Result<(ProjectionEncoder, TripletTrainLog)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no paraphrase pairs".into()));
    }
    let (xs, ys) = pair_features(pairs, table);
    if xs.is_empty() {
        return Err(Error::InvalidInput("no pair embeds on both sides".into()));
    }
    if (xs.len() as f64) < 0.9 * pairs.len() as f64 {
        log::warn!(
            "only {} of {} pairs embed on both sides",
            xs.len(),
            pairs.len()
        );
    }
    let d_in = table.dim();
    let d_out = cfg.d_out.unwrap_or(d_in);
    let mut enc = if d_out == d_in {
        ProjectionEncoder::identity(d_in)
    } else {
        ProjectionEncoder::random(d_in, d_out, cfg.seed)
    };
    let mut log = TripletTrainLog {
        usable_pairs: xs.len(),
        skipped_pairs: pairs.len() - xs.len(),
        epoch_losses: Vec::with_capacity(cfg.epochs),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let a: Vec<Vec<f64>> = chunk.iter().map(|&i| xs[i].clone()).collect();
            let p: Vec<Vec<f64>> = chunk.iter().map(|&i| ys[i].clone()).collect();
            let negs = mine_negatives(&enc.w, d_in, d_out, &a, &p)?;
            let (l, g) = batch_loss_and_grad(&enc.w, d_in, d_out, &a, &p, &negs, cfg.margin);
            if !l.is_finite() {
                return Err(Error::Diverged(format!("triplet loss became {l}")));
            }
            for (w, gw) in enc.w.iter_mut().zip(&g) {
                *w -= cfg.learning_rate * gw;
            }
            epoch_total += l * chunk.len() as f64;
            seen += chunk.len();
        }
        log.epoch_losses
            .push(if seen == 0 { 0.0 } else { epoch_total / seen as f64 });
    }
    Ok((enc, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit2(a: f64) -> Vec<f32> {
        vec![a.cos() as f32, a.sin() as f32]
    }

    #[test]
    fn loss_examples() {
        let e1 = vec![1.0f32, 0.0];
        let e2 = vec![0.0f32, 1.0];
        let t = TrainingTriple {
            anchor: &e1,
            positive: &e1,
            negative: &e2,
        };
        assert_eq!(triplet_loss(&t, 0.4), 0.0);
        assert!((hinge(0.5, 0.5, 0.4) - 0.4).abs() < 1e-12);
        assert!((hinge(0.6, 0.5, 0.4) - 0.3).abs() < 1e-12);
        // same through vectors at the right angles
        let (p, n) = (unit2(0.6f64.acos()), unit2(-(0.5f64.acos())));
        let t = TrainingTriple {
            anchor: &e1,
            positive: &p,
            negative: &n,
        };
        assert!((triplet_loss(&t, 0.4) - 0.3).abs() < 1e-6);
    }

    #[test]
    fn hard_negative_picks_closest_other() {
        let anchor = vec![1.0f32, 0.0, 0.0];
        let near = vec![0.9f32, 0.1, 0.0];
        let batch = vec![anchor.clone(), vec![0.0, 1.0, 0.0], near];
        assert_eq!(hard_negative(&anchor, &batch, 0).unwrap(), 2);
    }

    #[test]
    fn hard_negative_tie_breaks_low() {
        let anchor = vec![1.0f32, 0.0, 0.0];
        let batch = vec![vec![0.0f32, 1.0, 0.0], anchor.clone(), vec![0.0, 0.0, 1.0]];
        assert_eq!(hard_negative(&anchor, &batch, 1).unwrap(), 0);
    }

    #[test]
    fn hard_negative_batch_of_two_and_one() {
        let a = vec![1.0f32, 0.0];
        assert_eq!(hard_negative(&a, &[a.clone(), vec![0.0, 1.0]], 0).unwrap(), 1);
        assert!(hard_negative(&a, std::slice::from_ref(&a), 0).is_err());
    }

    #[test]
    fn zero_epochs_with_identity_is_word_average() {
        let table = WordVectorTable::new(
            2,
            vec![("good".into(), vec![1.0, 0.0]), ("movie".into(), vec![0.0, 1.0])],
        )
        .unwrap();
        let pairs = vec![("good movie".to_string(), "good".to_string())];
        let cfg = TripletConfig {
            epochs: 0,
            ..TripletConfig::default()
        };
        let (enc, log) = train_projection(&pairs, &table, &cfg).unwrap();
        assert!(log.epoch_losses.is_empty());
        let e = enc.encode("good movie", &table).unwrap().unwrap();
        assert_eq!(e, embed_avg("good movie", &table).unwrap());
    }

    #[test]
    fn all_null_pairs_error() {
        let table = WordVectorTable::new(1, vec![("a".into(), vec![1.0])]).unwrap();
        let pairs = vec![("zz".to_string(), "qq".to_string())];
        assert!(train_projection(&pairs, &table, &TripletConfig::default()).is_err());
        assert!(train_projection(&[], &table, &TripletConfig::default()).is_err());
    }

    #[test]
    fn bad_config_rejected() {
        let c = TripletConfig {
            margin: 0.0,
            ..TripletConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn encoder_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("proj.json");
        let enc = ProjectionEncoder::random(3, 2, 9);
        enc.save(&p).unwrap();
        assert_eq!(ProjectionEncoder::load(&p).unwrap(), enc);
    }
}
