//! Mini-batch SGD on cross-entropy (hard labels) or KL divergence (soft labels).

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{softmax, Architecture, Classifier, SoftLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    CrossEntropy,
    Kl,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" | "cross_entropy" => Ok(LossKind::CrossEntropy),
            "kl" => Ok(LossKind::Kl),
            other => Err(Error::Config(format!("unknown loss {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            loss: LossKind::CrossEntropy,
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Hard(&'a [usize]),
    Soft(&'a [SoftLabel]),
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Hard(t) => t.len(),
            Targets::Soft(t) => t.len(),
        }
    }

    /// Adds `p − t` (the logit gradient shared by both losses) into `g` and
    /// returns the example's loss.
    fn logit_grad(&self, i: usize, p: &[f64], g: &mut [f64]) -> f64 {
        g.copy_from_slice(p);
        match self {
            Targets::Hard(t) => {
                g[t[i]] -= 1.0;
                -p[t[i]].ln()
            }
            Targets::Soft(t) => {
                let mut loss = 0.0;
                for (c, &tc) in t[i].probs().iter().enumerate() {
                    g[c] -= tc;
                    if tc > 0.0 {
                        loss += tc * (tc / p[c]).ln();
                    }
                }
                loss
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
}

/// Accumulates the gradient of the summed loss over `idx` into `grad`
/// (layout of [`Classifier::params`]) and returns the summed loss.
fn accumulate_grad(
    model: &Classifier,
    features: &[Vec<f32>],
    targets: Targets<'_>,
    idx: &[usize],
    grad: &mut [f64],
) -> f64 {
    let layers = model.layers();
    let mut offsets = Vec::with_capacity(layers.len());
    let mut at = 0;
    for l in layers {
        offsets.push(at);
        at += l.w.len() + l.b.len();
    }
    let mut total = 0.0;
    let mut delta = vec![0.0; model.num_classes()];
    for &i in idx {
        let acts = model.activations(&features[i]);
        let p = softmax(acts.last().expect("logits"));
        total += targets.logit_grad(i, &p, &mut delta);
        let mut d = delta.clone();
        for li in (0..layers.len()).rev() {
            let l = &layers[li];
            let h = &acts[li];
            let off = offsets[li];
            let (gw, gb) = grad[off..off + l.w.len() + l.b.len()].split_at_mut(l.w.len());
            for (o, &dz) in d.iter().enumerate() {
                if dz == 0.0 {
                    continue;
                }
                gb[o] += dz;
                for (g, &hv) in gw[o * l.in_dim..(o + 1) * l.in_dim].iter_mut().zip(h) {
                    *g += dz * hv;
                }
            }
            if li == 0 {
                break;
            }
            let mut prev = vec![0.0; l.in_dim];
            for (o, &dz) in d.iter().enumerate() {
                if dz == 0.0 {
                    continue;
                }
                for (pv, &w) in prev.iter_mut().zip(&l.w[o * l.in_dim..(o + 1) * l.in_dim]) {
                    *pv += dz * w;
                }
            }
            // hidden activations are tanh outputs
            for (pv, &hv) in prev.iter_mut().zip(h) {
                *pv *= 1.0 - hv * hv;
            }
            d = prev;
        }
    }
    total
}

/// Mean loss and its gradient over the given examples.
pub fn loss_and_grad(
    model: &Classifier,
    features: &[Vec<f32>],
    targets: Targets<'_>,
    idx: &[usize],
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; model.parameter_count()];
    let total = accumulate_grad(model, features, targets, idx, &mut grad);
    let n = idx.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (total / n, grad)
}

pub fn mean_loss(model: &Classifier, features: &[Vec<f32>], targets: Targets<'_>) -> f64 {
    let idx: Vec<usize> = (0..features.len()).collect();
    let mut scratch = vec![0.0; model.num_classes()];
    let total: f64 = idx
        .iter()
        .map(|&i| {
            let p = softmax(&model.activations(&features[i]).pop().expect("logits"));
            targets.logit_grad(i, &p, &mut scratch)
        })
        .sum();
    total / features.len().max(1) as f64
}

/// Trains a freshly initialized model (seeded by `spec.seed`).
pub fn train(
    arch: &Architecture,
    features: &[Vec<f32>],
    targets: Targets<'_>,
    spec: &TrainSpec,
) -> Result<(Classifier, TrainSummary)> {
    let model = Classifier::new(arch.clone(), spec.seed);
    train_from(model, features, targets, spec)
}

/// Continues training an existing model.
pub fn train_from(
    mut model: Classifier,
    features: &[Vec<f32>],
    targets: Targets<'_>,
    spec: &TrainSpec,
) -> Result<(Classifier, TrainSummary)> {
    if features.is_empty() {
        return Err(Error::InvalidInput("no training examples".into()));
    }
    if spec.epochs == 0 || spec.batch_size == 0 {
        return Err(Error::Config("epochs and batch size must be at least 1".into()));
    }
    if targets.len() != features.len() {
        return Err(Error::InvalidInput(format!(
            "{} targets for {} examples",
            targets.len(),
            features.len()
        )));
    }
    match (spec.loss, targets) {
        (LossKind::CrossEntropy, Targets::Hard(t)) => {
            if let Some(&bad) = t.iter().find(|&&c| c >= model.num_classes()) {
                return Err(Error::InvalidInput(format!("label {bad} out of range")));
            }
        }
        (LossKind::Kl, Targets::Soft(t)) => {
            if t.iter().any(|s| s.len() != model.num_classes()) {
                return Err(Error::InvalidInput("soft label width mismatch".into()));
            }
        }
        _ => {
            return Err(Error::Config(
                "cross-entropy needs hard labels and KL needs soft labels".into(),
            ))
        }
    }
    if let Some(f) = features.iter().find(|f| f.len() != model.input_dim()) {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            actual: f.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5e_ed0f_7a1e);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut epoch_losses = Vec::with_capacity(spec.epochs);
    let mut grad = vec![0.0; model.parameter_count()];
    for epoch in 0..spec.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(spec.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = accumulate_grad(&model, features, targets, batch, &mut grad);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "loss is {loss} at epoch {epoch}, batch {b}; lower the learning rate"
                )));
            }
            total += loss;
            let step = spec.learning_rate / batch.len() as f64;
            let mut at = 0;
            for l in model.layers_mut() {
                for w in l.w.iter_mut().chain(l.b.iter_mut()) {
                    *w -= step * grad[at];
                    at += 1;
                }
            }
        }
        epoch_losses.push(total / features.len() as f64);
    }
    let final_loss = mean_loss(&model, features, targets);
    if !final_loss.is_finite() {
        return Err(Error::Diverged(format!("final loss is {final_loss}")));
    }
    Ok((
        model,
        TrainSummary {
            epoch_losses,
            final_loss,
        },
    ))
}

/// Fraction of examples whose argmax matches the label.
pub fn accuracy(model: &Classifier, features: &[Vec<f32>], labels: &[usize]) -> f64 {
    if features.is_empty() {
        return f64::NAN;
    }
    let correct = features
        .iter()
        .zip(labels)
        .filter(|(x, &y)| model.forward(x).map(|p| p.argmax() == y).unwrap_or(false))
        .count();
    correct as f64 / features.len() as f64
}
