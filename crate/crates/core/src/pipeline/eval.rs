//! Accuracy and STS correlation metrics.

use serde::Serialize;

use crate::classifier::Classifier;
use crate::data::LabeledDataset;
use crate::embed::Encoder;
use crate::error::{Error, Result};
use crate::vecmath::cosine;

/// Embeds every text; unembeddable texts get the zero vector so that the
/// model still predicts from its biases and the denominator stays fixed.
pub fn embed_or_zero<'a, I: IntoIterator<Item = &'a str>>(encoder: &Encoder, texts: I) -> Vec<Vec<f32>> {
    texts
        .into_iter()
        .map(|t| encoder.encode(t).unwrap_or_else(|| vec![0.0; encoder.dim()]))
        .collect()
}

/// Fraction of test examples whose argmax prediction is the gold label.
pub fn eval_accuracy(model: &Classifier, test: &LabeledDataset, encoder: &Encoder) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    if model.num_classes() != test.num_classes() {
        return Err(Error::InvalidInput(format!(
            "model has {} classes, test set {}",
            model.num_classes(),
            test.num_classes()
        )));
    }
    let x = embed_or_zero(encoder, test.texts());
    Ok(crate::classifier::accuracy(model, &x, &test.label_ids()))
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n == 0 {
        return f64::NAN;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StsResult {
    pub pearson: f64,
    pub spearman: f64,
    pub pairs: usize,
    pub dropped_null: usize,
}

/// Correlates `cos(enc(s1), enc(s2))` with gold scores. Pairs where either
/// side embeds to null are dropped and counted.
pub fn eval_sts<S: AsRef<str>>(encoder: &Encoder, pairs: &[(S, S, f64)]) -> Result<StsResult> {
    let mut sims = Vec::with_capacity(pairs.len());
    let mut gold = Vec::with_capacity(pairs.len());
    for (a, b, g) in pairs {
        if !g.is_finite() {
            return Err(Error::InvalidInput(format!("gold score {g} is not finite")));
        }
        if let (Some(ea), Some(eb)) = (encoder.encode(a.as_ref()), encoder.encode(b.as_ref())) {
            sims.push(cosine(&ea, &eb));
            gold.push(*g);
        }
    }
    if sims.is_empty() {
        return Err(Error::InvalidInput("every STS pair has a null embedding".into()));
    }
    Ok(StsResult {
        pearson: pearson(&sims, &gold),
        spearman: spearman(&sims, &gold),
        pairs: sims.len(),
        dropped_null: pairs.len() - sims.len(),
    })
}
