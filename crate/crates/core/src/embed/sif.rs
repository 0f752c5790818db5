//! Smooth-inverse-frequency weighting with common component removal.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::words::WordVectorTable;
use crate::error::{Error, Result};
use crate::vecmath::normalized_f32;

pub const DEFAULT_SIF_A: f64 = 1e-3;
pub const MIN_FIT_SAMPLE: usize = 1000;
const POWER_ITERATIONS: usize = 100;
const POWER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SifParams {
    pub a: f64,
    /// Unit-norm top principal component of the fitting sample.
    pub pc: Vec<f64>,
    /// Rayleigh quotient of `pc` against the sample second-moment matrix.
    pub eigenvalue: f64,
}

/// Weighted mean `Σ a/(a+p(w)) v_w / n` over in-vocabulary tokens, before
/// normalization and component removal. `None` if every token is OOV.
pub fn sif_weighted_average(sentence: &str, table: &WordVectorTable, a: f64) -> Option<Vec<f64>> {
    let ids = table.token_ids(sentence);
    if ids.is_empty() {
        return None;
    }
    let mut acc = vec![0.0f64; table.dim()];
    for &id in &ids {
        let w = a / (a + table.prob(id));
        for (s, &x) in acc.iter_mut().zip(table.vector(id)) {
            *s += w * x as f64;
        }
    }
    let n = ids.len() as f64;
    acc.iter_mut().for_each(|s| *s /= n);
    Some(acc)
}

/// Removes the projection on `pc` and unit-normalizes.
pub fn remove_component(v: &[f64], pc: &[f64]) -> Option<Vec<f32>> {
    let proj: f64 = v.iter().zip(pc).map(|(x, p)| x * p).sum();
    let out: Vec<f64> = v.iter().zip(pc).map(|(x, p)| x - proj * p).collect();
    normalized_f32(&out)
}

pub fn embed_sif(sentence: &str, table: &WordVectorTable, params: &SifParams) -> Option<Vec<f32>> {
    let raw = sif_weighted_average(sentence, table, params.a)?;
    remove_component(&raw, &params.pc)
}

/// Top principal component (uncentered) of a sample of raw weighted-average
/// vectors, by power iteration on the second-moment matrix.
pub fn fit_sif<R: AsRef<[f64]>>(sample: &[R], a: f64) -> Result<SifParams> {
    if !(a > 0.0) {
        return Err(Error::InvalidInput(format!("SIF parameter a must be positive, got {a}")));
    }
    if sample.len() < MIN_FIT_SAMPLE {
        return Err(Error::InvalidInput(format!(
            "SIF fitting needs at least {MIN_FIT_SAMPLE} vectors, got {}",
            sample.len()
        )));
    }
    let dim = sample[0].as_ref().len();
    if dim == 0 || sample.iter().any(|v| v.as_ref().len() != dim) {
        return Err(Error::InvalidInput("sample vectors have inconsistent dimension".into()));
    }
    let mut m = vec![0.0f64; dim * dim];
    for v in sample {
        let v = v.as_ref();
        for i in 0..dim {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            let row = &mut m[i * dim..(i + 1) * dim];
            for (r, &vj) in row.iter_mut().zip(v) {
                *r += vi * vj;
            }
        }
    }
    let n = sample.len() as f64;
    m.iter_mut().for_each(|x| *x /= n);
    let trace: f64 = (0..dim).map(|i| m[i * dim + i]).sum();
    if !(trace > 1e-300) {
        return Err(Error::Degenerate("sample has zero second moment".into()));
    }
    let (pc, eigenvalue) = power_iteration(&m, dim);
    Ok(SifParams { a, pc, eigenvalue })
}

fn matvec(m: &[f64], dim: usize, b: &[f64]) -> Vec<f64> {
    (0..dim)
        .map(|i| m[i * dim..(i + 1) * dim].iter().zip(b).map(|(x, y)| x * y).sum())
        .collect()
}

fn unit(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    n
}

fn power_iteration(m: &[f64], dim: usize) -> (Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut b: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    unit(&mut b);
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let mut next = matvec(m, dim, &b);
        let n = unit(&mut next);
        let change = next.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        b = next;
        let converged = (n - lambda).abs() <= POWER_TOLERANCE * n.abs() && change < 1e-6;
        lambda = n;
        if converged {
            break;
        }
    }
    let mb = matvec(m, dim, &b);
    let rayleigh = mb.iter().zip(&b).map(|(x, y)| x * y).sum();
    (b, rayleigh)
}
