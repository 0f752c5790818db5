//! Reference implementations shared by the integration tests.

#![allow(dead_code)]

use bankaug::classifier::{loss_and_grad, mean_loss, Architecture, Classifier, SoftLabel, Targets};
use bankaug::embed::{batch_loss_and_grad, mine_negatives};
use bankaug::index::Hit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const FD_STEP: f64 = 1e-5;

/// ‖a − b‖ / max(‖a‖, ‖b‖).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom < 1e-12 {
        diff
    } else {
        diff / denom
    }
}

/// Central differences of `f` at `p`.
pub fn numeric_grad<F: FnMut(&[f64]) -> f64>(mut f: F, p: &[f64]) -> Vec<f64> {
    let mut q = p.to_vec();
    (0..p.len())
        .map(|i| {
            q[i] = p[i] + FD_STEP;
            let up = f(&q);
            q[i] = p[i] - FD_STEP;
            let down = f(&q);
            q[i] = p[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn random_model(seed: u64) -> (Classifier, Vec<Vec<f32>>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(2..6);
    let c = rng.gen_range(2..5);
    let hidden = match seed % 3 {
        0 => vec![],
        1 => vec![rng.gen_range(2..6)],
        _ => vec![rng.gen_range(2..5), rng.gen_range(2..5)],
    };
    let mut model = Classifier::new(Architecture::new(d, hidden, c), seed);
    // move away from the initialization so hidden units are not all near zero
    let p: Vec<f64> = model.params().iter().map(|w| w + rng.gen_range(-0.5..0.5)).collect();
    model.set_params(&p);
    let x = (0..6).map(|_| (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect();
    (model, x, rng)
}

fn model_error(model: &Classifier, x: &[Vec<f32>], targets: Targets<'_>) -> f64 {
    let idx: Vec<usize> = (0..x.len()).collect();
    let (_, analytic) = loss_and_grad(model, x, targets, &idx);
    let mut probe = model.clone();
    let numeric = numeric_grad(
        |p| {
            probe.set_params(p);
            mean_loss(&probe, x, targets)
        },
        &model.params(),
    );
    relative_error(&analytic, &numeric)
}

/// Relative gradient errors of the cross-entropy loss on seeded random MLPs.
pub fn cross_entropy_errors(instances: u64) -> Vec<f64> {
    (0..instances)
        .map(|seed| {
            let (model, x, mut rng) = random_model(seed);
            let y: Vec<usize> = x.iter().map(|_| rng.gen_range(0..model.num_classes())).collect();
            model_error(&model, &x, Targets::Hard(&y))
        })
        .collect()
}

/// Same for the KL loss against random soft targets.
pub fn kl_errors(instances: u64) -> Vec<f64> {
    (0..instances)
        .map(|seed| {
            let (model, x, mut rng) = random_model(100 + seed);
            let c = model.num_classes();
            let t: Vec<SoftLabel> = x
                .iter()
                .map(|_| {
                    let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(0.05..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    SoftLabel::new(raw.iter().map(|v| v / s).collect()).unwrap()
                })
                .collect();
            model_error(&model, &x, Targets::Soft(&t))
        })
        .collect()
}

/// Triplet-loss gradient errors w.r.t. the projection, skipping instances
/// whose batch loss is exactly zero.
pub fn triplet_errors(instances: u64) -> Vec<f64> {
    let margin = 0.4;
    let mut out = Vec::new();
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let d_in = rng.gen_range(3..7);
        let d_out = rng.gen_range(2..6);
        let n = rng.gen_range(3..7);
        let w: Vec<f64> = (0..d_in * d_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let vecs = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..d_in).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
        };
        let a = vecs(&mut rng);
        let p = vecs(&mut rng);
        let neg = mine_negatives(&w, d_in, d_out, &a, &p).unwrap();
        let (loss, analytic) = batch_loss_and_grad(&w, d_in, d_out, &a, &p, &neg, margin);
        if loss == 0.0 {
            continue;
        }
        let numeric = numeric_grad(|w| batch_loss_and_grad(w, d_in, d_out, &a, &p, &neg, margin).0, &w);
        out.push(relative_error(&analytic, &numeric));
    }
    out
}

/// Seeded unit vectors; every `null_every`-th row is `None` when nonzero.
pub fn random_unit_rows(n: usize, dim: usize, seed: u64, null_every: usize) -> Vec<Option<Vec<f32>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            if null_every > 0 && i % null_every == null_every - 1 {
                return None;
            }
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            Some(v.iter().map(|x| (x / norm) as f32).collect())
        })
        .collect()
}

/// O(n·q) scan: dot products summed in f64 in index order and rounded to
/// f32, sorted by score then id.
pub fn naive_top_k(rows: &[Option<Vec<f32>>], query: &[f32], k: usize) -> Vec<Hit> {
    let mut all: Vec<Hit> = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            r.as_ref().map(|r| Hit {
                id: i as u32,
                score: r.iter().zip(query).map(|(a, b)| *a as f64 * *b as f64).sum::<f64>() as f32,
            })
        })
        .collect();
    all.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    all.truncate(k);
    all
}

/// Pearson correlation by the textbook formula in float64.
pub fn reference_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}
