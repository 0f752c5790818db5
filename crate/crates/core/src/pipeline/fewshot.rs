//! Few-shot protocol: several small train sets, many seeds per set, and a
//! top-by-validation score per set.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::KvConfig;
use super::eval::embed_or_zero;
use super::report::{ExperimentReport, FewShotSet, FewShotSummary, MeanStd, Provenance, SeedResult, Timings};
use super::{embed_train, leakage_count, train_targets, LabelKind, PreparedBank};
use crate::augment::class_quotas;
use crate::bank::normalize;
use crate::classifier::{self, Architecture, LossKind, SyntheticExample, Targets, TrainSpec};
use crate::data::LabeledDataset;
use crate::embed::Encoder;
use crate::error::{Error, Result};
use crate::queries::{build_queries, retrieve_pool, QueryMode};

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotSpec {
    pub n_per_class: usize,
    pub n_train_sets: usize,
    pub n_valid: usize,
    pub n_seeds: usize,
    pub top_models: usize,
    pub epochs: usize,
    pub pool_factor: usize,
    pub augment_factor: usize,
    pub label_kind: LabelKind,
    pub include_ground_truth: bool,
    pub query_mode: QueryMode,
    /// Seed for train-set, validation and pool sampling.
    pub sample_seed: u64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for FewShotSpec {
    fn default() -> Self {
        Self {
            n_per_class: 20,
            n_train_sets: 5,
            n_valid: 200,
            n_seeds: 10,
            top_models: 3,
            epochs: 50,
            pool_factor: 1000,
            augment_factor: 10,
            label_kind: LabelKind::Discrete,
            include_ground_truth: true,
            query_mode: QueryMode::LabelAverage,
            sample_seed: 0,
            hidden: vec![256],
            batch_size: 32,
            learning_rate: 0.1,
        }
    }
}

impl FewShotSpec {
    pub fn validate(&self) -> Result<()> {
        if self.top_models == 0 || self.top_models > self.n_seeds {
            return Err(Error::Config(format!(
                "top_models must be in 1..={} (n_seeds)",
                self.n_seeds
            )));
        }
        if self.n_per_class == 0 || self.n_train_sets == 0 || self.epochs == 0 || self.n_valid == 0 {
            return Err(Error::Config("few-shot sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let s = Self {
            n_per_class: kv.get_or("n_per_class", d.n_per_class)?,
            n_train_sets: kv.get_or("n_train_sets", d.n_train_sets)?,
            n_valid: kv.get_or("n_valid", d.n_valid)?,
            n_seeds: kv.get_or("n_seeds", d.n_seeds)?,
            top_models: kv.get_or("top_models", d.top_models)?,
            epochs: kv.get_or("epochs", d.epochs)?,
            pool_factor: kv.get_or("pool_factor", d.pool_factor)?,
            augment_factor: kv.get_or("augment_factor", d.augment_factor)?,
            label_kind: kv.get_or("label_kind", d.label_kind)?,
            include_ground_truth: kv.get_or("include_ground_truth", d.include_ground_truth)?,
            query_mode: kv.get_or("query_mode", d.query_mode)?,
            sample_seed: kv.get_or("sample_seed", d.sample_seed)?,
            hidden: kv.get_list("hidden")?.unwrap_or(d.hidden),
            batch_size: kv.get_or("batch", d.batch_size)?,
            learning_rate: kv.get_or("lr", d.learning_rate)?,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn to_config_text(&self) -> String {
        format!(
            "n_per_class = {}\nn_train_sets = {}\nn_valid = {}\nn_seeds = {}\ntop_models = {}\n\
             epochs = {}\npool_factor = {}\naugment_factor = {}\nlabel_kind = {}\n\
             include_ground_truth = {}\nquery_mode = {}\nsample_seed = {}\nhidden = {}\nbatch = {}\nlr = {}\n",
            self.n_per_class,
            self.n_train_sets,
            self.n_valid,
            self.n_seeds,
            self.top_models,
            self.epochs,
            self.pool_factor,
            self.augment_factor,
            self.label_kind,
            self.include_ground_truth,
            self.query_mode,
            self.sample_seed,
            self.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","),
            self.batch_size,
            self.learning_rate,
        )
    }

    fn train_spec(&self, seed: u64, loss: LossKind) -> TrainSpec {
        TrainSpec {
            loss,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
        }
    }
}

/// Mean test accuracy of the `top` runs with the best validation accuracy.
/// Runs are `(seed, valid, test)`; validation ties go to the lower seed.
pub fn top_models_score(runs: &[(u64, f64, f64)], top: usize) -> f64 {
    let mut sorted = runs.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let k = top.min(sorted.len()).max(1);
    sorted[..k].iter().map(|r| r.2).sum::<f64>() / k as f64
}

/// Label-stratified sample of `n` examples: per-class sizes follow the
/// dataset's label proportions with largest-remainder rounding.
pub fn stratified_sample(data: &LabeledDataset, n: usize, seed: u64) -> Result<LabeledDataset> {
    if n >= data.len() {
        if n > data.len() {
            log::warn!("asked for {n} examples, only {} available", data.len());
        }
        return Ok(data.clone());
    }
    let quotas = class_quotas(&data.counts(), n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = Vec::with_capacity(n);
    for (c, &q) in quotas.iter().enumerate() {
        let mut of_class: Vec<usize> = (0..data.len()).filter(|&i| data.examples()[i].1 == c).collect();
        of_class.shuffle(&mut rng);
        idx.extend(of_class.into_iter().take(q));
    }
    idx.sort_unstable();
    Ok(data.subset(&idx))
}

/// `sets` train sets of `per_class` examples per class. Each class's
/// examples are shuffled once and dealt out in consecutive chunks, so sets
/// are disjoint when there are enough examples and wrap around otherwise.
fn sample_train_sets(data: &LabeledDataset, per_class: usize, sets: usize, seed: u64) -> Result<Vec<LabeledDataset>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class = Vec::with_capacity(data.num_classes());
    for c in 0..data.num_classes() {
        let mut of_class: Vec<usize> = (0..data.len()).filter(|&i| data.examples()[i].1 == c).collect();
        if of_class.len() < per_class {
            return Err(Error::InvalidInput(format!(
                "class {:?} has {} examples, {per_class} needed",
                data.labels()[c],
                of_class.len()
            )));
        }
        if of_class.len() < per_class * sets {
            log::warn!("class {:?}: few-shot train sets will overlap", data.labels()[c]);
        }
        of_class.shuffle(&mut rng);
        by_class.push(of_class);
    }
    Ok((0..sets)
        .map(|s| {
            let mut idx: Vec<usize> = by_class
                .iter()
                .flat_map(|ids| (0..per_class).map(move |j| ids[(s * per_class + j) % ids.len()]))
                .collect();
            idx.sort_unstable();
            data.subset(&idx)
        })
        .collect())
}

struct SetOutcome {
    set: FewShotSet,
    runs: Vec<SeedResult>,
    synthetic: usize,
}

#[allow(clippy::too_many_arguments)]
fn run_set(
    s: usize,
    train: &LabeledDataset,
    valid: (&[Vec<f32>], &[usize]),
    test: (&[Vec<f32>], &[usize]),
    test_norm: &HashSet<String>,
    bank: &PreparedBank,
    encoder: &Encoder,
    spec: &FewShotSpec,
) -> Result<SetOutcome> {
    let (train_x, train_y) = embed_train(train, encoder)?;
    let n = train.len();
    let arch = Architecture::new(encoder.dim(), spec.hidden.clone(), train.num_classes());

    let t0 = Instant::now();
    let qs = build_queries(train, spec.query_mode, encoder)?;
    let target = spec.pool_factor * n;
    let train_norm: HashSet<String> = train.texts().map(normalize).collect();
    let mut pool: Vec<u32> = retrieve_pool(&qs, bank.index(), target.div_ceil(qs.len()))?
        .into_iter()
        .map(|e| e.id)
        .filter(|&id| !train_norm.contains(&normalize(bank.text(id))))
        .collect();
    pool.truncate(target);
    let retrieve_secs = t0.elapsed().as_secs_f64();
    let n_aug = spec.augment_factor * n;
    if pool.len() < n_aug {
        log::warn!("pool has {} sentences, fewer than {n_aug}; using all", pool.len());
    }

    let runs: Vec<Result<(SeedResult, (u64, f64, f64), (u64, f64, f64))>> = (0..spec.n_seeds as u64)
        .into_par_iter()
        .map(|seed| {
            let t0 = Instant::now();
            let mut timings = Timings {
                retrieve_secs,
                ..Timings::default()
            };
            let (teacher, tsum) = classifier::train(
                &arch,
                &train_x,
                Targets::Hard(&train_y),
                &spec.train_spec(seed, LossKind::CrossEntropy),
            )?;
            timings.teacher_secs = t0.elapsed().as_secs_f64();

            let t1 = Instant::now();
            let mut rng = ChaCha8Rng::seed_from_u64(spec.sample_seed ^ ((s as u64) << 32) ^ seed);
            let mut picked: Vec<u32> = pool.choose_multiple(&mut rng, n_aug.min(pool.len())).copied().collect();
            picked.sort_unstable();
            let mut examples = Vec::with_capacity(picked.len() + n);
            let mut features = Vec::with_capacity(picked.len() + n);
            let mut dropped_null = 0;
            for id in &picked {
                match bank.index().row(*id as usize) {
                    Some(x) => {
                        examples.push(SyntheticExample::new(Some(*id), bank.text(*id).to_string(), teacher.forward(&x)?));
                        features.push(x);
                    }
                    None => dropped_null += 1,
                }
            }
            let retrieved = examples.len();
            if spec.include_ground_truth {
                for ((text, _), x) in train.examples().iter().zip(&train_x) {
                    examples.push(SyntheticExample::new(None, text.clone(), teacher.forward(x)?));
                    features.push(x.clone());
                }
            }
            timings.annotate_secs = t1.elapsed().as_secs_f64();
            let leaked = leakage_count(&examples.iter().map(|e| e.text.as_str()).collect::<Vec<_>>(), test_norm);
            if leaked > 0 {
                return Err(Error::Leakage { count: leaked });
            }

            let t2 = Instant::now();
            let (student, student_loss) = train_targets(
                &features,
                &examples,
                spec.label_kind,
                &arch,
                &spec.train_spec(seed, LossKind::CrossEntropy),
            )?;
            timings.student_secs = t2.elapsed().as_secs_f64();
            timings.total_secs = t0.elapsed().as_secs_f64();

            let t_val = classifier::accuracy(&teacher, valid.0, valid.1);
            let t_test = classifier::accuracy(&teacher, test.0, test.1);
            let s_val = classifier::accuracy(&student, valid.0, valid.1);
            let s_test = classifier::accuracy(&student, test.0, test.1);
            let result = SeedResult {
                seed,
                teacher_accuracy: t_test,
                student_accuracy: s_test,
                teacher_final_loss: tsum.final_loss,
                student_final_loss: student_loss,
                provenance: Provenance {
                    candidate_pool: pool.len(),
                    dropped_null,
                    excluded_train_overlap: 0,
                    quota_total: n_aug,
                    filtered: retrieved,
                    ground_truth_added: examples.len() - retrieved,
                    student_train_size: examples.len(),
                    shortfalls: Vec::new(),
                },
                timings,
            };
            Ok((result, (seed, t_val, t_test), (seed, s_val, s_test)))
        })
        .collect();

    let mut seed_results = Vec::with_capacity(runs.len());
    let mut baseline_runs = Vec::with_capacity(runs.len());
    let mut self_trained_runs = Vec::with_capacity(runs.len());
    for r in runs {
        let (res, b, st) = r?;
        seed_results.push(res);
        baseline_runs.push(b);
        self_trained_runs.push(st);
    }
    let synthetic = seed_results.iter().map(|r| r.provenance.student_train_size).sum();
    Ok(SetOutcome {
        set: FewShotSet {
            train_set: s,
            train_size: n,
            baseline_score: top_models_score(&baseline_runs, spec.top_models),
            self_trained_score: top_models_score(&self_trained_runs, spec.top_models),
            baseline_runs,
            self_trained_runs,
        },
        runs: seed_results,
        synthetic,
    })
}

/// Runs the few-shot protocol. Baseline scores come from the teachers,
/// self-trained scores from students trained on teacher-labeled retrieved
/// sentences (plus the teacher-labeled train set when configured).
pub fn run_few_shot(
    full_train: &LabeledDataset,
    full_valid: &LabeledDataset,
    test: &LabeledDataset,
    bank: &PreparedBank,
    encoder: &Encoder,
    spec: &FewShotSpec,
    config_text: Option<&str>,
) -> Result<ExperimentReport> {
    spec.validate()?;
    if full_train.labels() != test.labels() || full_valid.labels() != test.labels() {
        return Err(Error::InvalidInput("train, validation and test label sets differ".into()));
    }
    let sets = sample_train_sets(full_train, spec.n_per_class, spec.n_train_sets, spec.sample_seed)?;
    let valid = stratified_sample(full_valid, spec.n_valid, spec.sample_seed.wrapping_add(1))?;
    let valid_x = embed_or_zero(encoder, valid.texts());
    let valid_y = valid.label_ids();
    let test_x = embed_or_zero(encoder, test.texts());
    let test_y = test.label_ids();
    let test_norm: HashSet<String> = test.texts().map(normalize).collect();

    let snapshot = config_text.map_or_else(|| spec.to_config_text(), str::to_string);
    let mut report = ExperimentReport::new("few-shot", snapshot, bank.stats().clone());
    report.timings.prepare_secs = bank.prepare_secs;
    report.leakage.test_size = test.len();

    let outcomes: Vec<Result<SetOutcome>> = sets
        .par_iter()
        .enumerate()
        .map(|(s, train)| {
            run_set(
                s,
                train,
                (&valid_x, &valid_y),
                (&test_x, &test_y),
                &test_norm,
                bank,
                encoder,
                spec,
            )
        })
        .collect();
    let mut summary_sets = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        match o {
            Ok(o) => {
                report.leakage.synthetic_checked += o.synthetic;
                report.per_seed.extend(o.runs);
                summary_sets.push(o.set);
            }
            Err(e) => {
                if let Error::Leakage { count } = e {
                    report.leakage.overlaps += count;
                }
                if report.is_ok() {
                    report.fail(&e);
                }
            }
        }
    }
    report.finalize();
    let b: Vec<f64> = summary_sets.iter().map(|s| s.baseline_score).collect();
    let st: Vec<f64> = summary_sets.iter().map(|s| s.self_trained_score).collect();
    report.few_shot = Some(FewShotSummary {
        baseline: MeanStd::of(&b),
        self_trained: MeanStd::of(&st),
        sets: summary_sets,
    });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_models_picks_by_validation() {
        let runs = [(0, 0.9, 0.1), (1, 0.5, 0.9), (2, 0.9, 0.3), (3, 0.7, 0.5)];
        assert!((top_models_score(&runs, 2) - 0.2).abs() < 1e-15);
        assert_eq!(top_models_score(&runs[1..2], 1), 0.9);
    }

    #[test]
    fn stratified_follows_label_ratio() {
        let ds = LabeledDataset::from_named((0..100).map(|i| (if i < 70 { "a" } else { "b" }, format!("t{i}"))));
        let s = stratified_sample(&ds, 10, 1).unwrap();
        assert_eq!(s.counts(), vec![7, 3]);
        assert_eq!(stratified_sample(&ds, 500, 1).unwrap().len(), 100);
    }

    #[test]
    fn train_sets_disjoint_when_possible() {
        let ds = LabeledDataset::from_named((0..40).map(|i| (if i % 2 == 0 { "a" } else { "b" }, format!("t{i}"))));
        let sets = sample_train_sets(&ds, 4, 5, 0).unwrap();
        let mut seen = HashSet::new();
        for s in &sets {
            assert_eq!(s.counts(), vec![4, 4]);
            for t in s.texts() {
                assert!(seen.insert(t.to_string()));
            }
        }
        assert!(sample_train_sets(&ds, 30, 1, 0).is_err());
    }

    #[test]
    fn spec_validation() {
        let bad = FewShotSpec {
            top_models: 11,
            ..FewShotSpec::default()
        };
        assert!(bad.validate().is_err());
        let kv = KvConfig::parse(&FewShotSpec::default().to_config_text(), "t").unwrap();
        assert_eq!(FewShotSpec::from_kv(&kv).unwrap(), FewShotSpec::default());
        kv.check_unused().unwrap();
    }
}
