//! End-to-end protocols: self-training, knowledge distillation and few-shot
//! learning, plus evaluation and synthetic benchmark tasks.

pub mod config;
mod eval;
mod fewshot;
pub mod presets;
mod report;
mod synth;

use std::collections::{HashMap, HashSet};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use eval::{average_ranks, embed_or_zero, eval_accuracy, eval_sts, pearson, spearman, StsResult};
pub use fewshot::{run_few_shot, stratified_sample, top_models_score, FewShotSpec};
pub use report::{
    BankStats, ExperimentReport, FewShotSet, FewShotSummary, LeakageCheck, MeanStd, Provenance,
    RunStatus, SeedResult, Timings,
};
pub use synth::{generate_synthetic_task, SyntheticLanguage, SyntheticTask, SyntheticTaskSpec};

use self::config::{parse_auto, KvConfig};
use crate::augment::{choose_multiplier, class_quotas, filter_synthetic, AugmentConfig};
use crate::bank::{build_bank, normalize, remove_overlap, SentenceBank};
use crate::classifier::{
    self, Architecture, Classifier, LossKind, SoftLabel, SyntheticExample, Targets, TrainSpec,
};
use crate::data::LabeledDataset;
use crate::embed::Encoder;
use crate::error::{Error, Result};
use crate::index::FlatIndex;
use crate::queries::{build_queries, default_per_query_k, retrieve_pool, QueryMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelKind {
    /// Teacher class probabilities, trained with KL divergence.
    Soft,
    /// Teacher argmax, trained with cross-entropy.
    Discrete,
}

impl FromStr for LabelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" | "continuous" => Ok(LabelKind::Soft),
            "discrete" | "hard" => Ok(LabelKind::Discrete),
            other => Err(Error::Config(format!("unknown label kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for LabelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LabelKind::Soft => "soft",
            LabelKind::Discrete => "discrete",
        })
    }
}

/// Where distillation candidates come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnlabeledSource<'a> {
    /// Nearest bank sentences to the task queries.
    Retrieved,
    /// A seeded uniform sample of the bank.
    Random,
    /// A caller-supplied in-domain pool, sampled uniformly.
    GroundTruth(&'a [String]),
}

impl UnlabeledSource<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            UnlabeledSource::Retrieved => "retrieved",
            UnlabeledSource::Random => "random",
            UnlabeledSource::GroundTruth(_) => "ground_truth",
        }
    }
}

/// A deduplicated, test-decontaminated and embedded bank ready for retrieval.
#[derive(Debug)]
pub struct PreparedBank {
    texts: Vec<String>,
    index: FlatIndex,
    stats: BankStats,
    prepare_secs: f64,
}

impl PreparedBank {
    /// Builds a bank from raw sentences. `limit` keeps only the first
    /// sentences of the stream (bank-size ablation).
    pub fn from_texts<S: AsRef<str>, T: AsRef<str>>(
        sentences: &[S],
        source: &str,
        test_texts: &[T],
        encoder: &Encoder,
        quantized: bool,
        limit: Option<usize>,
    ) -> Result<Self> {
        let n = limit.unwrap_or(sentences.len()).min(sentences.len());
        let (bank, _) = build_bank(sentences[..n].iter().map(|s| s.as_ref()), source);
        Self::from_bank(bank, test_texts, encoder, quantized, None)
    }

    /// Uses an existing bank, embedding it with `encoder` unless it already
    /// carries vectors of the encoder's dimension.
    pub fn from_bank<T: AsRef<str>>(
        mut bank: SentenceBank,
        test_texts: &[T],
        encoder: &Encoder,
        quantized: bool,
        limit: Option<usize>,
    ) -> Result<Self> {
        let start = Instant::now();
        if let Some(l) = limit.filter(|&l| l < bank.len()) {
            let keep: Vec<&str> = bank.texts().take(l).collect();
            let (mut small, _) = build_bank(keep, &bank.meta().source);
            if let Some(v) = bank.take_vectors() {
                let ids: Vec<usize> = (0..l).collect();
                small.set_vectors(v.select_rows(&ids))?;
            }
            bank = small;
        }
        if let Some(v) = bank.vectors() {
            if v.dim() != encoder.dim() {
                return Err(Error::DimensionMismatch {
                    expected: encoder.dim(),
                    actual: v.dim(),
                });
            }
        }
        let before = bank.len();
        let (mut bank, _) = remove_overlap(bank, test_texts);
        let removed = before - bank.len();
        let vectors = match bank.take_vectors() {
            Some(v) => v,
            None => {
                let texts: Vec<&str> = bank.texts().collect();
                encoder.embed_all(&texts)
            }
        };
        let null_rows = vectors.null_count();
        let index = FlatIndex::from_matrix(vectors, quantized)?;
        let texts: Vec<String> = bank.texts().map(str::to_string).collect();
        log::info!(
            "bank ready: {} sentences, {removed} removed as test overlap, {null_rows} null",
            texts.len()
        );
        Ok(Self {
            stats: BankStats {
                bank_size: texts.len(),
                removed_test_overlap: removed,
                null_rows,
                quantized: index.is_quantized(),
            },
            texts,
            index,
            prepare_secs: start.elapsed().as_secs_f64(),
        })
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn text(&self, id: u32) -> &str {
        &self.texts[id as usize]
    }

    pub fn index(&self) -> &FlatIndex {
        &self.index
    }

    pub fn stats(&self) -> &BankStats {
        &self.stats
    }
}

/// Settings shared by the self-training and distillation protocols.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub query_mode: QueryMode,
    pub label_kind: LabelKind,
    pub augment: AugmentConfig,
    /// Hits per query; `None` sizes the pool from the augmentation budget.
    pub per_query_k: Option<usize>,
    pub teacher_hidden: Vec<usize>,
    pub teacher: TrainSpec,
    /// `None`: same as the teacher for self-training, linear for distillation.
    pub student_hidden: Option<Vec<usize>>,
    pub student: TrainSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            query_mode: QueryMode::LabelAverage,
            label_kind: LabelKind::Soft,
            augment: AugmentConfig::default(),
            per_query_k: None,
            teacher_hidden: vec![256],
            teacher: TrainSpec::default(),
            student_hidden: None,
            student: TrainSpec {
                loss: LossKind::Kl,
                ..TrainSpec::default()
            },
        }
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn train_spec_from(kv: &KvConfig, prefix: &str, base: TrainSpec) -> Result<TrainSpec> {
    Ok(TrainSpec {
        epochs: kv.get_or(&format!("{prefix}_epochs"), base.epochs)?,
        batch_size: kv.get_or(&format!("{prefix}_batch"), base.batch_size)?,
        learning_rate: kv.get_or(&format!("{prefix}_lr"), base.learning_rate)?,
        ..base
    })
}

impl RunConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            seeds: kv.get_list("seeds")?.unwrap_or(d.seeds),
            query_mode: kv.get_or("query_mode", d.query_mode)?,
            label_kind: kv.get_or("label_kind", d.label_kind)?,
            augment: AugmentConfig {
                multiplier: parse_auto(kv.raw("multiplier"))?,
                small_task_threshold: kv.get_or("small_task_threshold", d.augment.small_task_threshold)?,
                allow_shortfall: kv.get_or("allow_shortfall", d.augment.allow_shortfall)?,
            },
            per_query_k: parse_auto(kv.raw("per_query_k"))?,
            teacher_hidden: kv.get_list("teacher_hidden")?.unwrap_or(d.teacher_hidden),
            teacher: train_spec_from(kv, "teacher", d.teacher)?,
            student_hidden: kv.get_list("student_hidden")?,
            student: train_spec_from(kv, "student", d.student)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The configuration as `key = value` lines.
    pub fn to_config_text(&self) -> String {
        let auto = |v: Option<usize>| v.map_or("auto".to_string(), |x| x.to_string());
        let mut s = format!(
            "seeds = {}\nquery_mode = {}\nlabel_kind = {}\nmultiplier = {}\nsmall_task_threshold = {}\n\
             allow_shortfall = {}\nper_query_k = {}\nteacher_hidden = {}\nteacher_epochs = {}\n\
             teacher_batch = {}\nteacher_lr = {}\n",
            join(&self.seeds),
            self.query_mode,
            self.label_kind,
            auto(self.augment.multiplier),
            self.augment.small_task_threshold,
            self.augment.allow_shortfall,
            auto(self.per_query_k),
            join(&self.teacher_hidden),
            self.teacher.epochs,
            self.teacher.batch_size,
            self.teacher.learning_rate,
        );
        if let Some(h) = &self.student_hidden {
            s.push_str(&format!("student_hidden = {}\n", join(h)));
        }
        s.push_str(&format!(
            "student_epochs = {}\nstudent_batch = {}\nstudent_lr = {}\n",
            self.student.epochs, self.student.batch_size, self.student.learning_rate
        ));
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.per_query_k == Some(0) {
            return Err(Error::Config("per_query_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Embedded training data, dropping examples without an embedding.
pub(crate) fn embed_train(train: &LabeledDataset, encoder: &Encoder) -> Result<(Vec<Vec<f32>>, Vec<usize>)> {
    let mut x = Vec::with_capacity(train.len());
    let mut y = Vec::with_capacity(train.len());
    for (t, l) in train.examples() {
        if let Some(e) = encoder.encode(t) {
            x.push(e);
            y.push(*l);
        }
    }
    if x.len() < train.len() {
        log::warn!("{} training examples have no embedding", train.len() - x.len());
    }
    if x.is_empty() {
        return Err(Error::InvalidInput("no embeddable training examples".into()));
    }
    Ok((x, y))
}

/// Counts synthetic texts that normalize to a test text.
pub fn leakage_count<S: AsRef<str>>(synthetic: &[S], test_normalized: &HashSet<String>) -> usize {
    synthetic
        .iter()
        .filter(|s| test_normalized.contains(&normalize(s.as_ref())))
        .count()
}

pub(crate) fn train_targets(
    features: &[Vec<f32>],
    examples: &[SyntheticExample],
    kind: LabelKind,
    arch: &Architecture,
    spec: &TrainSpec,
) -> Result<(Classifier, f64)> {
    let (model, summary) = match kind {
        LabelKind::Soft => {
            let t: Vec<SoftLabel> = examples.iter().map(|e| e.probs.clone()).collect();
            let spec = TrainSpec {
                loss: LossKind::Kl,
                ..*spec
            };
            classifier::train(arch, features, Targets::Soft(&t), &spec)?
        }
        LabelKind::Discrete => {
            let t: Vec<usize> = examples.iter().map(|e| e.assigned_class).collect();
            let spec = TrainSpec {
                loss: LossKind::CrossEntropy,
                ..*spec
            };
            classifier::train(arch, features, Targets::Hard(&t), &spec)?
        }
    };
    Ok((model, summary.final_loss))
}

struct Candidate {
    id: Option<u32>,
    text: String,
    x: Option<Vec<f32>>,
}

/// State shared by every seed of a run.
struct Shared<'a> {
    train: &'a LabeledDataset,
    encoder: &'a Encoder,
    bank: &'a PreparedBank,
    train_x: Vec<Vec<f32>>,
    train_y: Vec<usize>,
    test_x: Vec<Vec<f32>>,
    test_y: Vec<usize>,
    test_norm: HashSet<String>,
    budget: usize,
    pool_target: usize,
    retrieved: Vec<u32>,
    retrieve_secs: f64,
}

impl<'a> Shared<'a> {
    fn new(
        train: &'a LabeledDataset,
        test: &'a LabeledDataset,
        encoder: &'a Encoder,
        bank: &'a PreparedBank,
        cfg: &RunConfig,
        retrieve: bool,
    ) -> Result<Self> {
        if train.labels() != test.labels() {
            return Err(Error::InvalidInput("train and test label sets differ".into()));
        }
        if test.is_empty() {
            return Err(Error::InvalidInput("empty test set".into()));
        }
        if bank.index.dim() != encoder.dim() {
            return Err(Error::DimensionMismatch {
                expected: encoder.dim(),
                actual: bank.index.dim(),
            });
        }
        let (train_x, train_y) = embed_train(train, encoder)?;
        let test_x = embed_or_zero(encoder, test.texts());
        let budget = choose_multiplier(train.len(), &cfg.augment) * train.len();
        let start = Instant::now();
        let qs = build_queries(train, cfg.query_mode, encoder)?;
        let k = cfg
            .per_query_k
            .unwrap_or_else(|| default_per_query_k(budget, qs.len()));
        let pool_target = k * qs.len();
        let retrieved = if retrieve {
            retrieve_pool(&qs, &bank.index, k)?.into_iter().map(|e| e.id).collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            train,
            encoder,
            bank,
            train_x,
            train_y,
            test_x,
            test_y: test.label_ids(),
            test_norm: test.texts().map(normalize).collect(),
            budget,
            pool_target,
            retrieved,
            retrieve_secs: start.elapsed().as_secs_f64(),
        })
    }

    fn candidates(&self, source: UnlabeledSource<'_>, seed: u64) -> Vec<Candidate> {
        let from_bank = |ids: &[u32]| -> Vec<Candidate> {
            ids.iter()
                .map(|&id| Candidate {
                    id: Some(id),
                    text: self.bank.text(id).to_string(),
                    x: self.bank.index.row(id as usize),
                })
                .collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xca9d_1da7e);
        match source {
            UnlabeledSource::Retrieved => from_bank(&self.retrieved),
            UnlabeledSource::Random => {
                let live = self.bank.index.live_ids();
                let n = self.pool_target.min(live.len());
                let mut pick: Vec<u32> = rand::seq::index::sample(&mut rng, live.len(), n)
                    .into_iter()
                    .map(|i| live[i])
                    .collect();
                pick.sort_unstable();
                from_bank(&pick)
            }
            UnlabeledSource::GroundTruth(pool) => {
                let n = self.pool_target.min(pool.len());
                let mut pick = rand::seq::index::sample(&mut rng, pool.len(), n).into_vec();
                pick.sort_unstable();
                pick.into_par_iter()
                    .map(|i| Candidate {
                        id: None,
                        text: pool[i].clone(),
                        x: self.encoder.encode(&pool[i]),
                    })
                    .collect()
            }
        }
    }

    fn run_seed(
        &self,
        seed: u64,
        source: UnlabeledSource<'_>,
        cfg: &RunConfig,
        teacher_arch: &Architecture,
        student_arch: &Architecture,
    ) -> Result<(SeedResult, Vec<String>)> {
        let t0 = Instant::now();
        let mut timings = Timings::default();
        let teacher_spec = TrainSpec {
            loss: LossKind::CrossEntropy,
            seed,
            ..cfg.teacher
        };
        let (teacher, tsum) = classifier::train(
            teacher_arch,
            &self.train_x,
            Targets::Hard(&self.train_y),
            &teacher_spec,
        )?;
        timings.teacher_secs = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let candidates = self.candidates(source, seed);
        timings.retrieve_secs = t1.elapsed().as_secs_f64()
            + if source == UnlabeledSource::Retrieved {
                self.retrieve_secs
            } else {
                0.0
            };
        if candidates.is_empty() {
            return Err(Error::InvalidInput("empty candidate pool".into()));
        }

        let t2 = Instant::now();
        let candidate_pool = candidates.len();
        let (pool, features): (Vec<SyntheticExample>, Vec<Vec<f32>>) = candidates
            .into_par_iter()
            .filter_map(|c| c.x.map(|x| (c.id, c.text, x)))
            .map(|(id, text, x)| Ok((SyntheticExample::new(id, text, teacher.forward(&x)?), x)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let dropped_null = candidate_pool - pool.len();
        let quotas = class_quotas(&self.train.counts(), self.budget)?;
        let train_texts: Vec<&str> = self.train.texts().collect();
        let (selected, report) = filter_synthetic(&pool, &quotas, &train_texts, cfg.augment.allow_shortfall)?;
        timings.annotate_secs = t2.elapsed().as_secs_f64();
        if selected.is_empty() {
            return Err(Error::InvalidInput("no synthetic examples survived filtering".into()));
        }
        let leaked = leakage_count(&selected.iter().map(|e| e.text.as_str()).collect::<Vec<_>>(), &self.test_norm);
        if leaked > 0 {
            return Err(Error::Leakage { count: leaked });
        }

        let t3 = Instant::now();
        let by_key: HashMap<(Option<u32>, &str), usize> = pool
            .iter()
            .enumerate()
            .map(|(i, e)| ((e.id, e.text.as_str()), i))
            .collect();
        let student_x: Vec<Vec<f32>> = selected
            .iter()
            .map(|e| features[by_key[&(e.id, e.text.as_str())]].clone())
            .collect();
        let student_spec = TrainSpec { seed, ..cfg.student };
        let (student, student_loss) =
            train_targets(&student_x, &selected, cfg.label_kind, student_arch, &student_spec)?;
        timings.student_secs = t3.elapsed().as_secs_f64();
        timings.total_secs = t0.elapsed().as_secs_f64()
            + if source == UnlabeledSource::Retrieved {
                self.retrieve_secs
            } else {
                0.0
            };

        let result = SeedResult {
            seed,
            teacher_accuracy: classifier::accuracy(&teacher, &self.test_x, &self.test_y),
            student_accuracy: classifier::accuracy(&student, &self.test_x, &self.test_y),
            teacher_final_loss: tsum.final_loss,
            student_final_loss: student_loss,
            provenance: Provenance {
                candidate_pool,
                dropped_null,
                excluded_train_overlap: report.excluded_train_overlap,
                quota_total: quotas.iter().sum(),
                filtered: report.selected,
                ground_truth_added: 0,
                student_train_size: student_x.len(),
                shortfalls: report.shortfalls,
            },
            timings,
        };
        Ok((result, selected.into_iter().map(|e| e.text).collect()))
    }
}

fn run_protocol(
    protocol: &str,
    train: &LabeledDataset,
    test: &LabeledDataset,
    bank: &PreparedBank,
    encoder: &Encoder,
    cfg: &RunConfig,
    source: UnlabeledSource<'_>,
    student_arch: &Architecture,
    config_text: Option<&str>,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let snapshot = config_text.map_or_else(|| cfg.to_config_text(), str::to_string);
    let mut report = ExperimentReport::new(protocol, snapshot, bank.stats.clone());
    report.timings.prepare_secs = bank.prepare_secs;
    report.leakage.test_size = test.len();
    let teacher_arch = Architecture::new(encoder.dim(), cfg.teacher_hidden.clone(), train.num_classes());
    let shared = match Shared::new(train, test, encoder, bank, cfg, source == UnlabeledSource::Retrieved) {
        Ok(s) => s,
        Err(e) => {
            report.fail(&e);
            return Ok(report);
        }
    };
    let results: Vec<Result<(SeedResult, Vec<String>)>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| shared.run_seed(seed, source, cfg, &teacher_arch, student_arch))
        .collect();
    for r in results {
        match r {
            Ok((res, texts)) => {
                report.leakage.synthetic_checked += texts.len();
                report.leakage.overlaps += leakage_count(&texts, &shared.test_norm);
                report.per_seed.push(res);
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
    Ok(report)
}

/// Teacher on the labeled data, student of the same architecture (unless
/// configured otherwise) on retrieved, teacher-labeled sentences.
pub fn run_self_training(
    train: &LabeledDataset,
    test: &LabeledDataset,
    bank: &PreparedBank,
    encoder: &Encoder,
    cfg: &RunConfig,
    config_text: Option<&str>,
) -> Result<ExperimentReport> {
    let hidden = cfg.student_hidden.clone().unwrap_or_else(|| cfg.teacher_hidden.clone());
    let arch = Architecture::new(encoder.dim(), hidden, train.num_classes());
    run_protocol(
        "self-train",
        train,
        test,
        bank,
        encoder,
        cfg,
        UnlabeledSource::Retrieved,
        &arch,
        config_text,
    )
}

/// Like self-training with a strictly smaller student and a choice of
/// candidate source.
pub fn run_distillation(
    train: &LabeledDataset,
    test: &LabeledDataset,
    bank: &PreparedBank,
    encoder: &Encoder,
    cfg: &RunConfig,
    source: UnlabeledSource<'_>,
    config_text: Option<&str>,
) -> Result<ExperimentReport> {
    let c = train.num_classes();
    let teacher = Architecture::new(encoder.dim(), cfg.teacher_hidden.clone(), c);
    let student = Architecture::new(encoder.dim(), cfg.student_hidden.clone().unwrap_or_default(), c);
    if student.parameter_count() >= teacher.parameter_count() {
        return Err(Error::Capacity {
            student: student.parameter_count(),
            teacher: teacher.parameter_count(),
        });
    }
    if let UnlabeledSource::GroundTruth(pool) = source {
        if pool.is_empty() {
            return Err(Error::InvalidInput("ground-truth pool is empty".into()));
        }
    }
    let protocol = format!("distill-{}", source.name());
    run_protocol(&protocol, train, test, bank, encoder, cfg, source, &student, config_text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::WordVectorTable;
    use std::sync::Arc;

    fn tiny() -> (SyntheticTask, Encoder) {
        let t = generate_synthetic_task(&SyntheticTaskSpec {
            bank_size: 3000,
            n_test: 200,
            n_valid: 100,
            vocab_size: 400,
            ..SyntheticTaskSpec::default()
        })
        .unwrap();
        let enc = Encoder::Avg(Arc::new(t.word_vectors.clone()));
        (t, enc)
    }

    fn quick() -> RunConfig {
        RunConfig {
            seeds: vec![0, 1],
            augment: AugmentConfig {
                multiplier: Some(5),
                ..AugmentConfig::default()
            },
            teacher_hidden: vec![8],
            teacher: TrainSpec {
                epochs: 20,
                ..TrainSpec::default()
            },
            student: TrainSpec {
                epochs: 5,
                ..TrainSpec::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn self_training_runs_and_is_deterministic() {
        let (t, enc) = tiny();
        let bank = PreparedBank::from_texts(&t.bank_text, "synthetic", &t.test.examples().iter().map(|e| &e.0).collect::<Vec<_>>(), &enc, false, None).unwrap();
        let a = run_self_training(&t.train, &t.test, &bank, &enc, &quick(), None).unwrap();
        assert!(a.is_ok(), "{:?}", a.status);
        assert_eq!(a.per_seed.len(), 2);
        for r in &a.per_seed {
            let p = &r.provenance;
            assert_eq!(p.quota_total, 200);
            let deficit: usize = p.shortfalls.iter().map(|s| s.quota - s.available).sum();
            assert_eq!(p.filtered, p.quota_total - deficit);
            assert_eq!(p.student_train_size, p.filtered);
        }
        assert_eq!(a.leakage.overlaps, 0);
        let b = run_self_training(&t.train, &t.test, &bank, &enc, &quick(), None).unwrap();
        assert_eq!(a.teacher_accuracies(), b.teacher_accuracies());
        assert_eq!(a.student_accuracies(), b.student_accuracies());
    }

    #[test]
    fn multiplier_one_gives_train_size() {
        let (t, enc) = tiny();
        let bank = PreparedBank::from_texts(&t.in_domain, "in-domain", &[] as &[&str], &enc, false, None).unwrap();
        let cfg = RunConfig {
            augment: AugmentConfig {
                multiplier: Some(1),
                ..AugmentConfig::default()
            },
            ..quick()
        };
        let r = run_self_training(&t.train, &t.test, &bank, &enc, &cfg, None).unwrap();
        assert!(r.per_seed.iter().all(|s| s.provenance.student_train_size == t.train.len()));
    }

    #[test]
    fn empty_pool_fails_report() {
        let (t, _) = tiny();
        // bank sentences are all out of vocabulary, so every row is null
        let table = Arc::new(WordVectorTable::new(2, vec![("only".into(), vec![1.0, 0.0])]).unwrap());
        let enc = Encoder::Avg(table);
        let train = LabeledDataset::from_named([("a", "only"), ("b", "only only")]);
        let bank = PreparedBank::from_texts(&t.bank_text[..50], "s", &[] as &[&str], &enc, false, None).unwrap();
        let r = run_self_training(&train, &train, &bank, &enc, &quick(), None).unwrap();
        assert!(!r.is_ok());
    }

    #[test]
    fn distillation_capacity_check() {
        let (t, enc) = tiny();
        let bank = PreparedBank::from_texts(&t.bank_text, "s", &[] as &[&str], &enc, false, None).unwrap();
        let same = RunConfig {
            student_hidden: Some(vec![8]),
            ..quick()
        };
        assert!(matches!(
            run_distillation(&t.train, &t.test, &bank, &enc, &same, UnlabeledSource::Random, None),
            Err(Error::Capacity { .. })
        ));
        let r = run_distillation(&t.train, &t.test, &bank, &enc, &quick(), UnlabeledSource::GroundTruth(&t.in_domain), None).unwrap();
        assert!(r.is_ok(), "{:?}", r.status);
        assert_eq!(r.protocol, "distill-ground_truth");
    }

    #[test]
    fn config_round_trip() {
        let cfg = RunConfig {
            student_hidden: Some(vec![]),
            per_query_k: Some(7),
            ..quick()
        };
        let kv = KvConfig::parse(&cfg.to_config_text(), "t").unwrap();
        let back = RunConfig::from_kv(&kv).unwrap();
        kv.check_unused().unwrap();
        assert_eq!(back, RunConfig {
            student: TrainSpec { loss: LossKind::Kl, ..cfg.student },
            ..cfg
        });
    }
}
