//! Seeded synthetic classification tasks with an unlabeled sentence bank.
//!
//! Each class owns one or more topics; a topic is a block of tokens whose
//! word vectors share a centroid direction. Sentences mix topic tokens with
//! shared in-domain tokens and occasional tokens from other classes' topics.
//! Distractor sentences use a disjoint vocabulary clustered around another
//! direction.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::embed::WordVectorTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub seed: u64,
    /// In-domain vocabulary size; distractors get a disjoint vocabulary of the same size.
    pub vocab_size: usize,
    pub n_classes: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub bank_size: usize,
    pub distractor_ratio: f64,
    pub dim: usize,
    pub topics_per_class: usize,
    /// Cosine between a class's first topic centroid and its other topics;
    /// -1 makes them antipodal, so no linear model separates the classes.
    pub topic_alignment: f64,
    /// Fraction of in-domain vocabulary shared by all classes.
    pub shared_fraction: f64,
    /// Probability that a token is drawn from the sentence's topic.
    pub topic_rate: f64,
    /// Probability that a topic token comes from another class instead.
    pub overlap: f64,
    /// Weight of the topic centroid in topic word vectors.
    pub centroid_strength: f64,
    /// Weight of the domain centroid in shared and distractor word vectors.
    pub domain_strength: f64,
    pub zipf_exponent: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            vocab_size: 2000,
            n_classes: 2,
            n_train: 40,
            n_valid: 400,
            n_test: 2000,
            bank_size: 500_000,
            distractor_ratio: 0.8,
            dim: 64,
            topics_per_class: 1,
            topic_alignment: -1.0,
            shared_fraction: 0.4,
            topic_rate: 0.3,
            overlap: 0.15,
            centroid_strength: 0.35,
            domain_strength: 0.5,
            zipf_exponent: 1.0,
            min_len: 8,
            max_len: 16,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        let topics = self.n_classes * self.topics_per_class;
        let shared = (self.vocab_size as f64 * self.shared_fraction) as usize;
        if self.n_classes < 2
            || self.topics_per_class == 0
            || self.dim == 0
            || self.min_len == 0
            || self.min_len > self.max_len
        {
            return Err(Error::Config("synthetic task parameters must be positive".into()));
        }
        if self.vocab_size < shared + topics || shared == 0 {
            return Err(Error::Config("vocabulary too small for the topic layout".into()));
        }
        if !(0.0..=1.0).contains(&self.distractor_ratio)
            || !(0.0..=1.0).contains(&self.topic_rate)
            || !(0.0..=1.0).contains(&self.overlap)
            || !(-1.0..=1.0).contains(&self.topic_alignment)
        {
            return Err(Error::Config("rates must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Token blocks and samplers of a synthetic language.
#[derive(Debug, Clone)]
pub struct SyntheticLanguage {
    n_classes: usize,
    topics_per_class: usize,
    topic_rate: f64,
    overlap: f64,
    zipf_exponent: f64,
    min_len: usize,
    max_len: usize,
    shared: Vec<String>,
    topics: Vec<Vec<String>>,
    distractors: Vec<String>,
}

impl SyntheticLanguage {
    fn zipf_pick<'a, R: Rng>(&self, block: &'a [String], rng: &mut R) -> &'a str {
        let z = Zipf::new(block.len() as u64, self.zipf_exponent).expect("valid zipf");
        let k = z.sample(rng) as usize - 1;
        &block[k.min(block.len() - 1)]
    }

    fn len<R: Rng>(&self, rng: &mut R) -> usize {
        rng.gen_range(self.min_len..=self.max_len)
    }

    fn topic_of<R: Rng>(&self, class: usize, rng: &mut R) -> usize {
        class * self.topics_per_class + rng.gen_range(0..self.topics_per_class)
    }

    /// One in-domain sentence of the given class.
    pub fn sentence<R: Rng>(&self, class: usize, rng: &mut R) -> String {
        let topic = self.topic_of(class, rng);
        let n = self.len(rng);
        let mut toks = Vec::with_capacity(n);
        for _ in 0..n {
            let tok = if rng.gen_bool(self.topic_rate) {
                if rng.gen_bool(self.overlap) {
                    let mut other = rng.gen_range(0..self.n_classes - 1);
                    if other >= class {
                        other += 1;
                    }
                    let t = self.topic_of(other, rng);
                    self.zipf_pick(&self.topics[t], rng)
                } else {
                    self.zipf_pick(&self.topics[topic], rng)
                }
            } else {
                self.zipf_pick(&self.shared, rng)
            };
            toks.push(tok);
        }
        format!("{}.", toks.join(" "))
    }

    pub fn distractor<R: Rng>(&self, rng: &mut R) -> String {
        let n = self.len(rng);
        let toks: Vec<&str> = (0..n).map(|_| self.zipf_pick(&self.distractors, rng)).collect();
        format!("{}.", toks.join(" "))
    }

    /// Pairs of same-topic sentences sharing about half their tokens.
    pub fn paraphrase_pairs(&self, n: usize, seed: u64) -> Vec<(String, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let class = rng.gen_range(0..self.n_classes);
                let a = self.sentence(class, &mut rng);
                let b_fresh = self.sentence(class, &mut rng);
                let a_toks: Vec<&str> = a.trim_end_matches('.').split(' ').collect();
                let mut b_toks: Vec<&str> = b_fresh
                    .trim_end_matches('.')
                    .split(' ')
                    .zip(a_toks.iter().cycle())
                    .map(|(fresh, orig)| if rng.gen_bool(0.5) { *orig } else { fresh })
                    .collect();
                b_toks.shuffle(&mut rng);
                let b = format!("{}.", b_toks.join(" "));
                (a, b)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub spec: SyntheticTaskSpec,
    pub train: LabeledDataset,
    pub valid: LabeledDataset,
    pub test: LabeledDataset,
    /// Bank sentences: in-domain and distractor, interleaved.
    pub bank_text: Vec<String>,
    /// The in-domain part of the bank, in bank order.
    pub in_domain: Vec<String>,
    pub word_vectors: WordVectorTable,
    pub language: SyntheticLanguage,
}

fn random_unit<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn token_vector<R: Rng>(centroid: &[f64], strength: f64, rng: &mut R) -> Vec<f32> {
    let dim = centroid.len();
    let noise = 1.0 / (dim as f64).sqrt();
    centroid
        .iter()
        .map(|&c| {
            let g: f64 = StandardNormal.sample(rng);
            (strength * c + noise * g) as f32
        })
        .collect()
}

fn dataset<R: Rng>(
    lang: &SyntheticLanguage,
    labels: &[String],
    n: usize,
    balanced: bool,
    rng: &mut R,
) -> LabeledDataset {
    let mut ds = LabeledDataset::new(labels.to_vec());
    let k = labels.len();
    let mut classes: Vec<usize> = if balanced {
        (0..n).map(|i| i % k).collect()
    } else {
        (0..n).map(|_| rng.gen_range(0..k)).collect()
    };
    if balanced {
        classes.shuffle(rng);
    }
    for c in classes {
        ds.push(lang.sentence(c, rng), c).expect("label in range");
    }
    ds
}

/// Generates train/valid/test sets, a bank and a word vector table; fully
/// determined by `spec.seed`.
pub fn generate_synthetic_task(spec: &SyntheticTaskSpec) -> Result<SyntheticTask> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_topics = spec.n_classes * spec.topics_per_class;
    let n_shared = (spec.vocab_size as f64 * spec.shared_fraction) as usize;
    let per_topic = (spec.vocab_size - n_shared) / n_topics;

    // neutral token names, randomly assigned to roles
    let mut ids: Vec<usize> = (0..spec.vocab_size).collect();
    ids.shuffle(&mut rng);
    let mut names = ids.into_iter().map(|i| format!("w{i}"));
    let shared: Vec<String> = names.by_ref().take(n_shared).collect();
    let topics: Vec<Vec<String>> = (0..n_topics)
        .map(|_| names.by_ref().take(per_topic).collect())
        .collect();
    let distractors: Vec<String> = (0..spec.vocab_size).map(|i| format!("x{i}")).collect();

    let domain_in = random_unit(spec.dim, &mut rng);
    let domain_out = random_unit(spec.dim, &mut rng);
    let mut centroids = Vec::with_capacity(n_topics);
    for _ in 0..spec.n_classes {
        let base = random_unit(spec.dim, &mut rng);
        for t in 0..spec.topics_per_class {
            if t == 0 {
                centroids.push(base.clone());
                continue;
            }
            let r = random_unit(spec.dim, &mut rng);
            let along: f64 = r.iter().zip(&base).map(|(a, b)| a * b).sum();
            let ortho: Vec<f64> = r.iter().zip(&base).map(|(a, b)| a - along * b).collect();
            let on = ortho.iter().map(|x| x * x).sum::<f64>().sqrt();
            let rho = spec.topic_alignment;
            let side = (1.0 - rho * rho).max(0.0).sqrt();
            centroids.push(base.iter().zip(&ortho).map(|(b, o)| rho * b + side * o / on).collect());
        }
    }

    let mut entries = Vec::with_capacity(2 * spec.vocab_size);
    for tok in &shared {
        entries.push((tok.clone(), token_vector(&domain_in, spec.domain_strength, &mut rng)));
    }
    for (t, block) in topics.iter().enumerate() {
        for tok in block {
            let mut v = token_vector(&centroids[t], spec.centroid_strength, &mut rng);
            for (x, d) in v.iter_mut().zip(&domain_in) {
                *x += (spec.domain_strength * d) as f32;
            }
            entries.push((tok.clone(), v));
        }
    }
    for tok in &distractors {
        entries.push((tok.clone(), token_vector(&domain_out, spec.domain_strength, &mut rng)));
    }
    let word_vectors = WordVectorTable::new(spec.dim, entries)?;

    let lang = SyntheticLanguage {
        n_classes: spec.n_classes,
        topics_per_class: spec.topics_per_class,
        topic_rate: spec.topic_rate,
        overlap: spec.overlap,
        zipf_exponent: spec.zipf_exponent,
        min_len: spec.min_len,
        max_len: spec.max_len,
        shared,
        topics,
        distractors,
    };
    let labels: Vec<String> = (0..spec.n_classes).map(|c| format!("class{c}")).collect();
    let train = dataset(&lang, &labels, spec.n_train, true, &mut rng);
    let valid = dataset(&lang, &labels, spec.n_valid, false, &mut rng);
    let test = dataset(&lang, &labels, spec.n_test, false, &mut rng);

    let mut bank_text = Vec::with_capacity(spec.bank_size);
    let mut in_domain = Vec::new();
    for _ in 0..spec.bank_size {
        if rng.gen_bool(spec.distractor_ratio) {
            bank_text.push(lang.distractor(&mut rng));
        } else {
            let c = rng.gen_range(0..spec.n_classes);
            let s = lang.sentence(c, &mut rng);
            in_domain.push(s.clone());
            bank_text.push(s);
        }
    }
    let mut word_vectors = word_vectors;
    word_vectors.estimate_unigram(&bank_text);

    Ok(SyntheticTask {
        spec: spec.clone(),
        train,
        valid,
        test,
        bank_text,
        in_domain,
        word_vectors,
        language: lang,
    })
}
