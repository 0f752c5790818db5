//! Benchmark setups on synthetic tasks, shared by the examples, the CLI's
//! `synth-task` command and the acceptance suite.

use super::{FewShotSpec, LabelKind, RunConfig, SyntheticTaskSpec};
use crate::augment::AugmentConfig;
use crate::classifier::{LossKind, TrainSpec};
use crate::queries::QueryMode;

fn schedule(teacher_epochs: usize, student_epochs: usize) -> (TrainSpec, TrainSpec) {
    (
        TrainSpec {
            epochs: teacher_epochs,
            ..TrainSpec::default()
        },
        TrainSpec {
            loss: LossKind::Kl,
            epochs: student_epochs,
            ..TrainSpec::default()
        },
    )
}

/// Two classes, 40 labeled examples, a 500k-sentence bank of which 80% are
/// distractors; label-average queries, 100× augmentation, soft labels.
pub fn self_training(seed: u64) -> (SyntheticTaskSpec, RunConfig) {
    let (teacher, student) = schedule(600, 30);
    (
        SyntheticTaskSpec {
            seed,
            ..SyntheticTaskSpec::default()
        },
        RunConfig {
            seeds: (0..5).collect(),
            query_mode: QueryMode::LabelAverage,
            label_kind: LabelKind::Soft,
            augment: AugmentConfig {
                multiplier: Some(100),
                ..AugmentConfig::default()
            },
            per_query_k: None,
            teacher_hidden: vec![256],
            teacher,
            student_hidden: None,
            student,
        },
    )
}

/// Each class is a mixture of two topics pointing in partly opposite
/// directions, so a hidden-layer teacher beats any linear student.
pub fn distillation(seed: u64) -> (SyntheticTaskSpec, RunConfig) {
    let (spec, cfg) = self_training(seed);
    (
        SyntheticTaskSpec {
            n_train: 400,
            topics_per_class: 2,
            topic_alignment: -0.6,
            topic_rate: 0.6,
            centroid_strength: 0.8,
            ..spec
        },
        RunConfig {
            augment: AugmentConfig {
                multiplier: Some(10),
                ..AugmentConfig::default()
            },
            student_hidden: Some(Vec::new()),
            ..cfg
        },
    )
}

/// The self-training task with enough labeled data for five disjoint
/// few-shot train sets of 20 examples per class.
pub fn few_shot(seed: u64) -> (SyntheticTaskSpec, FewShotSpec) {
    let (spec, _) = self_training(seed);
    (
        SyntheticTaskSpec {
            n_train: 200,
            ..spec
        },
        FewShotSpec::default(),
    )
}
