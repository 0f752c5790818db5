//! Trains a teacher on labeled sentences, labels bank sentences with it and
//! trains a student on the result, with soft and with discrete labels.
//!
//! ```text
//! cargo run --release --example teacher_student
//! ```

use std::sync::Arc;

use bankaug::classifier::{self, annotate, Architecture, LossKind, Targets, TrainSpec};
use bankaug::embed::Encoder;
use bankaug::pipeline::{eval_accuracy, generate_synthetic_task, SyntheticTaskSpec};

fn main() -> anyhow::Result<()> {
    let task = generate_synthetic_task(&SyntheticTaskSpec {
        n_train: 100,
        bank_size: 20_000,
        distractor_ratio: 0.0,
        ..SyntheticTaskSpec::default()
    })?;
    let enc = Encoder::Avg(Arc::new(task.word_vectors.clone()));
    let x: Vec<Vec<f32>> = task.train.texts().map(|t| enc.encode(t).expect("embeds")).collect();
    let y = task.train.label_ids();
    let arch = Architecture::new(enc.dim(), vec![64], task.train.num_classes());

    let (teacher, summary) = classifier::train(
        &arch,
        &x,
        Targets::Hard(&y),
        &TrainSpec {
            epochs: 200,
            ..TrainSpec::default()
        },
    )?;
    println!(
        "teacher: final loss {:.4}, test accuracy {:.4}",
        summary.final_loss,
        eval_accuracy(&teacher, &task.test, &enc)?
    );

    let unlabeled = &task.bank_text[..5000];
    let (synthetic, stats) = annotate(&teacher, unlabeled, &enc)?;
    println!("annotated {} sentences ({} without an embedding)", stats.annotated, stats.dropped_null);
    let sx: Vec<Vec<f32>> = synthetic.iter().map(|s| enc.encode(&s.text).expect("embeds")).collect();
    let soft: Vec<_> = synthetic.iter().map(|s| s.probs.clone()).collect();
    let hard: Vec<usize> = synthetic.iter().map(|s| s.assigned_class).collect();

    for (name, targets, loss) in [
        ("soft", Targets::Soft(&soft), LossKind::Kl),
        ("discrete", Targets::Hard(&hard), LossKind::CrossEntropy),
    ] {
        let spec = TrainSpec {
            loss,
            epochs: 20,
            ..TrainSpec::default()
        };
        let (student, _) = classifier::train(&arch, &sx, targets, &spec)?;
        println!("{name:>8} student: test accuracy {:.4}", eval_accuracy(&student, &task.test, &enc)?);
    }
    Ok(())
}
