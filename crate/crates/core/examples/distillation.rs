//! Distils a hidden-layer teacher into a linear student using retrieved,
//! random and in-domain unlabeled sentences.
//!
//! ```text
//! cargo run --release --example distillation
//! ```

use std::sync::Arc;

use bankaug::embed::Encoder;
use bankaug::pipeline::{generate_synthetic_task, presets, run_distillation, PreparedBank, UnlabeledSource};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (spec, cfg) = presets::distillation(0);
    let task = generate_synthetic_task(&spec)?;
    let enc = Encoder::Avg(Arc::new(task.word_vectors.clone()));
    let test: Vec<&str> = task.test.texts().collect();
    let bank = PreparedBank::from_texts(&task.bank_text, "synthetic", &test, &enc, false, None)?;
    for source in [
        UnlabeledSource::Retrieved,
        UnlabeledSource::Random,
        UnlabeledSource::GroundTruth(&task.in_domain),
    ] {
        let report = run_distillation(&task.train, &task.test, &bank, &enc, &cfg, source, None)?;
        println!(
            "{:<13} teacher {:.4}  student {:.4} (std {:.4})",
            source.name(),
            report.teacher.mean,
            report.student.mean,
            report.student.std
        );
    }
    Ok(())
}
