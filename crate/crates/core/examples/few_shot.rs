//! Few-shot protocol: several small train sets, many seeds per set, scores
//! from the best models on validation.
//!
//! ```text
//! cargo run --release --example few_shot
//! ```

use std::sync::Arc;

use bankaug::embed::Encoder;
use bankaug::pipeline::{generate_synthetic_task, presets, run_few_shot, PreparedBank};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (spec, fs) = presets::few_shot(0);
    let task = generate_synthetic_task(&spec)?;
    let enc = Encoder::Avg(Arc::new(task.word_vectors.clone()));
    let test: Vec<&str> = task.test.texts().collect();
    let bank = PreparedBank::from_texts(&task.bank_text, "synthetic", &test, &enc, false, None)?;
    let report = run_few_shot(&task.train, &task.valid, &task.test, &bank, &enc, &fs, None)?;
    print!("{}", report.summary_table());
    Ok(())
}
