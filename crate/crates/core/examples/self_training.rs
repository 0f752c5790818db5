//! The self-training protocol on the default synthetic benchmark.
//!
//! ```text
//! cargo run --release --example self_training [task_seed]
//! ```

use std::sync::Arc;

use bankaug::embed::Encoder;
use bankaug::pipeline::{generate_synthetic_task, presets, run_self_training, PreparedBank};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let seed = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let (spec, cfg) = presets::self_training(seed);
    let task = generate_synthetic_task(&spec)?;
    let enc = Encoder::Avg(Arc::new(task.word_vectors.clone()));
    let test: Vec<&str> = task.test.texts().collect();
    let bank = PreparedBank::from_texts(&task.bank_text, "synthetic", &test, &enc, false, None)?;
    let report = run_self_training(&task.train, &task.test, &bank, &enc, &cfg, None)?;
    print!("{}", report.summary_table());
    Ok(())
}
