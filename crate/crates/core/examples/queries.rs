//! Builds task queries in each mode and reports how in-domain the
//! retrieved pool is.
//!
//! ```text
//! cargo run --release --example queries
//! ```

use std::collections::HashSet;
use std::sync::Arc;

use bankaug::embed::Encoder;
use bankaug::index::FlatIndex;
use bankaug::pipeline::{generate_synthetic_task, SyntheticTaskSpec};
use bankaug::queries::{build_queries, retrieve_pool, QueryMode};

fn main() -> anyhow::Result<()> {
    let task = generate_synthetic_task(&SyntheticTaskSpec {
        bank_size: 100_000,
        ..SyntheticTaskSpec::default()
    })?;
    let enc = Encoder::Avg(Arc::new(task.word_vectors.clone()));
    let index = FlatIndex::new(enc.embed_all(&task.bank_text))?;
    let in_domain: HashSet<&str> = task.in_domain.iter().map(String::as_str).collect();
    println!(
        "bank: {} sentences, {:.0}% in-domain",
        task.bank_text.len(),
        100.0 * task.in_domain.len() as f64 / task.bank_text.len() as f64
    );

    for mode in [QueryMode::AllAverage, QueryMode::LabelAverage, QueryMode::PerSentence] {
        let qs = build_queries(&task.train, mode, &enc)?;
        let k = 4000 / qs.len();
        let pool = retrieve_pool(&qs, &index, k)?;
        let hits = pool
            .iter()
            .filter(|p| in_domain.contains(task.bank_text[p.id as usize].as_str()))
            .count();
        println!(
            "{mode:>5}: {:>3} queries x k={k:<5} -> pool {:>5}, {:.1}% in-domain",
            qs.len(),
            pool.len(),
            100.0 * hits as f64 / pool.len() as f64
        );
    }
    Ok(())
}
