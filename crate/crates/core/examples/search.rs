//! Embeds a bank and runs exact top-k cosine search for a few sentences.
//!
//! ```text
//! cargo run --release --example search
//! ```

use std::sync::Arc;

use bankaug::embed::Encoder;
use bankaug::index::FlatIndex;
use bankaug::pipeline::{generate_synthetic_task, SyntheticTaskSpec};

fn main() -> anyhow::Result<()> {
    let task = generate_synthetic_task(&SyntheticTaskSpec {
        bank_size: 50_000,
        ..SyntheticTaskSpec::default()
    })?;
    let enc = Encoder::Avg(Arc::new(task.word_vectors.clone()));
    let index = FlatIndex::new(enc.embed_all(&task.bank_text))?;
    println!("{} rows of dimension {}", index.len(), index.dim());

    for (text, label) in task.test.examples().iter().take(3) {
        let q = enc.encode(text).expect("test sentence embeds");
        println!("\nquery ({}): {text}", task.test.labels()[*label]);
        for h in index.top_k(&q, 3)? {
            println!("  {:.4}  #{:<6} {}", h.score, h.id, task.bank_text[h.id as usize]);
        }
    }
    Ok(())
}
