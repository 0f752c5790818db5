//! Recall of int8 search with float rescoring, and of int8-only search,
//! against exact float32 search.
//!
//! ```text
//! cargo run --release --example quantized_recall
//! ```

use std::sync::Arc;
use std::time::Instant;

use bankaug::embed::Encoder;
use bankaug::index::{quantize, recall, FlatIndex};
use bankaug::pipeline::{generate_synthetic_task, SyntheticTaskSpec};

fn main() -> anyhow::Result<()> {
    let task = generate_synthetic_task(&SyntheticTaskSpec::default())?;
    let enc = Encoder::Avg(Arc::new(task.word_vectors.clone()));
    let m = enc.embed_all(&task.bank_text);
    let queries: Vec<Vec<f32>> = task.test.texts().take(100).filter_map(|t| enc.encode(t)).collect();

    let int8_only = FlatIndex::quantized_only(quantize(&m)?)?;
    let mut index = FlatIndex::with_quantization(m)?;

    for k in [10, 100] {
        let t = Instant::now();
        index.set_quantized(false);
        let truth = index.top_k_multi(&queries, k)?;
        let te = t.elapsed();
        let t = Instant::now();
        index.set_quantized(true);
        let a = index.top_k_multi(&queries, k)?;
        let ta = t.elapsed();
        let b = int8_only.top_k_multi(&queries, k)?;
        println!(
            "k={k:<4} recall rescored {:.4}, int8-only {:.4}  (exact {:.0?}, rescored {:.0?})",
            recall(&a, &truth),
            recall(&b, &truth),
            te,
            ta
        );
    }
    Ok(())
}
