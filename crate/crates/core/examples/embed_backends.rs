//! Compares the averaging, SIF and trained-projection sentence encoders on
//! a synthetic paraphrase task.
//!
//! ```text
//! cargo run --release --example embed_backends
//! ```

use std::sync::Arc;

use bankaug::embed::{train_projection, Encoder, TripletConfig, DEFAULT_SIF_A};
use bankaug::pipeline::{eval_sts, generate_synthetic_task, SyntheticTaskSpec};

fn main() -> anyhow::Result<()> {
    let task = generate_synthetic_task(&SyntheticTaskSpec {
        bank_size: 20_000,
        ..SyntheticTaskSpec::default()
    })?;
    let table = Arc::new(task.word_vectors.clone());
    let train_pairs = task.language.paraphrase_pairs(4000, 1);

    // gold 1 for paraphrases, 0 for a paraphrase paired with a random bank sentence
    let mut sts = Vec::new();
    for (i, (a, b)) in task.language.paraphrase_pairs(300, 2).into_iter().enumerate() {
        sts.push((a.clone(), b, 1.0));
        sts.push((a, task.bank_text[i * 7].clone(), 0.0));
    }

    let avg = Encoder::Avg(table.clone());
    let sif = Encoder::fit_sif(table.clone(), &task.bank_text, DEFAULT_SIF_A, 10_000)?;
    let (proj, log) = train_projection(
        &train_pairs,
        &task.word_vectors,
        &TripletConfig {
            epochs: 5,
            ..TripletConfig::default()
        },
    )?;
    println!("triplet loss per epoch: {:?}", log.epoch_losses);
    let proj = Encoder::projection(table, proj)?;

    for enc in [&avg, &sif, &proj] {
        let r = eval_sts(enc, &sts)?;
        println!("{:>5}: pearson {:.4} spearman {:.4}", enc.kind().to_string(), r.pearson, r.spearman);
    }
    Ok(())
}
