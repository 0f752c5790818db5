//! Class quotas and confidence filtering of teacher-labeled candidates.
//!
//! ```text
//! cargo run --example augment_filter
//! ```

use bankaug::augment::{choose_multiplier, class_quotas, filter_synthetic, AugmentConfig};
use bankaug::classifier::{SoftLabel, SyntheticExample};

fn main() -> anyhow::Result<()> {
    let train_counts = [7, 2, 1];
    let cfg = AugmentConfig::default();
    let m = choose_multiplier(10, &cfg);
    println!("multiplier for 10 examples: {m}");
    let quotas = class_quotas(&train_counts, 25)?;
    println!("quotas for 25 over {train_counts:?}: {quotas:?}");

    let pool: Vec<SyntheticExample> = (0..30u32)
        .map(|i| {
            let c = (i % 3) as usize;
            let conf = 0.4 + 0.02 * i as f64;
            let mut p = vec![(1.0 - conf) / 2.0; 3];
            p[c] = conf;
            SyntheticExample::new(Some(i), format!("candidate {i}"), SoftLabel::new(p).expect("valid"))
        })
        .collect();
    let train_texts = ["Candidate 29"];
    let (kept, report) = filter_synthetic(&pool, &quotas, &train_texts, true)?;
    println!(
        "kept {} of {}, {} dropped as train duplicates",
        report.selected, report.pool_size, report.excluded_train_overlap
    );
    for s in &report.shortfalls {
        println!("  class {} short: quota {}, available {}", s.class, s.quota, s.available);
    }
    for ex in kept.iter().take(5) {
        println!("  {:<14} class {} confidence {:.2}", ex.text, ex.assigned_class, ex.confidence);
    }
    assert!(filter_synthetic(&pool, &quotas, &train_texts, false).is_err());
    Ok(())
}
