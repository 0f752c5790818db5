//! Segments raw documents into a deduplicated sentence bank, removes test
//! overlap and round-trips the bank through disk.
//!
//! ```text
//! cargo run --example bank_build
//! ```

use bankaug::bank::{build_bank, load_bank, remove_overlap, save_bank, segment, SegmentConfig, TextStore};

fn main() -> anyhow::Result<()> {
    let docs = [
        "The plot was thin. The acting, however, was superb! Would watch again?",
        "The acting, however, was SUPERB!  Short one. The score was moving and memorable.",
        "I would not recommend this film to anyone at all. The plot was thin.",
    ];
    let cfg = SegmentConfig {
        min_tokens: 3,
        max_tokens: 100,
    };
    let sentences: Vec<String> = docs.iter().flat_map(|d| segment(d, &cfg)).collect();
    println!("{} sentences after segmentation", sentences.len());

    let (bank, stats) = build_bank(&sentences, "example-docs");
    println!("dedup: seen {}, duplicates {}, kept {}", stats.seen, stats.duplicates, stats.kept);

    let test = ["the plot was thin."];
    let (bank, mapping) = remove_overlap(bank, &test);
    for (old, new) in mapping.iter().enumerate() {
        println!("  id {old} -> {new:?}");
    }

    let dir = tempfile::tempdir()?;
    let prefix = dir.path().join("bank");
    save_bank(&bank, &prefix)?;
    let loaded = load_bank(&prefix)?;
    let store = TextStore::open(&prefix)?;
    for id in 0..loaded.len() {
        println!("{id}: {}", store.get(id).unwrap_or_default());
    }
    Ok(())
}
