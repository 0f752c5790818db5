//! Similarity evaluation from a `s1<TAB>s2<TAB>score` file with a word
//! vector file, or a small built-in example.
//!
//! ```text
//! cargo run --example sts_eval -- [pairs.tsv vectors.txt]
//! ```

use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use bankaug::data::read_sts_tsv;
use bankaug::embed::{Encoder, WordVectorTable};
use bankaug::pipeline::eval_sts;

const VECTORS: &str = "4 3\ncat 1 0 0\ndog 0.9 0.1 0\ncar 0 1 0\ntruck 0 0.9 0.2\n";
const PAIRS: &str = "cat\tdog\t4.5\ncar\ttruck\t4.0\ncat\tcar\t0.5\ndog\ttruck\t1.0\ncat\tunknownword\t2.0\n";

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (pairs, table) = match args.as_slice() {
        [p, v] => {
            let f = std::fs::File::open(p)?;
            (read_sts_tsv(BufReader::new(f), p)?, WordVectorTable::load(Path::new(v))?)
        }
        _ => (
            read_sts_tsv(PAIRS.as_bytes(), "builtin")?,
            WordVectorTable::read_text(VECTORS.as_bytes(), "builtin")?,
        ),
    };
    let r = eval_sts(&Encoder::Avg(Arc::new(table)), &pairs)?;
    println!(
        "{} pairs ({} dropped as null): pearson {:.4}, spearman {:.4}",
        r.pairs, r.dropped_null, r.pearson, r.spearman
    );
    Ok(())
}
