//! Times multi-query search over a large memory-mapped int8 bank.
//!
//! ```text
//! cargo run --release --example throughput -- [rows] [dim] [path]
//! ```
//!
//! The bank file is generated on first use (random codes, unit-norm rows)
//! and reused afterwards.

use std::path::PathBuf;
use std::time::Instant;

use bankaug::bank::{read_vectors, Int8VectorWriter};
use bankaug::index::FlatIndex;
use bankaug::vecmath::normalize_f32;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CHUNK: usize = 1 << 20;

fn generate(path: &PathBuf, rows: usize, dim: usize) -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut w = Int8VectorWriter::create(path, dim, rows)?;
    let mut codes = vec![0i8; CHUNK * dim];
    let mut scales = vec![None; CHUNK];
    let mut done = 0;
    while done < rows {
        let n = CHUNK.min(rows - done);
        let bytes: &mut [u8] = bytemuck::cast_slice_mut(&mut codes[..n * dim]);
        rng.fill_bytes(bytes);
        for (row, s) in codes[..n * dim].chunks_exact_mut(dim).zip(&mut scales[..n]) {
            let mut sq = 0i64;
            for c in row.iter_mut() {
                *c = (*c).max(-127);
                sq += (*c as i64) * (*c as i64);
            }
            *s = Some(1.0 / (sq as f32).sqrt());
        }
        w.push_rows(&codes[..n * dim], &scales[..n])?;
        done += n;
    }
    w.finish()?;
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let rows: usize = args.get(1).map_or(Ok(10_000_000), |s| s.parse())?;
    let dim: usize = args.get(2).map_or(Ok(128), |s| s.parse())?;
    let path = args
        .get(3)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join(format!("bankaug-{rows}x{dim}.vec")));

    if !path.exists() {
        let t = Instant::now();
        generate(&path, rows, dim)?;
        println!("generated {} in {:.1}s", path.display(), t.elapsed().as_secs_f64());
    }
    let codes = read_vectors(&path)?;
    println!("{} rows x {} dims, {:.2} GB", codes.count(), codes.dim(), (codes.count() * codes.dim()) as f64 / 1e9);
    let index = FlatIndex::quantized_only(codes)?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let queries: Vec<Vec<f32>> = (0..8)
        .map(|_| {
            let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            normalize_f32(&v).expect("nonzero")
        })
        .collect();
    let t = Instant::now();
    let hits = index.top_k_multi(&queries, 100)?;
    let secs = t.elapsed().as_secs_f64();
    println!(
        "8 queries, k=100: {secs:.2}s, {:.1} M rows/s, best score {:.4}",
        rows as f64 / secs / 1e6,
        hits[0][0].score
    );
    Ok(())
}
