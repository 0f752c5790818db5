//! Deduplicated sentence bank with stable dense ids.
//!
//! A bank saved under a prefix `p` consists of
//! - `p.txt`: one sentence per line, line number == id, with `\` and newlines escaped;
//! - `p.offsets`: `count + 1` little-endian u64 byte offsets into `p.txt`;
//! - `p.meta.json`: source description and normalization version;
//! - `p.vec`: the embedding matrix, once the bank has been embedded.

mod matrix;
mod text;

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use memmap2::Mmap;
use serde::{Deserialize, Serialize};

pub use matrix::{
    read_vectors, read_vectors_with_dim, write_vectors, Dtype, EmbeddingMatrix, Int8VectorWriter,
};
pub use text::{
    fingerprint, fingerprint_normalized, normalize, segment, SegmentConfig, DEFAULT_MAX_TOKENS,
    DEFAULT_MIN_TOKENS, NORMALIZE_VERSION,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceRecord {
    pub id: u32,
    pub text: String,
    pub fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankMeta {
    pub source: String,
    pub normalize_version: u32,
    pub count: usize,
}

/// Counts reported by [`build_bank`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DedupStats {
    pub seen: usize,
    pub duplicates: usize,
    pub kept: usize,
}

#[derive(Debug)]
pub struct SentenceBank {
    records: Vec<SentenceRecord>,
    vectors: Option<EmbeddingMatrix>,
    meta: BankMeta,
}

impl SentenceBank {
    pub fn records(&self) -> &[SentenceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn text(&self, id: usize) -> &str {
        &self.records[id].text
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.text.as_str())
    }

    pub fn meta(&self) -> &BankMeta {
        &self.meta
    }

    /// Embedding dimension, 0 until vectors are attached.
    pub fn dim(&self) -> usize {
        self.vectors.as_ref().map_or(0, EmbeddingMatrix::dim)
    }

    pub fn vectors(&self) -> Option<&EmbeddingMatrix> {
        self.vectors.as_ref()
    }

    pub fn take_vectors(&mut self) -> Option<EmbeddingMatrix> {
        self.vectors.take()
    }

    /// Attaches an embedding matrix; it must have one row per record and
    /// every non-null row must be unit norm.
    pub fn set_vectors(&mut self, vectors: EmbeddingMatrix) -> Result<()> {
        if vectors.count() != self.records.len() {
            return Err(Error::InvalidInput(format!(
                "matrix has {} rows but bank has {} records",
                vectors.count(),
                self.records.len()
            )));
        }
        for i in 0..vectors.count() {
            if vectors.is_null(i) {
                continue;
            }
            let norm = vectors
                .row_dequantized(i)
                .iter()
                .map(|&x| (x as f64) * (x as f64))
                .sum::<f64>()
                .sqrt();
            let tol = if vectors.dtype() == Dtype::Float32 { 1e-5 } else { 2e-2 };
            if (norm - 1.0).abs() > tol {
                return Err(Error::InvalidInput(format!("row {i} has norm {norm}")));
            }
        }
        self.vectors = Some(vectors);
        Ok(())
    }
}

/// Keeps the first occurrence of every normalized fingerprint, in stream order.
pub fn build_bank<I, S>(sentences: I, source: &str) -> (SentenceBank, DedupStats)
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    let mut stats = DedupStats::default();
    for s in sentences {
        let s = s.as_ref();
        stats.seen += 1;
        let fp = fingerprint(s);
        if !seen.insert(fp) {
            stats.duplicates += 1;
            continue;
        }
        records.push(SentenceRecord {
            id: records.len() as u32,
            text: s.to_string(),
            fingerprint: fp,
        });
    }
    stats.kept = records.len();
    let meta = BankMeta {
        source: source.to_string(),
        normalize_version: NORMALIZE_VERSION,
        count: records.len(),
    };
    (
        SentenceBank {
            records,
            vectors: None,
            meta,
        },
        stats,
    )
}

/// Drops every record whose normalized text equals a normalized test
/// sentence. Returns the new bank and the old→new id mapping.
pub fn remove_overlap<S: AsRef<str>>(
    bank: SentenceBank,
    test_sentences: &[S],
) -> (SentenceBank, Vec<Option<u32>>) {
    let test: HashSet<String> = test_sentences.iter().map(|s| normalize(s.as_ref())).collect();
    let mut mapping = Vec::with_capacity(bank.records.len());
    let mut kept_ids = Vec::new();
    let mut records = Vec::new();
    for rec in bank.records {
        if test.contains(&normalize(&rec.text)) {
            mapping.push(None);
            continue;
        }
        mapping.push(Some(records.len() as u32));
        kept_ids.push(rec.id as usize);
        records.push(SentenceRecord {
            id: records.len() as u32,
            ..rec
        });
    }
    let vectors = bank.vectors.map(|v| {
        if kept_ids.len() == v.count() {
            v
        } else {
            v.select_rows(&kept_ids)
        }
    });
    let meta = BankMeta {
        count: records.len(),
        ..bank.meta
    };
    (
        SentenceBank {
            records,
            vectors,
            meta,
        },
        mapping,
    )
}

pub fn text_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, "txt")
}

pub fn offsets_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, "offsets")
}

pub fn meta_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, "meta.json")
}

pub fn vectors_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, "vec")
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn escape_line(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_line(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Writes text, offsets, metadata and (if present) vectors. On any I/O
/// failure the files written so far are removed.
pub fn save_bank(bank: &SentenceBank, prefix: &Path) -> Result<()> {
    let mut written = Vec::new();
    let result = save_bank_inner(bank, prefix, &mut written);
    if result.is_err() {
        for p in written {
            let _ = fs::remove_file(p);
        }
    }
    result
}

fn save_bank_inner(bank: &SentenceBank, prefix: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let tp = text_path(prefix);
    let op = offsets_path(prefix);
    written.push(tp.clone());
    written.push(op.clone());
    let mut text = BufWriter::new(File::create(&tp).map_err(|e| Error::io(&tp, e))?);
    let mut offsets = BufWriter::new(File::create(&op).map_err(|e| Error::io(&op, e))?);
    let mut pos = 0u64;
    for rec in &bank.records {
        offsets.write_all(&pos.to_le_bytes()).map_err(|e| Error::io(&op, e))?;
        let line = escape_line(&rec.text);
        text.write_all(line.as_bytes())
            .and_then(|_| text.write_all(b"\n"))
            .map_err(|e| Error::io(&tp, e))?;
        pos += line.len() as u64 + 1;
    }
    offsets.write_all(&pos.to_le_bytes()).map_err(|e| Error::io(&op, e))?;
    text.flush().map_err(|e| Error::io(&tp, e))?;
    offsets.flush().map_err(|e| Error::io(&op, e))?;

    let mp = meta_path(prefix);
    written.push(mp.clone());
    let meta = serde_json::to_string_pretty(&bank.meta).expect("meta serializes");
    fs::write(&mp, meta).map_err(|e| Error::io(&mp, e))?;

    if let Some(v) = &bank.vectors {
        let vp = vectors_path(prefix);
        written.push(vp.clone());
        write_vectors(v, &vp)?;
    }
    Ok(())
}

/// Loads a saved bank. Vectors are memory-mapped when present.
pub fn load_bank(prefix: &Path) -> Result<SentenceBank> {
    let mp = meta_path(prefix);
    let meta: BankMeta = serde_json::from_str(
        &fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?,
    )
    .map_err(|e| Error::format(&mp, e.to_string()))?;
    let tp = text_path(prefix);
    let file = File::open(&tp).map_err(|e| Error::io(&tp, e))?;
    let mut records = Vec::with_capacity(meta.count);
    for line in BufReader::new(file).lines() {
        let text = unescape_line(&line.map_err(|e| Error::io(&tp, e))?);
        let fp = fingerprint(&text);
        records.push(SentenceRecord {
            id: records.len() as u32,
            text,
            fingerprint: fp,
        });
    }
    if records.len() != meta.count {
        return Err(Error::format(
            &tp,
            format!("{} lines but metadata says {}", records.len(), meta.count),
        ));
    }
    let vp = vectors_path(prefix);
    let vectors = if vp.exists() {
        let v = read_vectors(&vp)?;
        if v.count() != records.len() {
            return Err(Error::format(&vp, "row count does not match bank"));
        }
        Some(v)
    } else {
        None
    };
    Ok(SentenceBank {
        records,
        vectors,
        meta,
    })
}

/// Random access to a saved bank's text by id, without loading it.
pub struct TextStore {
    text: Mmap,
    offsets: Mmap,
}

impl TextStore {
    pub fn open(prefix: &Path) -> Result<Self> {
        let tp = text_path(prefix);
        let op = offsets_path(prefix);
        let tf = File::open(&tp).map_err(|e| Error::io(&tp, e))?;
        let of = File::open(&op).map_err(|e| Error::io(&op, e))?;
        // SAFETY: bank files are immutable once written.
        let text = unsafe { Mmap::map(&tf) }.map_err(|e| Error::io(&tp, e))?;
        let offsets = unsafe { Mmap::map(&of) }.map_err(|e| Error::io(&op, e))?;
        if offsets.len() < 8 || offsets.len() % 8 != 0 {
            return Err(Error::format(&op, "offset table length not a multiple of 8"));
        }
        let store = Self { text, offsets };
        if store.offset(store.len()) as usize != store.text.len() {
            return Err(Error::format(&op, "offset table does not cover text file"));
        }
        Ok(store)
    }

    fn offset(&self, i: usize) -> u64 {
        u64::from_le_bytes(self.offsets[8 * i..8 * i + 8].try_into().unwrap())
    }

    pub fn len(&self) -> usize {
        self.offsets.len() / 8 - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: usize) -> Option<String> {
        if id >= self.len() {
            return None;
        }
        let (a, b) = (self.offset(id) as usize, self.offset(id + 1) as usize);
        let line = std::str::from_utf8(&self.text[a..b - 1]).ok()?;
        Some(unescape_line(line))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(b: &SentenceBank) -> Vec<&str> {
        b.texts().collect()
    }

    #[test]
    fn dedup_on_normalized_form() {
        let (b, stats) = build_bank(["Hello world.", "hello   WORLD."], "test");
        assert_eq!(texts(&b), vec!["Hello world."]);
        assert_eq!(stats.duplicates, 1);
    }

    #[test]
    fn dense_ids() {
        let (b, _) = build_bank(["a b c", "d e f"], "test");
        let ids: Vec<u32> = b.records().iter().map(|r| r.id).collect();
        assert_eq!(ids, vec![0, 1]);
    }

    #[test]
    fn empty_stream() {
        let (b, stats) = build_bank(Vec::<String>::new(), "test");
        assert_eq!(b.len(), 0);
        assert_eq!(stats.kept, 0);
    }

    #[test]
    fn overlap_removed_and_ids_redensified() {
        let (b, _) = build_bank(["good movie", "bad plot"], "t");
        let (b, map) = remove_overlap(b, &["bad plot"]);
        assert_eq!(texts(&b), vec!["good movie"]);
        assert_eq!(map, vec![Some(0), None]);

        let (b, _) = build_bank(["good movie", "bad plot", "fine acting"], "t");
        let (b, map) = remove_overlap(b, &["Good  Movie"]);
        assert_eq!(texts(&b), vec!["bad plot", "fine acting"]);
        assert_eq!(map, vec![None, Some(0), Some(1)]);
        assert_eq!(b.records()[1].id, 1);
    }

    #[test]
    fn disjoint_test_set_is_identity() {
        let (b, _) = build_bank(["good movie", "bad plot"], "t");
        let (b, map) = remove_overlap(b, &["something else"]);
        assert_eq!(b.len(), 2);
        assert_eq!(map, vec![Some(0), Some(1)]);
    }

    #[test]
    fn superset_test_set_empties_bank() {
        let (b, _) = build_bank(["good movie", "bad plot"], "t");
        let (b, _) = remove_overlap(b, &["bad plot", "good movie", "x"]);
        assert!(b.is_empty());
    }

    #[test]
    fn overlap_removal_carries_vectors() {
        let (mut b, _) = build_bank(["good movie", "bad plot", "fine acting"], "t");
        let m = EmbeddingMatrix::from_rows(
            2,
            &[Some(vec![1.0f32, 0.0]), Some(vec![0.0, 1.0]), None],
        )
        .unwrap();
        b.set_vectors(m).unwrap();
        let (b, _) = remove_overlap(b, &["good movie"]);
        let v = b.vectors().unwrap();
        assert_eq!(v.count(), 2);
        assert_eq!(v.row_f32(0), &[0.0, 1.0]);
        assert!(v.is_null(1));
    }

    #[test]
    fn set_vectors_checks_norm_and_count() {
        let (mut b, _) = build_bank(["a b c"], "t");
        let bad = EmbeddingMatrix::from_rows(2, &[Some(vec![1.0f32, 1.0])]).unwrap();
        assert!(b.set_vectors(bad).is_err());
        let two = EmbeddingMatrix::from_rows(2, &[Some(vec![1.0f32, 0.0]), None]).unwrap();
        assert!(b.set_vectors(two).is_err());
    }

    #[test]
    fn escape_roundtrip() {
        for s in ["plain", "a\\nb", "line\nbreak", "trail\\", "\r\n\\\\"] {
            assert_eq!(unescape_line(&escape_line(s)), s);
            assert!(!escape_line(s).contains('\n'));
        }
    }

    #[test]
    fn save_load_and_text_store() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("bank");
        let (mut b, _) = build_bank(["first one here", "multi\nline text", "back\\slash"], "unit");
        let m = EmbeddingMatrix::from_rows(
            2,
            &[Some(vec![1.0f32, 0.0]), None, Some(vec![0.6, 0.8])],
        )
        .unwrap();
        b.set_vectors(m).unwrap();
        save_bank(&b, &prefix).unwrap();

        let loaded = load_bank(&prefix).unwrap();
        assert_eq!(loaded.records(), b.records());
        assert_eq!(loaded.meta(), b.meta());
        assert_eq!(loaded.vectors().unwrap().data_f32(), b.vectors().unwrap().data_f32());

        let store = TextStore::open(&prefix).unwrap();
        assert_eq!(store.len(), 3);
        assert_eq!(store.get(1).as_deref(), Some("multi\nline text"));
        assert_eq!(store.get(2).as_deref(), Some("back\\slash"));
        assert_eq!(store.get(3), None);
    }
}
