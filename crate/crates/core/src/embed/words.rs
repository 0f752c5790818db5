//! Word vector tables in the plain text vector format
//! (`count dim` header, then `token v1 .. vd` per line).

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Lowercases, splits on whitespace and trims ASCII punctuation from token ends.
pub fn tokenize(sentence: &str) -> impl Iterator<Item = String> + '_ {
    sentence.split_whitespace().filter_map(|raw| {
        let t = raw.trim_matches(|c: char| c.is_ascii_punctuation());
        (!t.is_empty()).then(|| t.to_lowercase())
    })
}

#[derive(Debug, Clone)]
pub struct WordVectorTable {
    dim: usize,
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    vectors: Vec<f32>,
    unigram_prob: Vec<f64>,
}

impl WordVectorTable {
    /// Table with uniform unigram probabilities.
    pub fn new(dim: usize, entries: Vec<(String, Vec<f32>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("word vector dimension must be positive".into()));
        }
        let mut index = HashMap::with_capacity(entries.len());
        let mut tokens = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len() * dim);
        for (tok, v) in entries {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            // First definition wins, as in most text vector readers.
            if index.contains_key(&tok) {
                continue;
            }
            index.insert(tok.clone(), tokens.len());
            tokens.push(tok);
            vectors.extend_from_slice(&v);
        }
        let n = tokens.len();
        let unigram_prob = vec![if n == 0 { 0.0 } else { 1.0 / n as f64 }; n];
        Ok(Self {
            dim,
            index,
            tokens,
            vectors,
            unigram_prob,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn vector(&self, id: usize) -> &[f32] {
        &self.vectors[id * self.dim..(id + 1) * self.dim]
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.lookup(token).map(|i| self.vector(i))
    }

    pub fn prob(&self, id: usize) -> f64 {
        self.unigram_prob[id]
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// In-vocabulary token ids of a sentence, in order.
    pub fn token_ids(&self, sentence: &str) -> Vec<usize> {
        tokenize(sentence).filter_map(|t| self.lookup(&t)).collect()
    }

    /// Re-estimates p(w) from a corpus with add-one smoothing, so every
    /// vocabulary entry has positive probability and they sum to one.
    pub fn estimate_unigram<I, S>(&mut self, sentences: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts = vec![1u64; self.len()];
        for s in sentences {
            for id in self.token_ids(s.as_ref()) {
                counts[id] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        self.unigram_prob = counts.iter().map(|&c| c as f64 / total as f64).collect();
    }

    pub fn unigram_probs(&self) -> &[f64] {
        &self.unigram_prob
    }

    pub fn set_unigram_probs(&mut self, probs: Vec<f64>) -> Result<()> {
        if probs.len() != self.len() {
            return Err(Error::InvalidInput("probability table length mismatch".into()));
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("probabilities sum to {sum}")));
        }
        self.unigram_prob = probs;
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R, origin: &str) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(format!("{origin}:1"), "missing header"))?
            .map_err(|e| Error::parse(origin, e.to_string()))?;
        let mut parts = header.split_whitespace();
        let parse_usize = |s: Option<&str>, what: &str| {
            s.and_then(|x| x.parse::<usize>().ok())
                .ok_or_else(|| Error::parse(format!("{origin}:1"), format!("bad {what} in header")))
        };
        let count = parse_usize(parts.next(), "count")?;
        let dim = parse_usize(parts.next(), "dim")?;
        let mut entries = Vec::with_capacity(count);
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::parse(origin, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let loc = || format!("{origin}:{}", n + 2);
            let mut fields = line.split(' ').filter(|f| !f.is_empty());
            let tok = fields.next().ok_or_else(|| Error::parse(loc(), "empty line"))?;
            let v: Vec<f32> = fields
                .map(|f| f.trim().parse::<f32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(loc(), e.to_string()))?;
            if v.len() != dim {
                return Err(Error::parse(loc(), format!("expected {dim} values, got {}", v.len())));
            }
            entries.push((tok.to_string(), v));
        }
        if entries.len() != count {
            return Err(Error::parse(
                origin,
                format!("header declares {count} vectors, found {}", entries.len()),
            ));
        }
        Self::new(dim, entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_text(std::io::BufReader::new(f), &path.display().to_string())
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (i, tok) in self.tokens.iter().enumerate() {
            write!(w, "{tok}")?;
            for x in self.vector(i) {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_strips_punctuation_and_case() {
        let t: Vec<String> = tokenize("I liked it. Really, GREAT!").collect();
        assert_eq!(t, vec!["i", "liked", "it", "really", "great"]);
        assert_eq!(tokenize("... !!").count(), 0);
    }

    #[test]
    fn reads_text_format() {
        let src = "2 3\ngood 1 0 0\nmovie 0 1 0.5\n";
        let t = WordVectorTable::read_text(src.as_bytes(), "mem").unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("movie").unwrap(), &[0.0, 1.0, 0.5]);
        let total: f64 = (0..t.len()).map(|i| t.prob(i)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(WordVectorTable::read_text("1 2\ngood 1\n".as_bytes(), "m").is_err());
        assert!(WordVectorTable::read_text("2 2\ngood 1 0\n".as_bytes(), "m").is_err());
        assert!(WordVectorTable::read_text("x 2\n".as_bytes(), "m").is_err());
    }

    #[test]
    fn text_roundtrip() {
        let t = WordVectorTable::new(
            2,
            vec![("a".into(), vec![0.25, -1.5]), ("b".into(), vec![3.0, 0.0])],
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_text(&mut buf).unwrap();
        let back = WordVectorTable::read_text(buf.as_slice(), "mem").unwrap();
        assert_eq!(back.get("a"), t.get("a"));
        assert_eq!(back.get("b"), t.get("b"));
    }

    #[test]
    fn unigram_estimate_sums_to_one() {
        let mut t = WordVectorTable::new(
            1,
            vec![("a".into(), vec![1.0]), ("b".into(), vec![1.0]), ("c".into(), vec![1.0])],
        )
        .unwrap();
        t.estimate_unigram(["a a b", "a zzz"]);
        let total: f64 = (0..3).map(|i| t.prob(i)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // counts 4, 2, 1 after smoothing
        assert!((t.prob(0) - 4.0 / 7.0).abs() < 1e-12);
        assert!((t.prob(2) - 1.0 / 7.0).abs() < 1e-12);
    }
}
