//! Labeled task data (`label<TAB>text` TSV).

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledDataset {
    examples: Vec<(String, usize)>,
    labels: Vec<String>,
}

impl LabeledDataset {
    pub fn new(labels: Vec<String>) -> Self {
        Self {
            examples: Vec::new(),
            labels,
        }
    }

    /// Builds a dataset from (label name, text) pairs; the label vocabulary
    /// follows order of first appearance. [`Self::read_tsv`] sorts it instead.
    pub fn from_named<I, L, T>(rows: I) -> Self
    where
        I: IntoIterator<Item = (L, T)>,
        L: AsRef<str>,
        T: Into<String>,
    {
        let mut ds = Self::default();
        let mut ids: HashMap<String, usize> = HashMap::new();
        for (label, text) in rows {
            let label = label.as_ref();
            let id = *ids.entry(label.to_string()).or_insert_with(|| {
                ds.labels.push(label.to_string());
                ds.labels.len() - 1
            });
            ds.examples.push((text.into(), id));
        }
        ds
    }

    pub fn push(&mut self, text: impl Into<String>, label: usize) -> Result<()> {
        if label >= self.labels.len() {
            return Err(Error::InvalidInput(format!(
                "label id {label} outside vocabulary of {}",
                self.labels.len()
            )));
        }
        self.examples.push((text.into(), label));
        Ok(())
    }

    pub fn examples(&self) -> &[(String, usize)] {
        &self.examples
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.examples.iter().map(|(t, _)| t.as_str())
    }

    pub fn label_ids(&self) -> Vec<usize> {
        self.examples.iter().map(|&(_, l)| l).collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.labels.len()];
        for &(_, l) in &self.examples {
            c[l] += 1;
        }
        c
    }

    /// Subset by example index, keeping the full label vocabulary.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            examples: idx.iter().map(|&i| self.examples[i].clone()).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn read_tsv<R: BufRead>(reader: R, origin: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::parse(origin, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let (label, text) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(format!("{origin}:{}", n + 1), "missing tab"))?;
            rows.push((label.to_string(), text.to_string()));
        }
        let mut names: Vec<String> = rows.iter().map(|(l, _)| l.clone()).collect();
        names.sort();
        names.dedup();
        Self::from_named(rows).align_to(&names)
    }

    /// Re-indexes labels against `labels`; fails on a label missing from it.
    pub fn align_to(&self, labels: &[String]) -> Result<Self> {
        let ids: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut out = Self::new(labels.to_vec());
        for (text, l) in &self.examples {
            let name = &self.labels[*l];
            let id = *ids
                .get(name.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("label {name:?} is not in the reference label set")))?;
            out.examples.push((text.clone(), id));
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_tsv(std::io::BufReader::new(f), &path.display().to_string())
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (text, l) in &self.examples {
            let clean = text.replace(['\t', '\n'], " ");
            writeln!(w, "{}\t{}", self.labels[*l], clean)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_tsv(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }
}

/// Reads a two-column TSV of sentence pairs.
pub fn read_pairs_tsv<R: BufRead>(reader: R, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(origin, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next()) {
            (Some(a), Some(b)) => out.push((a.to_string(), b.to_string())),
            _ => return Err(Error::parse(format!("{origin}:{}", n + 1), "expected two columns")),
        }
    }
    Ok(out)
}

/// `s1<TAB>s2<TAB>score` rows for similarity evaluation.
pub fn read_sts_tsv<R: BufRead>(reader: R, origin: &str) -> Result<Vec<(String, String, f64)>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(origin, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let loc = || format!("{origin}:{}", n + 1);
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            return Err(Error::parse(loc(), "expected three columns"));
        }
        let gold: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(loc(), format!("bad score {:?}", cols[2])))?;
        out.push((cols[0].to_string(), cols[1].to_string(), gold));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_label_vocab_is_sorted() {
        let ds = LabeledDataset::read_tsv("pos\tgreat\nneg\tawful\npos\tfine\n".as_bytes(), "m").unwrap();
        assert_eq!(ds.labels(), &["neg", "pos"]);
        assert_eq!(ds.counts(), vec![1, 2]);
        assert_eq!(ds.examples()[1], ("awful".to_string(), 0));
        let other = LabeledDataset::read_tsv("pos\tok\nneg\tbad\n".as_bytes(), "m").unwrap();
        assert_eq!(other.labels(), ds.labels());
    }

    #[test]
    fn align_to_reference() {
        let ds = LabeledDataset::from_named([("b", "x"), ("a", "y")]);
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let al = ds.align_to(&names).unwrap();
        assert_eq!(al.label_ids(), vec![1, 0]);
        assert_eq!(al.num_classes(), 3);
        assert!(ds.align_to(&names[..1]).is_err());
    }

    #[test]
    fn text_may_contain_tabs_after_first() {
        let ds = LabeledDataset::read_tsv("a\tx\ty\n".as_bytes(), "m").unwrap();
        assert_eq!(ds.examples()[0].0, "x\ty");
        assert!(LabeledDataset::read_tsv("no tab here\n".as_bytes(), "m").is_err());
    }

    #[test]
    fn push_checks_label() {
        let mut ds = LabeledDataset::new(vec!["a".into()]);
        assert!(ds.push("t", 0).is_ok());
        assert!(ds.push("t", 1).is_err());
    }

    #[test]
    fn pairs() {
        let p = read_pairs_tsv("a b\tc d\n\ne\tf\n".as_bytes(), "m").unwrap();
        assert_eq!(p.len(), 2);
        assert!(read_pairs_tsv("single\n".as_bytes(), "m").is_err());
    }

    #[test]
    fn sts_rows() {
        let rows = read_sts_tsv("a b\tc d\t4.5\n\nx\ty\t0\n".as_bytes(), "m").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], ("a b".into(), "c d".into(), 4.5));
        assert!(read_sts_tsv("a\tb\n".as_bytes(), "m").is_err());
        assert!(read_sts_tsv("a\tb\tnope\n".as_bytes(), "m").is_err());
    }
}
