//! Teacher-annotated synthetic examples and their JSON Lines format.

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Classifier, SoftLabel};
use crate::embed::Encoder;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticExample {
    /// Bank id, when the sentence came from a bank.
    pub id: Option<u32>,
    pub text: String,
    pub probs: SoftLabel,
    pub confidence: f64,
    pub assigned_class: usize,
}

impl SyntheticExample {
    pub fn new(id: Option<u32>, text: String, probs: SoftLabel) -> Self {
        Self {
            id,
            text,
            confidence: probs.max(),
            assigned_class: probs.argmax(),
            probs,
        }
    }

    /// Replaces the soft label with its one-hot argmax.
    pub fn discretized(&self) -> Self {
        Self::new(
            self.id,
            self.text.clone(),
            SoftLabel::one_hot(self.assigned_class, self.probs.len()),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AnnotateStats {
    pub annotated: usize,
    pub dropped_null: usize,
}

/// Labels pre-embedded sentences; `None` embeddings are dropped.
pub fn annotate_embedded(
    model: &Classifier,
    items: Vec<(Option<u32>, String, Option<Vec<f32>>)>,
) -> Result<(Vec<SyntheticExample>, AnnotateStats)> {
    let dropped_null = items.iter().filter(|(_, _, e)| e.is_none()).count();
    let out: Vec<SyntheticExample> = items
        .into_par_iter()
        .filter_map(|(id, text, e)| e.map(|e| (id, text, e)))
        .map(|(id, text, e)| Ok(SyntheticExample::new(id, text, model.forward(&e)?)))
        .collect::<Result<_>>()?;
    let stats = AnnotateStats {
        annotated: out.len(),
        dropped_null,
    };
    Ok((out, stats))
}

/// Embeds and labels raw sentences with a trained model.
pub fn annotate<S: AsRef<str> + Sync>(
    model: &Classifier,
    sentences: &[S],
    encoder: &Encoder,
) -> Result<(Vec<SyntheticExample>, AnnotateStats)> {
    let items = sentences
        .par_iter()
        .map(|s| (None, s.as_ref().to_string(), encoder.encode(s.as_ref())))
        .collect();
    annotate_embedded(model, items)
}

/// Rounds to 8 significant digits.
fn sig8(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.7e}").parse().expect("formatted float parses")
}

#[derive(Serialize, Deserialize)]
struct Line {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u32>,
    text: String,
    probs: Vec<f64>,
    confidence: f64,
}

pub fn write_jsonl<W: Write>(examples: &[SyntheticExample], mut w: W) -> std::io::Result<()> {
    for ex in examples {
        let line = Line {
            id: ex.id,
            text: ex.text.clone(),
            probs: ex.probs.probs().iter().map(|&p| sig8(p)).collect(),
            confidence: sig8(ex.confidence),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Reads synthetic examples. Probabilities are renormalized to absorb the
/// 8-digit rounding of the file format.
pub fn read_jsonl<R: BufRead>(reader: R, origin: &str) -> Result<Vec<SyntheticExample>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(origin, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let loc = || format!("{origin}:{}", n + 1);
        let l: Line = serde_json::from_str(&line).map_err(|e| Error::parse(loc(), e.to_string()))?;
        let sum: f64 = l.probs.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::parse(loc(), "probabilities sum to zero"));
        }
        let probs = SoftLabel::new(l.probs.iter().map(|p| p / sum).collect())
            .map_err(|e| Error::parse(loc(), e.to_string()))?;
        out.push(SyntheticExample::new(l.id, l.text, probs));
    }
    Ok(out)
}

pub fn save_jsonl(examples: &[SyntheticExample], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl(examples, std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_jsonl(path: &Path) -> Result<Vec<SyntheticExample>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(std::io::BufReader::new(f), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Architecture;
    use crate::embed::WordVectorTable;
    use std::sync::Arc;

    #[test]
    fn zero_model_confidence_is_uniform() {
        let table = Arc::new(
            WordVectorTable::new(2, vec![("a".into(), vec![1.0, 0.0]), ("b".into(), vec![0.0, 1.0])])
                .unwrap(),
        );
        let enc = Encoder::Avg(table);
        let m = Classifier::zeros(Architecture::linear(2, 4));
        let (ex, stats) = annotate(&m, &["a b", "zzz", "b"], &enc).unwrap();
        assert_eq!(stats.dropped_null, 1);
        assert_eq!(ex.len(), 2);
        assert!(ex.iter().all(|e| (e.confidence - 0.25).abs() < 1e-15 && e.assigned_class == 0));
        let (empty, _) = annotate::<&str>(&m, &[], &enc).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn jsonl_format() {
        let ex = SyntheticExample::new(
            Some(4),
            "a \"quoted\" text".into(),
            SoftLabel::new(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap(),
        );
        let mut buf = Vec::new();
        write_jsonl(std::slice::from_ref(&ex), &mut buf).unwrap();
        let s = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            s,
            "{\"id\":4,\"text\":\"a \\\"quoted\\\" text\",\"probs\":[0.33333333,0.66666667],\"confidence\":0.66666667}\n"
        );
        let back = read_jsonl(buf.as_slice(), "m").unwrap();
        assert_eq!(back[0].text, ex.text);
        assert_eq!(back[0].assigned_class, 1);
        assert!((back[0].probs.probs()[0] - 1.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn discretized_is_one_hot() {
        let ex = SyntheticExample::new(None, "t".into(), SoftLabel::new(vec![0.2, 0.8]).unwrap());
        let d = ex.discretized();
        assert_eq!(d.probs.probs(), &[0.0, 1.0]);
        assert_eq!(d.confidence, 1.0);
    }
}
