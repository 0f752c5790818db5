//! Feed-forward softmax classifier over sentence embeddings.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"SAMD";
pub const MODEL_VERSION: u32 = 1;

/// Post-softmax class distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SoftLabel(Vec<f64>);

impl SoftLabel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "not a probability distribution (sum {sum})"
            )));
        }
        Ok(Self(probs))
    }

    pub fn one_hot(class: usize, num_classes: usize) -> Self {
        let mut p = vec![0.0; num_classes];
        p[class] = 1.0;
        Self(p)
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self(vec![1.0 / num_classes as f64; num_classes])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Most probable class, lowest id on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// `Σ_c t_c ln(t_c / p_c)` with `0 · ln 0 = 0`.
pub fn kl_div(target: &SoftLabel, predicted: &SoftLabel) -> f64 {
    target
        .0
        .iter()
        .zip(&predicted.0)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &p)| t * (t / p).ln())
        .sum()
}

pub fn cross_entropy(label: usize, predicted: &SoftLabel) -> f64 {
    -predicted.0[label].ln()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden,
            num_classes,
        }
    }

    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        Self::new(input_dim, Vec::new(), num_classes)
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.num_classes);
        w
    }

    pub fn parameter_count(&self) -> usize {
        self.widths().windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim × in_dim`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    arch: Architecture,
    layers: Vec<Dense>,
    seed: u64,
}

impl Classifier {
    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn new(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = arch
            .widths()
            .windows(2)
            .map(|p| {
                let bound = 1.0 / (p[0] as f64).sqrt();
                Dense {
                    in_dim: p[0],
                    out_dim: p[1],
                    w: (0..p[0] * p[1]).map(|_| rng.gen_range(-bound..=bound)).collect(),
                    b: vec![0.0; p[1]],
                }
            })
            .collect();
        Self { arch, layers, seed }
    }

    pub fn zeros(arch: Architecture) -> Self {
        let layers = arch
            .widths()
            .windows(2)
            .map(|p| Dense {
                in_dim: p[0],
                out_dim: p[1],
                w: vec![0.0; p[0] * p[1]],
                b: vec![0.0; p[1]],
            })
            .collect();
        Self {
            arch,
            layers,
            seed: 0,
        }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.arch.parameter_count()
    }

    /// All parameters, layer by layer (weights then biases).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend(&l.w);
            out.extend(&l.b);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.parameter_count());
        let mut at = 0;
        for l in &mut self.layers {
            let (nw, nb) = (l.w.len(), l.b.len());
            l.w.copy_from_slice(&params[at..at + nw]);
            at += nw;
            l.b.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    /// Activations of every layer: `acts[0]` is the input, the last entry the logits.
    pub(crate) fn activations<T: Copy + Into<f64>>(&self, x: &[T]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.iter().map(|&v| v.into()).collect::<Vec<f64>>());
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let h = acts.last().expect("input present");
            let mut z = l.b.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &l.w[o * l.in_dim..(o + 1) * l.in_dim];
                *zo += row.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
            }
            if li != last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    pub fn logits(&self, x: &[f32]) -> Result<Vec<f64>> {
        if x.len() != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim,
                actual: x.len(),
            });
        }
        Ok(self.activations(x).pop().expect("logits"))
    }

    pub fn forward(&self, x: &[f32]) -> Result<SoftLabel> {
        Ok(SoftLabel(softmax(&self.logits(x)?)))
    }

    pub fn predict(&self, x: &[f32]) -> Result<usize> {
        Ok(self.forward(x)?.argmax())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        w.write_all(&(self.arch.input_dim as u32).to_le_bytes())?;
        w.write_all(&(self.arch.num_classes as u32).to_le_bytes())?;
        w.write_all(&(self.arch.hidden.len() as u32).to_le_bytes())?;
        for &h in &self.arch.hidden {
            w.write_all(&(h as u32).to_le_bytes())?;
        }
        // dtype float32, activation tanh, two reserved bytes
        w.write_all(&[0, 0, 0, 0])?;
        w.write_all(&self.seed.to_le_bytes())?;
        for l in &self.layers {
            for &x in l.w.iter().chain(&l.b) {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
        }
        w.flush()
    }

    /// Reads a model file. Parameters are stored as float32.
    pub fn read_from<R: Read>(mut r: R, origin: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|e| Error::io(origin, e))?;
        let bad = |why: &str| Error::format(origin, why.to_string());
        let mut at = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = buf.get(at..at + n).ok_or_else(|| bad("truncated model file"))?;
            at += n;
            Ok(s)
        };
        if take(4)? != MODEL_MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes")) as usize;
        if u32_at(take(4)?) != MODEL_VERSION as usize {
            return Err(bad("unsupported version"));
        }
        let input_dim = u32_at(take(4)?);
        let num_classes = u32_at(take(4)?);
        let n_hidden = u32_at(take(4)?);
        if n_hidden > 64 {
            return Err(bad("implausible layer count"));
        }
        let mut hidden = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden.push(u32_at(take(4)?));
        }
        let flags = take(4)?;
        if flags[0] != 0 || flags[1] != 0 {
            return Err(bad("unsupported dtype or activation"));
        }
        let seed = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        let arch = Architecture::new(input_dim, hidden, num_classes);
        let n = arch.parameter_count();
        let raw = take(4 * n)?;
        let params: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        if at != buf.len() {
            return Err(bad("trailing bytes after parameters"));
        }
        let mut model = Classifier::zeros(arch);
        model.seed = seed;
        model.set_params(&params);
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f), path)
    }
}
