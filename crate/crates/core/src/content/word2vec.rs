//! Skip-gram word embeddings trained with negative sampling.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_vocabulary, Vocabulary};
use crate::corpus::{tokenize, Corpus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Word2VecConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly to `lr * 1e-4`.
    pub lr: f64,
    pub seed: u64,
}

impl Default for Word2VecConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    vectors: Vec<f64>,
    /// Mean negative-sampling loss per training epoch.
    pub epoch_losses: Vec<f64>,
    pub config: Option<Word2VecConfig>,
}

impl EmbeddingMatrix {
    pub fn from_rows(tokens: Vec<String>, dim: usize, vectors: Vec<f64>) -> Result<Self> {
        if dim == 0 || vectors.len() != tokens.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: tokens.len() * dim,
                got: vectors.len(),
            });
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Self {
            tokens,
            index,
            dim,
            vectors,
            epoch_losses: Vec::new(),
            config: None,
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

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.row(i))
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (x, y) = (self.vector(a)?, self.vector(b)?);
        let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        Some(dot / (nx * ny))
    }

    /// Text form: `embeddings <rows> <dim>` then one `token v1 .. vd` line per
    /// row. Floats use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut out = format!("embeddings {} {}\n", self.len(), self.dim);
        for (i, t) in self.tokens.iter().enumerate() {
            out.push_str(t);
            for v in self.row(i) {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::ModelFormat(format!("embeddings: {m}"));
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("empty"))?
            .split(' ')
            .collect();
        let [tag, rows, dim] = header[..] else {
            return Err(bad("bad header"));
        };
        if tag != "embeddings" {
            return Err(bad("bad header"));
        }
        let rows: usize = rows.parse().map_err(|_| bad("bad row count"))?;
        let dim: usize = dim.parse().map_err(|_| bad("bad dim"))?;
        let mut tokens = Vec::with_capacity(rows);
        let mut vectors = Vec::with_capacity(rows * dim);
        for _ in 0..rows {
            let mut parts = lines.next().ok_or_else(|| bad("missing rows"))?.split(' ');
            tokens.push(
                parts
                    .next()
                    .ok_or_else(|| bad("missing token"))?
                    .to_string(),
            );
            let before = vectors.len();
            for p in parts {
                vectors.push(p.parse::<f64>().map_err(|_| bad("bad value"))?);
            }
            if vectors.len() - before != dim {
                return Err(bad("row width differs from dim"));
            }
        }
        Self::from_rows(tokens, dim, vectors)
    }
}

/// Cumulative unigram^0.75 distribution for drawing negatives.
struct NegativeSampler {
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    fn new(vocab: &Vocabulary) -> Self {
        let mut acc = 0.0;
        let cumulative = vocab
            .counts()
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().unwrap();
        let x = rng.gen::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= x)
            .min(self.cumulative.len() - 1)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trains skip-gram embeddings over every utterance of the given corpora.
/// Each utterance is one sentence; context windows do not cross turns.
pub fn train_embeddings(corpora: &[&Corpus], cfg: &Word2VecConfig) -> Result<EmbeddingMatrix> {
    if cfg.dim == 0 {
        return Err(Error::InvalidConfig(
            "embedding dim must be positive".into(),
        ));
    }
    if cfg.epochs == 0 || cfg.window == 0 {
        return Err(Error::InvalidConfig(
            "epochs and window must be positive".into(),
        ));
    }
    let vocab = build_vocabulary(corpora)?;
    let sentences: Vec<Vec<usize>> = corpora
        .iter()
        .flat_map(|c| c.utterances())
        .map(|u| {
            tokenize(&u.text)
                .iter()
                .map(|t| vocab.index_of(t).expect("vocabulary covers corpus"))
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect();
    let total_tokens: usize = sentences.iter().map(Vec::len).sum();

    let d = cfg.dim;
    let v = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut input: Vec<f64> = (0..v * d)
        .map(|_| (rng.gen::<f64>() - 0.5) / d as f64)
        .collect();
    let mut output = vec![0.0; v * d];
    let sampler = NegativeSampler::new(&vocab);
    let mut grad = vec![0.0; d];

    let total_steps = (cfg.epochs * total_tokens) as f64;
    let mut step = 0usize;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut loss = 0.0;
        let mut pairs = 0usize;
        for sentence in &sentences {
            for (i, &center) in sentence.iter().enumerate() {
                let lr = cfg.lr * (1.0 - step as f64 / total_steps).max(1e-4);
                step += 1;
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window + 1).min(sentence.len());
                for (j, &context) in sentence.iter().enumerate().take(hi).skip(lo) {
                    if j == i {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let w_in = &mut input[center * d..(center + 1) * d];
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let neg = sampler.sample(&mut rng);
                            if neg == context {
                                continue;
                            }
                            (neg, 0.0)
                        };
                        let w_out = &mut output[target * d..(target + 1) * d];
                        let dot: f64 = w_in.iter().zip(w_out.iter()).map(|(a, b)| a * b).sum();
                        let p = sigmoid(dot);
                        loss -= if label > 0.5 {
                            p.max(1e-12).ln()
                        } else {
                            (1.0 - p).max(1e-12).ln()
                        };
                        let g = (label - p) * lr;
                        for ((gr, wo), wi) in grad.iter_mut().zip(w_out.iter_mut()).zip(w_in.iter())
                        {
                            *gr += g * *wo;
                            *wo += g * wi;
                        }
                    }
                    for (wi, gr) in w_in.iter_mut().zip(&grad) {
                        *wi += gr;
                    }
                    pairs += 1;
                }
            }
        }
        let mean = if pairs == 0 { 0.0 } else { loss / pairs as f64 };
        log::debug!("word2vec epoch loss {mean:.5}");
        epoch_losses.push(mean);
    }

    let mut emb = EmbeddingMatrix::from_rows(vocab.tokens().to_vec(), d, input)?;
    emb.epoch_losses = epoch_losses;
    emb.config = Some(*cfg);
    Ok(emb)
}
