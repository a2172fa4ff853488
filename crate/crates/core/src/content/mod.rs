//! Content features: word embeddings learned from the corpus, utterance
//! vectors, k-means clusters over them and a 2-D PCA projection for
//! inspecting the clusters.

mod kmeans;
mod pca;
mod word2vec;

use std::collections::HashMap;
use std::sync::Arc;

use crate::corpus::{tokenize, Corpus};
use crate::encoding::ContentFeaturizer;
use crate::error::{Error, Result};

pub use kmeans::{kmeans_fit, KMeansConfig, KMeansModel};
pub use pca::{pca_2d, Pca2d};
pub use word2vec::{train_embeddings, EmbeddingMatrix, Word2VecConfig};

/// Token vocabulary ordered by descending count, ties alphabetical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_counts(counts: HashMap<String, u64>) -> Result<Self> {
        let mut entries: Vec<(String, u64)> =
            counts.into_iter().filter(|(t, _)| !t.is_empty()).collect();
        if entries.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i))
            .collect();
        let (tokens, counts) = entries.into_iter().unzip();
        Ok(Self {
            tokens,
            counts,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

/// Vocabulary over every utterance of every corpus given (train and test
/// together, so no token is out of vocabulary at test time).
pub fn build_vocabulary(corpora: &[&Corpus]) -> Result<Vocabulary> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for c in corpora {
        for u in c.utterances() {
            for t in tokenize(&u.text) {
                *counts.entry(t).or_default() += 1;
            }
        }
    }
    Vocabulary::from_counts(counts)
}

/// Mean of the token vectors; the zero vector for an empty token list.
pub fn utterance2vec<S: AsRef<str>>(tokens: &[S], emb: &EmbeddingMatrix) -> Result<Vec<f64>> {
    let mut out = vec![0.0; emb.dim()];
    if tokens.is_empty() {
        return Ok(out);
    }
    for t in tokens {
        let row = emb
            .vector(t.as_ref())
            .ok_or_else(|| Error::UnknownToken(t.as_ref().to_string()))?;
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let n = tokens.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Content block = utterance vector (mean word embedding).
#[derive(Debug, Clone)]
pub struct UtteranceVectors {
    pub embeddings: Arc<EmbeddingMatrix>,
}

impl ContentFeaturizer for UtteranceVectors {
    fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        utterance2vec(&tokenize(text), &self.embeddings)
    }
}

/// Content block = one-hot of the k-means cluster of the utterance vector.
#[derive(Debug, Clone)]
pub struct UtteranceClusters {
    pub embeddings: Arc<EmbeddingMatrix>,
    pub clusters: Arc<KMeansModel>,
}

impl UtteranceClusters {
    pub fn cluster_of(&self, text: &str) -> Result<usize> {
        let v = utterance2vec(&tokenize(text), &self.embeddings)?;
        self.clusters.assign(&v)
    }
}

impl ContentFeaturizer for UtteranceClusters {
    fn dim(&self) -> usize {
        self.clusters.k()
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        let mut block = vec![0.0; self.clusters.k()];
        block[self.cluster_of(text)?] = 1.0;
        Ok(block)
    }
}

/// Cluster-by-agent counts (`k` rows, one column per corpus agent) of which
/// cluster each agent's utterances fall into. Purely descriptive.
pub fn cluster_agent_contingency(
    corpus: &Corpus,
    clusters: &UtteranceClusters,
) -> Result<Vec<Vec<u64>>> {
    let mut table = vec![vec![0u64; corpus.n_agents()]; clusters.clusters.k()];
    for u in corpus.utterances() {
        let a = corpus
            .agents()
            .iter()
            .position(|x| *x == u.speaker)
            .ok_or_else(|| Error::UnknownAgent(u.speaker.clone()))?;
        table[clusters.cluster_of(&u.text)?][a] += 1;
    }
    Ok(table)
}
