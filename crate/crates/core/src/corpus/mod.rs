//! Dialogue corpora: loading, normalization, splitting and descriptive
//! statistics.
//!
//! Transcripts are JSON Lines, one dialogue per line:
//!
//! ```text
//! {"id": "s01e01-3", "turns": [{"speaker": "A", "text": "hi"}, {"speaker": "B", "text": "yo"}]}
//! ```
//!
//! Every dialogue is normalized on construction so that no two consecutive
//! turns share a speaker.

mod synthetic;

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};

pub use synthetic::{generate_synthetic, SyntheticSpec, FILLER_WORDS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: String,
    #[serde(default)]
    pub text: String,
}

impl Utterance {
    pub fn new(speaker: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            speaker: speaker.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Utterance>,
}

impl Dialogue {
    pub fn new(id: impl Into<String>, turns: Vec<Utterance>) -> Self {
        Self {
            id: id.into(),
            turns,
        }
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn speakers(&self) -> impl Iterator<Item = &str> {
        self.turns.iter().map(|u| u.speaker.as_str())
    }
}

/// Collapses every maximal run of same-speaker turns into one turn whose
/// text is the run's texts joined by a single space.
pub fn merge_consecutive(dialogue: &Dialogue) -> Dialogue {
    let mut turns: Vec<Utterance> = Vec::with_capacity(dialogue.turns.len());
    for turn in &dialogue.turns {
        match turns.last_mut() {
            Some(last) if last.speaker == turn.speaker => {
                last.text.push(' ');
                last.text.push_str(&turn.text);
            }
            _ => turns.push(turn.clone()),
        }
    }
    Dialogue {
        id: dialogue.id.clone(),
        turns,
    }
}

fn is_stripped(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
            | MathSymbol
            | CurrencySymbol
            | ModifierSymbol
            | OtherSymbol
    )
}

/// Lowercases, splits on whitespace and removes punctuation and symbol
/// characters. Tokens left empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|&c| !is_stripped(c))
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// An ordered set of dialogues over a fixed agent vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    dialogues: Vec<Dialogue>,
    agents: Vec<String>,
}

fn validate_dialogue(d: &Dialogue) -> std::result::Result<(), String> {
    if d.turns.is_empty() {
        return Err(format!("dialogue `{}` has no turns", d.id));
    }
    if let Some(pos) = d.turns.iter().position(|u| u.speaker.is_empty()) {
        return Err(format!(
            "dialogue `{}` turn {pos} has an empty speaker",
            d.id
        ));
    }
    Ok(())
}

impl Corpus {
    /// Builds a corpus, normalizing each dialogue. The agent vocabulary is
    /// taken in first-appearance order.
    pub fn new(dialogues: Vec<Dialogue>) -> Result<Self> {
        let mut agents = Vec::new();
        let mut seen = BTreeSet::new();
        for d in &dialogues {
            for s in d.speakers() {
                if seen.insert(s.to_string()) {
                    agents.push(s.to_string());
                }
            }
        }
        Self::with_agents(dialogues, agents)
    }

    /// Builds a corpus over an explicit agent vocabulary, which must cover
    /// every speaker.
    pub fn with_agents(dialogues: Vec<Dialogue>, agents: Vec<String>) -> Result<Self> {
        if dialogues.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let known: BTreeSet<&str> = agents.iter().map(String::as_str).collect();
        if known.len() != agents.len() {
            return Err(Error::InvalidConfig(
                "agent vocabulary has duplicates".into(),
            ));
        }
        let mut normalized = Vec::with_capacity(dialogues.len());
        for d in &dialogues {
            validate_dialogue(d).map_err(Error::InvalidConfig)?;
            if let Some(s) = d.speakers().find(|s| !known.contains(s)) {
                return Err(Error::UnknownAgent(s.to_string()));
            }
            normalized.push(merge_consecutive(d));
        }
        Ok(Self {
            dialogues: normalized,
            agents,
        })
    }

    pub fn dialogues(&self) -> &[Dialogue] {
        &self.dialogues
    }

    pub fn agents(&self) -> &[String] {
        &self.agents
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.dialogues.iter().flat_map(|d| d.turns.iter())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for d in &self.dialogues {
            serde_json::to_writer(&mut out, d)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Reads a JSONL transcript file. Blank lines are skipped.
pub fn load_transcripts(path: &Path) -> Result<Corpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_transcripts(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_transcripts<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut dialogues = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<transcript>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Dialogue = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        validate_dialogue(&d).map_err(|message| Error::Malformed {
            line: i + 1,
            message,
        })?;
        dialogues.push(d);
    }
    Corpus::new(dialogues)
}

fn split_point(n: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let cut = (ratio * n as f64).floor() as usize;
    if n < 2 || cut == 0 || cut == n {
        return Err(Error::TooFewDialogues {
            needed: 2,
            found: n,
        });
    }
    Ok(cut)
}

/// File-order prefix split: the first `floor(ratio * D)` dialogues train,
/// the rest test. Both halves keep the parent's agent vocabulary.
pub fn split_train_test(corpus: &Corpus, ratio: f64) -> Result<(Corpus, Corpus)> {
    let cut = split_point(corpus.len(), ratio)?;
    let (train, test) = corpus.dialogues.split_at(cut);
    Ok((
        Corpus::with_agents(train.to_vec(), corpus.agents.clone())?,
        Corpus::with_agents(test.to_vec(), corpus.agents.clone())?,
    ))
}

/// Like [`split_train_test`] but on a seeded permutation of the dialogues.
pub fn split_train_test_shuffled(
    corpus: &Corpus,
    ratio: f64,
    seed: u64,
) -> Result<(Corpus, Corpus)> {
    let cut = split_point(corpus.len(), ratio)?;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| -> Vec<Dialogue> {
        idx.iter().map(|&i| corpus.dialogues[i].clone()).collect()
    };
    Ok((
        Corpus::with_agents(pick(&order[..cut]), corpus.agents.clone())?,
        Corpus::with_agents(pick(&order[cut..]), corpus.agents.clone())?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub utterance_count: usize,
    pub dialogue_count: usize,
    pub avg_agents_per_dialogue: f64,
    pub avg_utterances_per_dialogue: f64,
    pub avg_utterance_length_words: f64,
}

pub fn compute_stats(corpus: &Corpus) -> CorpusStats {
    let dialogue_count = corpus.len();
    let utterance_count: usize = corpus.dialogues.iter().map(Dialogue::len).sum();
    let distinct: usize = corpus
        .dialogues
        .iter()
        .map(|d| d.speakers().collect::<BTreeSet<_>>().len())
        .sum();
    let words: usize = corpus.utterances().map(|u| tokenize(&u.text).len()).sum();
    let per_dialogue = |x: usize| {
        if dialogue_count == 0 {
            0.0
        } else {
            x as f64 / dialogue_count as f64
        }
    };
    CorpusStats {
        utterance_count,
        dialogue_count,
        avg_agents_per_dialogue: per_dialogue(distinct),
        avg_utterances_per_dialogue: per_dialogue(utterance_count),
        avg_utterance_length_words: if utterance_count == 0 {
            0.0
        } else {
            words as f64 / utterance_count as f64
        },
    }
}

/// Percentage of times agent `j` speaks right after agent `i`, pooled over
/// all dialogues. Diagonal entries are `None`; rows of agents that are never
/// followed by anyone are entirely `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionMatrix {
    pub agents: Vec<String>,
    pub freq: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<u64>>,
}

impl InteractionMatrix {
    pub fn row_is_empty(&self, i: usize) -> bool {
        self.counts[i].iter().all(|&c| c == 0)
    }

    pub fn get(&self, from: &str, to: &str) -> Option<f64> {
        let i = self.agents.iter().position(|a| a == from)?;
        let j = self.agents.iter().position(|a| a == to)?;
        self.freq[i][j]
    }
}

pub fn interaction_frequencies(corpus: &Corpus) -> InteractionMatrix {
    let n = corpus.n_agents();
    let index: HashMap<&str, usize> = corpus
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();
    let mut counts = vec![vec![0u64; n]; n];
    for d in &corpus.dialogues {
        for pair in d.turns.windows(2) {
            let i = index[pair[0].speaker.as_str()];
            let j = index[pair[1].speaker.as_str()];
            if i != j {
                counts[i][j] += 1;
            }
        }
    }
    let freq = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.iter().sum();
            row.iter()
                .enumerate()
                .map(|(j, &c)| (i != j && total > 0).then(|| 100.0 * c as f64 / total as f64))
                .collect()
        })
        .collect();
    InteractionMatrix {
        agents: corpus.agents.clone(),
        freq,
        counts,
    }
}
