//! Turning dialogue positions into model inputs.
//!
//! A position `t` is the 0-based index of the current turn; the history is
//! turns `0..=t` and the label is the speaker of turn `t + 1`. A dialogue of
//! `T` turns yields `T - W` instances for window `W` (none when `T <= W`).
//!
//! Vector features concatenate one block per windowed turn, most recent
//! first. Each block is the speaker one-hot, optionally followed by a content
//! block (cluster one-hot or utterance vector).

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Dialogue, Utterance};
use crate::error::{Error, Result};

pub const MAX_WINDOW: usize = 5;

/// Bijection between agent names and `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentIndex {
    agents: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl AgentIndex {
    pub fn new(agents: &[String]) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(agents.len());
        for (i, a) in agents.iter().enumerate() {
            if lookup.insert(a.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate agent `{a}`")));
            }
        }
        Ok(Self {
            agents: agents.to_vec(),
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn index_of(&self, agent: &str) -> Result<usize> {
        self.lookup
            .get(agent)
            .copied()
            .ok_or_else(|| Error::UnknownAgent(agent.to_string()))
    }

    pub fn name(&self, index: usize) -> &str {
        &self.agents[index]
    }

    pub fn names(&self) -> &[String] {
        &self.agents
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    AgentsOnly,
    AgentsPlusClusters,
    AgentsPlusUtteranceVectors,
    RawText,
    RawTextAgentsOnly,
    /// Plain speaker history, consumed by the Repeat-Last baseline.
    SpeakerHistory,
}

impl Mode {
    pub fn is_vector(self) -> bool {
        matches!(
            self,
            Mode::AgentsOnly | Mode::AgentsPlusClusters | Mode::AgentsPlusUtteranceVectors
        )
    }

    pub fn is_text(self) -> bool {
        matches!(self, Mode::RawText | Mode::RawTextAgentsOnly)
    }

    pub fn needs_content(self) -> bool {
        matches!(
            self,
            Mode::AgentsPlusClusters | Mode::AgentsPlusUtteranceVectors
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingConfig {
    pub window: usize,
    pub mode: Mode,
}

impl EncodingConfig {
    pub fn new(window: usize, mode: Mode) -> Result<Self> {
        if !(1..=MAX_WINDOW).contains(&window) {
            return Err(Error::InvalidConfig(format!(
                "window must be in 1..={MAX_WINDOW}, got {window}"
            )));
        }
        Ok(Self { window, mode })
    }

    /// Turns of history the text encodings look at: two, or one when W = 1.
    pub fn text_context(&self) -> usize {
        self.window.min(2)
    }
}

/// Maps an utterance to a fixed-length content block.
pub trait ContentFeaturizer: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Input {
    Features(Vec<f64>),
    Text(String),
    History(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    #[serde(flatten)]
    pub input: Input,
    pub label: String,
    pub dialogue_id: String,
    pub t: usize,
}

impl Instance {
    pub fn features(&self) -> Option<&[f64]> {
        match &self.input {
            Input::Features(f) => Some(f),
            _ => None,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match &self.input {
            Input::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn history(&self) -> Option<&[String]> {
        match &self.input {
            Input::History(h) => Some(h),
            _ => None,
        }
    }
}

pub fn write_instances<W: Write>(instances: &[Instance], mut out: W) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut out, inst)?;
        out.write_all(b"\n")
            .map_err(|e| Error::io("<instances>", e))?;
    }
    Ok(())
}

pub fn read_instances<R: BufRead>(reader: R) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<instances>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn one_hot_agent(agent: &str, index: &AgentIndex) -> Result<Vec<f64>> {
    let mut v = vec![0.0; index.len()];
    v[index.index_of(agent)?] = 1.0;
    Ok(v)
}

/// How speaker names appear inside raw-text instances.
///
/// A speaker is written as its bare name when that name is a single token
/// that cannot be confused with any content word or other agent; otherwise it
/// is wrapped as `⟨agent:NAME⟩`.
#[derive(Debug, Clone)]
pub struct SpeakerMarkup {
    agents: AgentIndex,
    bare: Vec<bool>,
}

/// A token of a rendered text instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TextToken {
    Agent(usize),
    Word(String),
}

const MARK_OPEN: &str = "⟨agent:";
const MARK_CLOSE: char = '⟩';

impl SpeakerMarkup {
    pub fn new(agents: &AgentIndex, content_words: &BTreeSet<String>) -> Self {
        let forms: Vec<Vec<String>> = agents.names().iter().map(|a| tokenize(a)).collect();
        let bare = agents
            .names()
            .iter()
            .zip(&forms)
            .map(|(name, form)| {
                form.len() == 1
                    && !name.chars().any(char::is_whitespace)
                    && !name.contains(['⟨', MARK_CLOSE])
                    && !content_words.contains(&form[0])
                    && forms.iter().filter(|f| *f == form).count() == 1
            })
            .collect();
        Self {
            agents: agents.clone(),
            bare,
        }
    }

    pub fn render(&self, agent: usize) -> String {
        let name = self.agents.name(agent);
        if self.bare[agent] {
            name.to_string()
        } else {
            format!("{MARK_OPEN}{name}{MARK_CLOSE}")
        }
    }

    /// Splits a rendered text back into speaker and content tokens.
    pub fn parse(&self, text: &str) -> Result<Vec<TextToken>> {
        let mut tokens = Vec::new();
        let mut rest = text.trim_start();
        while !rest.is_empty() {
            if let Some(after) = rest.strip_prefix(MARK_OPEN) {
                let end = after.find(MARK_CLOSE).ok_or_else(|| {
                    Error::ModeMismatch(format!("unterminated speaker marker in `{text}`"))
                })?;
                tokens.push(TextToken::Agent(self.agents.index_of(&after[..end])?));
                rest = after[end + MARK_CLOSE.len_utf8()..].trim_start();
                continue;
            }
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            let piece = &rest[..end];
            match self.agents.lookup.get(piece) {
                Some(&i) if self.bare[i] => tokens.push(TextToken::Agent(i)),
                _ => tokens.extend(tokenize(piece).into_iter().map(TextToken::Word)),
            }
            rest = rest[end..].trim_start();
        }
        Ok(tokens)
    }
}

/// Encodes dialogue positions under one [`EncodingConfig`].
#[derive(Clone)]
pub struct Encoder {
    pub config: EncodingConfig,
    pub agents: AgentIndex,
    content: Option<Arc<dyn ContentFeaturizer>>,
    markup: Option<SpeakerMarkup>,
}

impl std::fmt::Debug for Encoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Encoder")
            .field("config", &self.config)
            .field("n_agents", &self.agents.len())
            .field("content_dim", &self.content.as_ref().map(|c| c.dim()))
            .finish()
    }
}

impl Encoder {
    pub fn new(config: EncodingConfig, agents: AgentIndex) -> Self {
        Self {
            config,
            agents,
            content: None,
            markup: None,
        }
    }

    pub fn with_content(mut self, content: Arc<dyn ContentFeaturizer>) -> Self {
        self.content = Some(content);
        self
    }

    pub fn with_markup(mut self, markup: SpeakerMarkup) -> Self {
        self.markup = Some(markup);
        self
    }

    pub fn markup(&self) -> Option<&SpeakerMarkup> {
        self.markup.as_ref()
    }

    /// Length of vector features for this configuration.
    pub fn feature_dim(&self) -> usize {
        let content = match self.config.mode {
            Mode::AgentsOnly => 0,
            _ => self.content.as_ref().map_or(0, |c| c.dim()),
        };
        self.config.window * (self.agents.len() + content)
    }

    pub fn window_features(&self, history: &[Utterance]) -> Result<Vec<f64>> {
        let w = self.config.window;
        if !self.config.mode.is_vector() {
            return Err(Error::ModeMismatch(format!(
                "{:?} does not produce vector features",
                self.config.mode
            )));
        }
        if history.len() < w {
            return Err(Error::InsufficientHistory {
                needed: w,
                got: history.len(),
            });
        }
        let content = match self.config.mode {
            Mode::AgentsOnly => None,
            mode => Some(self.content.as_ref().ok_or_else(|| {
                Error::ModeMismatch(format!("{mode:?} requires a content featurizer"))
            })?),
        };
        let mut features = Vec::with_capacity(self.feature_dim());
        for turn in history.iter().rev().take(w) {
            features.extend(one_hot_agent(&turn.speaker, &self.agents)?);
            if let Some(c) = content {
                let block = c.encode(&turn.text)?;
                if block.len() != c.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: c.dim(),
                        got: block.len(),
                    });
                }
                features.extend(block);
            }
        }
        Ok(features)
    }

    /// Raw text `s_{t-1} u_{t-1} s_t u_t` (or `s_t u_t` when W = 1), with
    /// utterances omitted in agents-only mode. Empty parts are skipped so
    /// the result is always single-space separated.
    pub fn text(&self, history: &[Utterance]) -> Result<String> {
        let agents_only = match self.config.mode {
            Mode::RawText => false,
            Mode::RawTextAgentsOnly => true,
            mode => {
                return Err(Error::ModeMismatch(format!("{mode:?} is not a text mode")));
            }
        };
        let context = self.config.text_context();
        if history.len() < context {
            return Err(Error::InsufficientHistory {
                needed: context,
                got: history.len(),
            });
        }
        let markup = self
            .markup
            .as_ref()
            .ok_or_else(|| Error::ModeMismatch("text encoding requires speaker markup".into()))?;
        let mut parts = Vec::with_capacity(2 * context);
        for turn in &history[history.len() - context..] {
            parts.push(markup.render(self.agents.index_of(&turn.speaker)?));
            if !agents_only {
                let text = turn.text.split_whitespace().collect::<Vec<_>>().join(" ");
                if !text.is_empty() {
                    parts.push(text);
                }
            }
        }
        Ok(parts.join(" "))
    }

    /// Encodes position `t` of a dialogue (history `0..=t`, label `t + 1`).
    pub fn instance_at(&self, dialogue: &Dialogue, t: usize) -> Result<Instance> {
        let next = dialogue
            .turns
            .get(t + 1)
            .ok_or_else(|| Error::InsufficientHistory {
                needed: t + 2,
                got: dialogue.len(),
            })?;
        self.agents.index_of(&next.speaker)?;
        let history = &dialogue.turns[..=t];
        let input = match self.config.mode {
            Mode::SpeakerHistory => {
                Input::History(history.iter().map(|u| u.speaker.clone()).collect())
            }
            m if m.is_text() => Input::Text(self.text(history)?),
            _ => Input::Features(self.window_features(history)?),
        };
        Ok(Instance {
            input,
            label: next.speaker.clone(),
            dialogue_id: dialogue.id.clone(),
            t,
        })
    }

    /// All positions from `first_t` on that have a next turn.
    pub fn instances_from(&self, dialogue: &Dialogue, first_t: usize) -> Result<Vec<Instance>> {
        (first_t..dialogue.len().saturating_sub(1))
            .map(|t| self.instance_at(dialogue, t))
            .collect()
    }

    /// One instance per position with a full window: `T - W` of them.
    pub fn build_instances(&self, dialogue: &Dialogue) -> Result<Vec<Instance>> {
        self.instances_from(dialogue, self.config.window - 1)
    }
}
