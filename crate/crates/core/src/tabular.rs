//! Count-based predictors: the Repeat-Last baseline and Laplace-smoothed
//! transition tables over windowed agent (and cluster) states.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::encoding::{AgentIndex, Instance};
use crate::error::{Error, Result};

/// Predicts that the speaker before the current one speaks next.
pub fn repeat_last_predict<S: AsRef<str>>(history: &[S]) -> Result<&str> {
    match history {
        [.., before, _current] => Ok(before.as_ref()),
        _ => Err(Error::InsufficientHistory {
            needed: 2,
            got: history.len(),
        }),
    }
}

/// Shape of a windowed one-hot feature vector: `window` blocks of
/// `n_agents + n_clusters` entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub window: usize,
    pub n_agents: usize,
    pub n_clusters: usize,
}

impl FeatureLayout {
    pub fn dim(&self) -> usize {
        self.window * (self.n_agents + self.n_clusters)
    }
}

/// Agent index (and cluster id, when present) of each windowed turn, most
/// recent first, interleaved.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateKey(pub Vec<u32>);

fn one_hot_position(block: &[f64]) -> Option<usize> {
    let mut pos = None;
    for (i, &v) in block.iter().enumerate() {
        if v == 1.0 {
            if pos.is_some() {
                return None;
            }
            pos = Some(i);
        } else if v != 0.0 {
            return None;
        }
    }
    pos
}

impl StateKey {
    pub fn from_features(features: &[f64], layout: &FeatureLayout) -> Result<Self> {
        if features.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                got: features.len(),
            });
        }
        let block = layout.n_agents + layout.n_clusters;
        let mut key = Vec::with_capacity(layout.window * 2);
        for chunk in features.chunks(block) {
            let (agents, clusters) = chunk.split_at(layout.n_agents);
            let not_one_hot =
                || Error::ModeMismatch("state features must be one-hot blocks".into());
            key.push(one_hot_position(agents).ok_or_else(not_one_hot)? as u32);
            if layout.n_clusters > 0 {
                key.push(one_hot_position(clusters).ok_or_else(not_one_hot)? as u32);
            }
        }
        Ok(Self(key))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    agents: Vec<String>,
    layout: FeatureLayout,
    counts: BTreeMap<StateKey, Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct TableHeader {
    agents: Vec<String>,
    layout: FeatureLayout,
}

#[derive(Serialize, Deserialize)]
struct TableRow {
    state: StateKey,
    counts: Vec<u64>,
}

pub fn mle_fit(
    instances: &[Instance],
    layout: FeatureLayout,
    agents: &AgentIndex,
) -> Result<TransitionTable> {
    if instances.is_empty() {
        return Err(Error::EmptyData);
    }
    if agents.len() != layout.n_agents {
        return Err(Error::DimensionMismatch {
            expected: layout.n_agents,
            got: agents.len(),
        });
    }
    let mut counts: BTreeMap<StateKey, Vec<u64>> = BTreeMap::new();
    for inst in instances {
        let features = inst
            .features()
            .ok_or_else(|| Error::ModeMismatch("MLE needs vector features".into()))?;
        let state = StateKey::from_features(features, &layout)?;
        let next = agents.index_of(&inst.label)?;
        counts
            .entry(state)
            .or_insert_with(|| vec![0; layout.n_agents])[next] += 1;
    }
    Ok(TransitionTable {
        agents: agents.names().to_vec(),
        layout,
        counts,
    })
}

impl TransitionTable {
    pub fn layout(&self) -> FeatureLayout {
        self.layout
    }

    pub fn agents(&self) -> &[String] {
        &self.agents
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn states(&self) -> impl Iterator<Item = (&StateKey, &[u64])> {
        self.counts.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn total(&self) -> u64 {
        self.counts.values().flatten().sum()
    }

    pub fn count(&self, state: &StateKey, agent: usize) -> u64 {
        self.counts.get(state).map_or(0, |c| c[agent])
    }

    /// `(count(s -> a) + 1) / (count(s -> .) + n)`; `1/n` for unseen states.
    pub fn likelihood(&self, state: &StateKey, agent: usize) -> Result<f64> {
        let n = self.n_agents();
        if agent >= n {
            return Err(Error::UnknownAgent(format!("index {agent}")));
        }
        Ok(match self.counts.get(state) {
            None => 1.0 / n as f64,
            Some(row) => {
                let total: u64 = row.iter().sum();
                (row[agent] + 1) as f64 / (total + n as u64) as f64
            }
        })
    }

    pub fn likelihood_of(&self, state: &StateKey, agent: &str) -> Result<f64> {
        let i = self
            .agents
            .iter()
            .position(|a| a == agent)
            .ok_or_else(|| Error::UnknownAgent(agent.to_string()))?;
        self.likelihood(state, i)
    }

    pub fn distribution(&self, state: &StateKey) -> Vec<f64> {
        (0..self.n_agents())
            .map(|a| self.likelihood(state, a).expect("index in range"))
            .collect()
    }

    /// Most likely next agent; ties go to the lowest agent index.
    pub fn predict(&self, state: &StateKey) -> usize {
        argmax_first(&self.distribution(state))
    }

    pub fn predict_features(&self, features: &[f64]) -> Result<usize> {
        Ok(self.predict(&StateKey::from_features(features, &self.layout)?))
    }

    /// Header line with agents and layout, then one line per state.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<transition table>", e);
        serde_json::to_writer(
            &mut out,
            &TableHeader {
                agents: self.agents.clone(),
                layout: self.layout,
            },
        )?;
        out.write_all(b"\n").map_err(io)?;
        for (state, counts) in &self.counts {
            serde_json::to_writer(
                &mut out,
                &TableRow {
                    state: state.clone(),
                    counts: counts.clone(),
                },
            )?;
            out.write_all(b"\n").map_err(io)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let malformed = |line: usize, e: serde_json::Error| Error::Malformed {
            line: line + 1,
            message: e.to_string(),
        };
        let (_, first) = lines.next().ok_or(Error::EmptyData)?;
        let first = first.map_err(|e| Error::io("<transition table>", e))?;
        let header: TableHeader = serde_json::from_str(&first).map_err(|e| malformed(0, e))?;
        let mut counts = BTreeMap::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io("<transition table>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: TableRow = serde_json::from_str(&line).map_err(|e| malformed(i, e))?;
            if row.counts.len() != header.agents.len() {
                return Err(Error::Malformed {
                    line: i + 1,
                    message: "count row width differs from agent count".into(),
                });
            }
            counts.insert(row.state, row.counts);
        }
        Ok(Self {
            agents: header.agents,
            layout: header.layout,
            counts,
        })
    }
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
