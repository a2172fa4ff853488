//! Seeded generator of dialogues from a Markov speaker process.
//!
//! Spec files use the flat key-value format:
//!
//! ```text
//! agents = A, B, C
//! order = 1
//! transition.A = B:0.8, C:0.2
//! transition.B = A:0.5, C:0.5
//! transition.C = A:1
//! # order 2 rows are keyed `previous>current`, e.g. transition.A>B = C:1
//! topic.A = apple, apricot
//! topic.B = banana, berry
//! topic.C = cherry, citrus
//! dialogues = 100
//! turns = 20
//! words_per_turn = 4
//! seed = 7
//! ```
//!
//! With topics, each turn's words come from the vocabulary of the agent who
//! speaks *next* (the last turn of a dialogue uses its own speaker's words).
//! Without topics, words are drawn from [`FILLER_WORDS`] and carry no signal.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Dialogue, Utterance};
use crate::error::{Error, Result};
use crate::kv::{split_list, KeyValues};

pub const FILLER_WORDS: &[&str] = &[
    "okay", "well", "so", "right", "yes", "maybe", "sure", "hmm", "thanks", "really",
];

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub agents: Vec<String>,
    /// Markov order of the speaker process, 1 or 2.
    pub order: usize,
    /// Next-speaker distribution keyed by the last `order` speaker indices
    /// (oldest first). Each row has one probability per agent.
    pub transition: BTreeMap<Vec<usize>, Vec<f64>>,
    pub topic_vocab: Option<Vec<Vec<String>>>,
    pub dialogue_count: usize,
    pub turns_per_dialogue: usize,
    pub words_per_turn: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Order-1 spec where every row is uniform over the other agents.
    pub fn uniform(agents: &[&str], dialogue_count: usize, turns: usize, seed: u64) -> Self {
        let n = agents.len();
        let transition = (0..n)
            .map(|i| {
                let row = (0..n)
                    .map(|j| if i == j { 0.0 } else { 1.0 / (n - 1) as f64 })
                    .collect();
                (vec![i], row)
            })
            .collect();
        Self {
            agents: agents.iter().map(|s| s.to_string()).collect(),
            order: 1,
            transition,
            topic_vocab: None,
            dialogue_count,
            turns_per_dialogue: turns,
            words_per_turn: 4,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.agents.len();
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if n < 2 {
            return bad("need at least two agents".into());
        }
        let mut sorted = self.agents.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != n || self.agents.iter().any(|a| a.is_empty()) {
            return bad("agent names must be unique and non-empty".into());
        }
        if self.order != 1 && self.order != 2 {
            return bad(format!("order must be 1 or 2, got {}", self.order));
        }
        if self.dialogue_count == 0 || self.turns_per_dialogue == 0 {
            return bad("dialogues and turns must be positive".into());
        }
        for ctx in self.contexts() {
            let Some(row) = self.transition.get(&ctx) else {
                return bad(format!(
                    "missing transition row for {}",
                    self.context_name(&ctx)
                ));
            };
            if row.len() != n {
                return bad(format!(
                    "row {} has {} entries",
                    self.context_name(&ctx),
                    row.len()
                ));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return bad(format!(
                    "row {} has a negative entry",
                    self.context_name(&ctx)
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return bad(format!("row {} sums to {sum}", self.context_name(&ctx)));
            }
            if row[*ctx.last().unwrap()] != 0.0 {
                return bad(format!(
                    "row {} allows an agent to follow itself",
                    self.context_name(&ctx)
                ));
            }
        }
        if let Some(extra) = self.transition.keys().find(|k| !self.is_context(k)) {
            return bad(format!("unexpected transition row {extra:?}"));
        }
        if let Some(topics) = &self.topic_vocab {
            if topics.len() != n || topics.iter().any(Vec::is_empty) {
                return bad("every agent needs a non-empty topic vocabulary".into());
            }
        }
        Ok(())
    }

    fn is_context(&self, ctx: &[usize]) -> bool {
        let n = self.agents.len();
        ctx.len() == self.order
            && ctx.iter().all(|&i| i < n)
            && ctx.windows(2).all(|w| w[0] != w[1])
    }

    /// Every reachable context: all speaker tuples without self-succession.
    fn contexts(&self) -> Vec<Vec<usize>> {
        let n = self.agents.len();
        match self.order {
            1 => (0..n).map(|i| vec![i]).collect(),
            _ => (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| vec![i, j]))
                .collect(),
        }
    }

    fn context_name(&self, ctx: &[usize]) -> String {
        ctx.iter()
            .map(|&i| self.agents.get(i).map_or("?", String::as_str))
            .collect::<Vec<_>>()
            .join(">")
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let spec_err = |e: Error| match e {
            Error::InvalidConfig(m) => Error::InvalidSpec(m),
            other => other,
        };
        let agents = split_list(kv.require("agents").map_err(spec_err)?);
        let index = |name: &str| {
            agents
                .iter()
                .position(|a| a == name)
                .ok_or_else(|| Error::InvalidSpec(format!("unknown agent `{name}`")))
        };
        let order: usize = kv.parse_or("order", 1).map_err(spec_err)?;
        let mut transition = BTreeMap::new();
        for (key, value) in kv.with_prefix("transition.") {
            let ctx = key
                .split('>')
                .map(|s| index(s.trim()))
                .collect::<Result<Vec<_>>>()?;
            let mut row = vec![0.0; agents.len()];
            for item in split_list(value) {
                let (name, p) = item
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidSpec(format!("bad entry `{item}`")))?;
                let p: f64 = p
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidSpec(format!("bad probability in `{item}`")))?;
                row[index(name.trim())?] += p;
            }
            transition.insert(ctx, row);
        }
        let mut topics: Vec<Vec<String>> = vec![Vec::new(); agents.len()];
        let mut any_topic = false;
        for (name, words) in kv.with_prefix("topic.") {
            topics[index(name.trim())?] = split_list(words);
            any_topic = true;
        }
        let spec = Self {
            topic_vocab: any_topic.then_some(topics),
            agents,
            order,
            transition,
            dialogue_count: kv.parse_or("dialogues", 100).map_err(spec_err)?,
            turns_per_dialogue: kv.parse_or("turns", 20).map_err(spec_err)?,
            words_per_turn: kv.parse_or("words_per_turn", 4).map_err(spec_err)?,
            seed: kv.parse_or("seed", 0).map_err(spec_err)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let kv = KeyValues::load(path).map_err(|e| match e {
            Error::Malformed { line, message } => {
                Error::InvalidSpec(format!("line {line}: {message}"))
            }
            other => other,
        })?;
        Self::from_key_values(&kv)
    }

    /// Writes the spec back in the key-value format accepted by [`Self::load`].
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("agents = {}\n", self.agents.join(", ")));
        out.push_str(&format!("order = {}\n", self.order));
        for (ctx, row) in &self.transition {
            let entries: Vec<String> = row
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(j, p)| format!("{}:{p}", self.agents[j]))
                .collect();
            out.push_str(&format!(
                "transition.{} = {}\n",
                self.context_name(ctx),
                entries.join(", ")
            ));
        }
        if let Some(topics) = &self.topic_vocab {
            for (a, words) in self.agents.iter().zip(topics) {
                out.push_str(&format!("topic.{a} = {}\n", words.join(", ")));
            }
        }
        out.push_str(&format!("dialogues = {}\n", self.dialogue_count));
        out.push_str(&format!("turns = {}\n", self.turns_per_dialogue));
        out.push_str(&format!("words_per_turn = {}\n", self.words_per_turn));
        out.push_str(&format!("seed = {}\n", self.seed));
        out
    }
}

fn draw_words(rng: &mut ChaCha8Rng, pool: &[String], count: usize) -> String {
    (0..count)
        .map(|_| pool.choose(rng).expect("non-empty pool").as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Corpus> {
    spec.validate()?;
    let n = spec.agents.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samplers: BTreeMap<&Vec<usize>, WeightedIndex<f64>> = spec
        .transition
        .iter()
        .map(|(ctx, row)| {
            WeightedIndex::new(row)
                .map(|w| (ctx, w))
                .map_err(|e| Error::InvalidSpec(format!("row {ctx:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    let filler: Vec<String> = FILLER_WORDS.iter().map(|s| s.to_string()).collect();

    let mut dialogues = Vec::with_capacity(spec.dialogue_count);
    for di in 0..spec.dialogue_count {
        let mut speakers: Vec<usize> = Vec::with_capacity(spec.turns_per_dialogue);
        speakers.push(rng.gen_range(0..n));
        if spec.order == 2 && spec.turns_per_dialogue > 1 {
            let first = speakers[0];
            let mut second = rng.gen_range(0..n - 1);
            if second >= first {
                second += 1;
            }
            speakers.push(second);
        }
        while speakers.len() < spec.turns_per_dialogue {
            let ctx = speakers[speakers.len() - spec.order..].to_vec();
            speakers.push(samplers[&ctx].sample(&mut rng));
        }

        let turns = speakers
            .iter()
            .enumerate()
            .map(|(t, &s)| {
                let pool = match &spec.topic_vocab {
                    Some(topics) => &topics[*speakers.get(t + 1).unwrap_or(&s)],
                    None => &filler,
                };
                let text = draw_words(&mut rng, pool, spec.words_per_turn);
                Utterance::new(spec.agents[s].clone(), text)
            })
            .collect();
        dialogues.push(Dialogue::new(format!("synthetic-{di:05}"), turns));
    }
    Corpus::with_agents(dialogues, spec.agents.clone())
}
