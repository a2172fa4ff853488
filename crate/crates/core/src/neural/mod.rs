//! CNN and LSTM next-speaker classifiers over raw-text instances, with
//! hand-written backpropagation and Adam.

mod net;
mod optim;

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{AgentIndex, Instance, SpeakerMarkup, TextToken};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::tabular::argmax_first;

pub use net::softmax;
pub use optim::{Adam, AdamConfig, Param};

pub const PAD: usize = 0;

/// Token ids: PAD, then one id per agent, then the content words.
#[derive(Debug, Clone)]
pub struct TokenVocab {
    agents: AgentIndex,
    markup: SpeakerMarkup,
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenVocab {
    pub fn new(agents: &AgentIndex, words: Vec<String>) -> Self {
        let set: BTreeSet<String> = words.iter().cloned().collect();
        let offset = 1 + agents.len();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), offset + i))
            .collect();
        Self {
            agents: agents.clone(),
            markup: SpeakerMarkup::new(agents, &set),
            words,
            index,
        }
    }

    /// Speaker markup that text instances must be rendered with.
    pub fn markup(&self) -> &SpeakerMarkup {
        &self.markup
    }

    pub fn agents(&self) -> &AgentIndex {
        &self.agents
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        1 + self.agents.len() + self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn id(&self, token: &TextToken) -> Result<usize> {
        match token {
            TextToken::Agent(i) => Ok(1 + i),
            TextToken::Word(w) => self
                .index
                .get(w)
                .copied()
                .ok_or_else(|| Error::UnknownToken(w.clone())),
        }
    }
}

/// Exactly `maxlen` token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence(pub Vec<usize>);

/// Keeps the most recent `maxlen` tokens and pads at the front with PAD.
pub fn vectorize_text(text: &str, vocab: &TokenVocab, maxlen: usize) -> Result<TokenSequence> {
    let ids = vocab
        .markup
        .parse(text)?
        .iter()
        .map(|t| vocab.id(t))
        .collect::<Result<Vec<_>>>()?;
    let kept = &ids[ids.len().saturating_sub(maxlen)..];
    let mut seq = vec![PAD; maxlen - kept.len()];
    seq.extend_from_slice(kept);
    Ok(TokenSequence(seq))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Cnn,
    Lstm,
}

/// Layer sizes. `hidden` is the dense width for the CNN and the LSTM state
/// size for the LSTM; `pool` and `dropout_hidden` apply to one path each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    pub arch: Arch,
    pub embed_dim: usize,
    pub filters: usize,
    pub kernel: usize,
    pub hidden: usize,
    pub pool: usize,
    pub dropout_embed: f64,
    pub dropout_hidden: f64,
    pub maxlen: usize,
}

impl NetConfig {
    pub fn cnn() -> Self {
        Self {
            arch: Arch::Cnn,
            embed_dim: 64,
            filters: 64,
            kernel: 3,
            hidden: 300,
            pool: 0,
            dropout_embed: 0.2,
            dropout_hidden: 0.2,
            maxlen: 64,
        }
    }

    pub fn lstm(hidden: usize) -> Self {
        Self {
            arch: Arch::Lstm,
            embed_dim: 64,
            filters: 64,
            kernel: 3,
            hidden,
            pool: 5,
            dropout_embed: 0.25,
            dropout_hidden: 0.0,
            maxlen: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.embed_dim == 0 || self.filters == 0 || self.kernel == 0 || self.hidden == 0 {
            return bad("network sizes must be positive".into());
        }
        for rate in [self.dropout_embed, self.dropout_hidden] {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("dropout rate {rate} outside [0, 1)"));
            }
        }
        let needed = match self.arch {
            Arch::Cnn => self.kernel,
            Arch::Lstm if self.pool == 0 => return bad("lstm pool size must be positive".into()),
            Arch::Lstm => self.kernel + self.pool - 1,
        };
        if self.maxlen < needed {
            return bad(format!(
                "maxlen {} is below the minimum {needed}",
                self.maxlen
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn cnn() -> Self {
        Self {
            adam: AdamConfig::default(),
            epochs: 3,
            batch_size: 50,
            seed: 0,
        }
    }

    pub fn lstm() -> Self {
        Self {
            epochs: 2,
            ..Self::cnn()
        }
    }
}

#[derive(Debug, Clone)]
pub struct NeuralModel {
    pub config: NetConfig,
    vocab: TokenVocab,
    params: Vec<Param>,
    /// Mean training loss before the first update (dropout off).
    pub initial_loss: f64,
    /// Mean mini-batch loss during each epoch (dropout on).
    pub epoch_losses: Vec<f64>,
    /// Mean training loss after the last epoch (dropout off).
    pub final_loss: f64,
}

impl NeuralModel {
    pub fn new(config: NetConfig, vocab: TokenVocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init"));
        let params = net::init_params(&config, vocab.len(), vocab.agents.len(), &mut rng);
        Ok(Self {
            config,
            vocab,
            params,
            initial_loss: f64::NAN,
            epoch_losses: Vec::new(),
            final_loss: f64::NAN,
        })
    }

    pub fn vocab(&self) -> &TokenVocab {
        &self.vocab
    }

    pub fn n_classes(&self) -> usize {
        self.vocab.agents.len()
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    fn check(&self, seq: &TokenSequence) -> Result<()> {
        if seq.0.len() != self.config.maxlen {
            return Err(Error::DimensionMismatch {
                expected: self.config.maxlen,
                got: seq.0.len(),
            });
        }
        if let Some(&t) = seq.0.iter().find(|&&t| t >= self.vocab.len()) {
            return Err(Error::UnknownToken(format!("id {t}")));
        }
        Ok(())
    }

    fn logits(&self, seq: &TokenSequence, rng: Option<&mut ChaCha8Rng>) -> Vec<f64> {
        net::forward(&self.params, &self.config, &seq.0, rng).0
    }

    /// Mean loss and its gradient over `(sequence, label)` pairs.
    fn loss_and_grad(
        &self,
        batch: &[(&TokenSequence, usize)],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (f64, Vec<Vec<f64>>) {
        let mut grads: Vec<Vec<f64>> = self.params.iter().map(|p| vec![0.0; p.len()]).collect();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &(seq, label) in batch {
            let (logits, cache) =
                net::forward(&self.params, &self.config, &seq.0, rng.as_deref_mut());
            loss += net::cross_entropy(&logits, label) * scale;
            let mut d = softmax(&logits);
            d[label] -= 1.0;
            d.iter_mut().for_each(|v| *v *= scale);
            net::backward(&self.params, &self.config, &seq.0, &cache, &d, &mut grads);
        }
        (loss, grads)
    }

    fn mean_loss(&self, data: &[(TokenSequence, usize)]) -> f64 {
        // collect first so the sum runs in a fixed order
        let losses: Vec<f64> = data
            .par_iter()
            .map(|(seq, label)| net::cross_entropy(&self.logits(seq, None), *label))
            .collect();
        losses.iter().sum::<f64>() / data.len() as f64
    }
}

/// Class probabilities per sequence. Dropout is applied only when an RNG is
/// given (training mode).
pub fn nn_forward(
    model: &NeuralModel,
    batch: &[TokenSequence],
    train_rng: Option<&mut ChaCha8Rng>,
) -> Result<Vec<Vec<f64>>> {
    for seq in batch {
        model.check(seq)?;
    }
    Ok(match train_rng {
        Some(rng) => batch
            .iter()
            .map(|s| softmax(&model.logits(s, Some(rng))))
            .collect(),
        None => batch
            .par_iter()
            .map(|s| softmax(&model.logits(s, None)))
            .collect(),
    })
}

fn labeled_sequences(
    instances: &[Instance],
    vocab: &TokenVocab,
    maxlen: usize,
) -> Result<Vec<(TokenSequence, usize)>> {
    instances
        .iter()
        .map(|inst| {
            let text = inst
                .text()
                .ok_or_else(|| Error::ModeMismatch("neural models need text instances".into()))?;
            Ok((
                vectorize_text(text, vocab, maxlen)?,
                vocab.agents.index_of(&inst.label)?,
            ))
        })
        .collect()
}

pub fn nn_train(
    instances: &[Instance],
    vocab: TokenVocab,
    net: NetConfig,
    train: &TrainConfig,
) -> Result<NeuralModel> {
    if train.epochs == 0 || train.batch_size == 0 {
        return Err(Error::InvalidConfig(
            "epochs and batch size must be at least 1".into(),
        ));
    }
    if instances.is_empty() {
        return Err(Error::EmptyData);
    }
    let data = labeled_sequences(instances, &vocab, net.maxlen)?;
    if data.iter().map(|(_, y)| y).collect::<BTreeSet<_>>().len() < 2 {
        return Err(Error::SingleLabel);
    }
    let mut model = NeuralModel::new(net, vocab, train.seed)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(train.seed, "shuffle"));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(train.seed, "dropout"));
    let mut adam = Adam::new(train.adam, &model.params);
    model.initial_loss = model.mean_loss(&data);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..train.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(train.batch_size) {
            let batch: Vec<(&TokenSequence, usize)> =
                chunk.iter().map(|&i| (&data[i].0, data[i].1)).collect();
            let (loss, grads) = model.loss_and_grad(&batch, Some(&mut dropout_rng));
            adam.step(&mut model.params, &grads);
            total += loss * chunk.len() as f64;
        }
        let mean = total / data.len() as f64;
        log::debug!("{:?} epoch {} loss {mean:.4}", model.config.arch, epoch + 1);
        model.epoch_losses.push(mean);
    }
    model.final_loss = model.mean_loss(&data);
    Ok(model)
}

/// Most probable agent index for a raw-text instance; ties go to the
/// lowest index.
pub fn nn_predict(model: &NeuralModel, text: &str) -> Result<usize> {
    let seq = vectorize_text(text, &model.vocab, model.config.maxlen)?;
    Ok(argmax_first(&nn_forward(model, &[seq], None)?[0]))
}

/// Batch prediction; order follows `texts`.
pub fn nn_predict_all(model: &NeuralModel, texts: &[&str]) -> Result<Vec<usize>> {
    let seqs = texts
        .iter()
        .map(|t| vectorize_text(t, &model.vocab, model.config.maxlen))
        .collect::<Result<Vec<_>>>()?;
    Ok(nn_forward(model, &seqs, None)?
        .iter()
        .map(|p| argmax_first(p))
        .collect())
}

/// Largest relative error between the analytic gradient and central finite
/// differences of the mean loss (dropout off), over every parameter.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-5)`; the floor keeps
/// parameters with vanishing gradients from dominating through rounding.
#[allow(clippy::needless_range_loop)]
pub fn gradient_check(
    model: &NeuralModel,
    batch: &[(TokenSequence, usize)],
    epsilon: f64,
) -> Result<f64> {
    for (seq, label) in batch {
        model.check(seq)?;
        if *label >= model.n_classes() {
            return Err(Error::UnknownAgent(format!("class {label}")));
        }
    }
    let refs: Vec<(&TokenSequence, usize)> = batch.iter().map(|(s, y)| (s, *y)).collect();
    let (_, analytic) = model.loss_and_grad(&refs, None);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for p in 0..probe.params.len() {
        for i in 0..probe.params[p].len() {
            let original = probe.params[p].value[i];
            probe.params[p].value[i] = original + epsilon;
            let up = probe.loss_and_grad(&refs, None).0;
            probe.params[p].value[i] = original - epsilon;
            let down = probe.loss_and_grad(&refs, None).0;
            probe.params[p].value[i] = original;
            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic[p][i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn field<'a>(lines: &mut impl Iterator<Item = &'a str>, name: &str) -> Result<&'a str> {
    lines
        .next()
        .and_then(|l| l.strip_prefix(name))
        .and_then(|l| l.strip_prefix(' '))
        .ok_or_else(|| bad(&format!("missing `{name}`")))
}

fn bad(message: &str) -> Error {
    Error::ModelFormat(format!("neural checkpoint: {message}"))
}

impl NeuralModel {
    /// Text checkpoint: config, classes and words as JSON lines, then each
    /// named parameter block with its shape and values.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::from("neural-model\n");
        writeln!(out, "arch {}", serde_json::to_string(&c.arch).unwrap()).unwrap();
        writeln!(
            out,
            "config embed_dim={} filters={} kernel={} hidden={} pool={} dropout_embed={} dropout_hidden={} maxlen={}",
            c.embed_dim, c.filters, c.kernel, c.hidden, c.pool, c.dropout_embed, c.dropout_hidden, c.maxlen
        )
        .unwrap();
        writeln!(
            out,
            "classes {}",
            serde_json::to_string(self.vocab.agents.names()).unwrap()
        )
        .unwrap();
        writeln!(
            out,
            "words {}",
            serde_json::to_string(&self.vocab.words).unwrap()
        )
        .unwrap();
        for p in &self.params {
            let shape: Vec<String> = p.shape.iter().map(usize::to_string).collect();
            writeln!(out, "param {} {}", p.name, shape.join(" ")).unwrap();
            let width = *p.shape.last().unwrap();
            for row in p.value.chunks(width) {
                let row: Vec<String> = row.iter().map(f64::to_string).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("neural-model") {
            return Err(bad("bad header"));
        }
        let arch: Arch =
            serde_json::from_str(field(&mut lines, "arch")?).map_err(|_| bad("bad arch"))?;
        let mut config = match arch {
            Arch::Cnn => NetConfig::cnn(),
            Arch::Lstm => NetConfig::lstm(1),
        };
        for part in field(&mut lines, "config")?.split(' ') {
            let (k, v) = part.split_once('=').ok_or_else(|| bad("bad config"))?;
            let n = || v.parse::<usize>().map_err(|_| bad("bad size"));
            let r = || v.parse::<f64>().map_err(|_| bad("bad rate"));
            match k {
                "embed_dim" => config.embed_dim = n()?,
                "filters" => config.filters = n()?,
                "kernel" => config.kernel = n()?,
                "hidden" => config.hidden = n()?,
                "pool" => config.pool = n()?,
                "dropout_embed" => config.dropout_embed = r()?,
                "dropout_hidden" => config.dropout_hidden = r()?,
                "maxlen" => config.maxlen = n()?,
                _ => return Err(bad("unknown config key")),
            }
        }
        config.validate()?;
        let classes: Vec<String> =
            serde_json::from_str(field(&mut lines, "classes")?).map_err(|_| bad("bad classes"))?;
        let words: Vec<String> =
            serde_json::from_str(field(&mut lines, "words")?).map_err(|_| bad("bad words"))?;
        let vocab = TokenVocab::new(&AgentIndex::new(&classes)?, words);
        let mut params = Vec::new();
        for (name, shape) in net::param_shapes(&config, vocab.len(), classes.len()) {
            let header = field(&mut lines, "param")?;
            let mut parts = header.split(' ');
            if parts.next() != Some(name) {
                return Err(bad(&format!("expected parameter `{name}`")));
            }
            let got: Vec<usize> = parts
                .map(|s| s.parse().map_err(|_| bad("bad shape")))
                .collect::<Result<_>>()?;
            if got != shape {
                return Err(bad(&format!(
                    "shape of `{name}` is {got:?}, expected {shape:?}"
                )));
            }
            let mut p = Param::zeros(name, &shape);
            let width = *shape.last().unwrap();
            for row in p.value.chunks_mut(width) {
                let line = lines.next().ok_or_else(|| bad("truncated parameter"))?;
                let values: Vec<f64> = line
                    .split(' ')
                    .map(|v| v.parse().map_err(|_| bad("bad value")))
                    .collect::<Result<_>>()?;
                if values.len() != width {
                    return Err(bad("row width differs from shape"));
                }
                row.copy_from_slice(&values);
            }
            params.push(p);
        }
        Ok(Self {
            config,
            vocab,
            params,
            initial_loss: f64::NAN,
            epoch_losses: Vec::new(),
            final_loss: f64::NAN,
        })
    }
}
