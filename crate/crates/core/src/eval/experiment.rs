use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::content::{
    build_vocabulary, kmeans_fit, train_embeddings, utterance2vec, EmbeddingMatrix, KMeansConfig,
    UtteranceClusters, UtteranceVectors, Vocabulary, Word2VecConfig,
};
use crate::corpus::{generate_synthetic, SyntheticSpec};
use crate::corpus::{
    load_transcripts, split_train_test, split_train_test_shuffled, tokenize, Corpus,
};
use crate::encoding::{
    AgentIndex, Encoder, EncodingConfig, Instance, Mode, SpeakerMarkup, MAX_WINDOW,
};
use crate::error::{Error, Result};
use crate::kv::{split_list, KeyValues};
use crate::linear::{basvm_train, svm_train_multiclass, SvmHyper};
use crate::neural::{nn_train, NetConfig, TokenVocab, TrainConfig};
use crate::seed::derive_seed;
use crate::tabular::{mle_fit, FeatureLayout};

use super::{compare_to_baseline, evaluate, ComparisonReport, EvalRun, ModelId, TrainedModel};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Transcripts(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub source: DataSource,
    pub models: Vec<ModelId>,
    pub windows: Vec<usize>,
    pub seed: u64,
    /// Fraction of dialogues used for training.
    pub split: f64,
    pub shuffle_split: bool,
    pub clusters: usize,
    pub embedding_dim: usize,
    pub embedding_epochs: usize,
    pub svm: SvmHyper,
    pub cnn_epochs: usize,
    pub lstm_epochs: usize,
    pub batch_size: usize,
    pub maxlen: usize,
    pub lstm_hidden: usize,
    pub out: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "name",
    "dataset",
    "synthetic",
    "models",
    "windows",
    "seed",
    "split",
    "shuffle",
    "clusters",
    "embedding_dim",
    "embedding_epochs",
    "svm_lambda",
    "svm_epochs",
    "cnn_epochs",
    "lstm_epochs",
    "batch_size",
    "maxlen",
    "lstm_hidden",
    "out",
];

impl ExperimentConfig {
    pub fn new(name: &str, source: DataSource, models: Vec<ModelId>) -> Self {
        Self {
            name: name.to_string(),
            source,
            models,
            windows: vec![1, 2],
            seed: 0,
            split: 0.7,
            shuffle_split: false,
            clusters: 6,
            embedding_dim: 64,
            embedding_epochs: 5,
            svm: SvmHyper::default(),
            cnn_epochs: 3,
            lstm_epochs: 2,
            batch_size: 50,
            maxlen: 64,
            lstm_hidden: 50,
            out: None,
        }
    }

    /// Reads the flat key-value format; relative paths resolve against
    /// `base_dir`.
    pub fn from_key_values(kv: &KeyValues, base_dir: &Path) -> Result<Self> {
        if let Some(k) = kv.keys().find(|k| !KEYS.contains(k)) {
            return Err(Error::InvalidConfig(format!("unknown key `{k}`")));
        }
        let resolve = |p: &str| base_dir.join(p);
        let source = match (kv.get("dataset"), kv.get("synthetic")) {
            (Some(d), None) => DataSource::Transcripts(resolve(d)),
            (None, Some(s)) => DataSource::Synthetic(SyntheticSpec::load(&resolve(s))?),
            _ => {
                return Err(Error::InvalidConfig(
                    "exactly one of `dataset` or `synthetic` is required".into(),
                ))
            }
        };
        let default_name = match &source {
            DataSource::Transcripts(p) => p
                .file_stem()
                .map_or("dataset".into(), |s| s.to_string_lossy().into_owned()),
            DataSource::Synthetic(_) => "synthetic".into(),
        };
        let models = split_list(kv.require("models")?)
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<ModelId>>>()?;
        let mut cfg = Self::new(kv.get("name").unwrap_or(&default_name), source, models);
        if let Some(w) = kv.get("windows") {
            cfg.windows = parse_windows(w)?;
        }
        cfg.seed = kv.parse_or("seed", cfg.seed)?;
        cfg.split = kv.parse_or("split", cfg.split)?;
        cfg.shuffle_split = kv.parse_or("shuffle", cfg.shuffle_split)?;
        cfg.clusters = kv.parse_or("clusters", cfg.clusters)?;
        cfg.embedding_dim = kv.parse_or("embedding_dim", cfg.embedding_dim)?;
        cfg.embedding_epochs = kv.parse_or("embedding_epochs", cfg.embedding_epochs)?;
        cfg.svm.lambda = kv.parse_or("svm_lambda", cfg.svm.lambda)?;
        cfg.svm.epochs = kv.parse_or("svm_epochs", cfg.svm.epochs)?;
        cfg.cnn_epochs = kv.parse_or("cnn_epochs", cfg.cnn_epochs)?;
        cfg.lstm_epochs = kv.parse_or("lstm_epochs", cfg.lstm_epochs)?;
        cfg.batch_size = kv.parse_or("batch_size", cfg.batch_size)?;
        cfg.maxlen = kv.parse_or("maxlen", cfg.maxlen)?;
        cfg.lstm_hidden = kv.parse_or("lstm_hidden", cfg.lstm_hidden)?;
        cfg.out = kv.get("out").map(resolve);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let kv = KeyValues::load(path)?;
        Self::from_key_values(&kv, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.models.is_empty() {
            return bad("at least one model is required".into());
        }
        if self.models.iter().collect::<BTreeSet<_>>().len() != self.models.len() {
            return bad("a model is listed twice".into());
        }
        if self.windows.is_empty() {
            return bad("at least one window is required".into());
        }
        if let Some(w) = self.windows.iter().find(|w| !(1..=MAX_WINDOW).contains(*w)) {
            return bad(format!("window {w} outside 1..={MAX_WINDOW}"));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad(format!(
                "split {} must lie strictly between 0 and 1",
                self.split
            ));
        }
        if self.clusters == 0 || self.embedding_dim == 0 || self.embedding_epochs == 0 {
            return bad("clusters, embedding_dim and embedding_epochs must be positive".into());
        }
        if self.svm.epochs == 0 || self.svm.lambda.is_nan() || self.svm.lambda <= 0.0 {
            return bad("svm_epochs must be positive and svm_lambda > 0".into());
        }
        if self.cnn_epochs == 0 || self.lstm_epochs == 0 || self.batch_size == 0 {
            return bad("neural epochs and batch_size must be positive".into());
        }
        self.net(ModelId::AcCnn).validate()?;
        self.net(ModelId::AcLstm).validate()?;
        Ok(())
    }

    fn net(&self, model: ModelId) -> NetConfig {
        let base = match model {
            ModelId::ALstm | ModelId::AcLstm => NetConfig::lstm(self.lstm_hidden),
            _ => NetConfig::cnn(),
        };
        NetConfig {
            maxlen: self.maxlen,
            ..base
        }
    }
}

pub fn parse_windows(value: &str) -> Result<Vec<usize>> {
    let mut windows = Vec::new();
    for w in split_list(value) {
        let w: usize = w
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad window `{w}`")))?;
        if !windows.contains(&w) {
            windows.push(w);
        }
    }
    Ok(windows)
}

/// Everything shared by the (model, W) cells.
struct Prepared {
    name: String,
    train: Corpus,
    test: Corpus,
    agents: AgentIndex,
    markup: SpeakerMarkup,
    vocabulary: Option<Vocabulary>,
    vectors: Option<Arc<UtteranceVectors>>,
    clusters: Option<Arc<UtteranceClusters>>,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let corpus = match &cfg.source {
        DataSource::Transcripts(p) => load_transcripts(p)?,
        DataSource::Synthetic(spec) => generate_synthetic(spec)?,
    };
    let (train, test) = if cfg.shuffle_split {
        split_train_test_shuffled(&corpus, cfg.split, derive_seed(cfg.seed, "split"))?
    } else {
        split_train_test(&corpus, cfg.split)?
    };
    let agents = AgentIndex::new(corpus.agents())?;
    let needs_content = cfg.models.iter().any(|m| m.uses_content());
    let vocabulary = match build_vocabulary(&[&train, &test]) {
        Ok(v) => Some(v),
        Err(Error::EmptyVocabulary) if !needs_content => None,
        Err(e) => return Err(e.context("content models need utterance text")),
    };
    let words: BTreeSet<String> = vocabulary
        .iter()
        .flat_map(|v| v.tokens().iter().cloned())
        .collect();
    let markup = SpeakerMarkup::new(&agents, &words);

    let wants = |m: ModelId| cfg.models.contains(&m);
    let embeddings: Option<Arc<EmbeddingMatrix>> = if wants(ModelId::AcMle) || wants(ModelId::AcSvm)
    {
        let w2v = Word2VecConfig {
            dim: cfg.embedding_dim,
            epochs: cfg.embedding_epochs,
            seed: derive_seed(cfg.seed, "embeddings"),
            ..Word2VecConfig::default()
        };
        Some(Arc::new(train_embeddings(&[&train, &test], &w2v)?))
    } else {
        None
    };
    let vectors = embeddings
        .clone()
        .map(|embeddings| Arc::new(UtteranceVectors { embeddings }));
    let clusters = match (&embeddings, wants(ModelId::AcMle)) {
        (Some(emb), true) => {
            let points = train
                .utterances()
                .map(|u| utterance2vec(&tokenize(&u.text), emb))
                .collect::<Result<Vec<_>>>()?;
            let km = kmeans_fit(
                &points,
                &KMeansConfig::new(cfg.clusters, derive_seed(cfg.seed, "kmeans")),
            )?;
            Some(Arc::new(UtteranceClusters {
                embeddings: emb.clone(),
                clusters: Arc::new(km),
            }))
        }
        _ => None,
    };
    Ok(Prepared {
        name: cfg.name.clone(),
        train,
        test,
        agents,
        markup,
        vocabulary,
        vectors,
        clusters,
    })
}

fn encoder(prep: &Prepared, model: ModelId, window: usize) -> Result<Encoder> {
    let enc = Encoder::new(
        EncodingConfig::new(window, model.mode())?,
        prep.agents.clone(),
    )
    .with_markup(prep.markup.clone());
    Ok(match model.mode() {
        Mode::AgentsPlusClusters => {
            enc.with_content(prep.clusters.clone().expect("clusters prepared"))
        }
        Mode::AgentsPlusUtteranceVectors => {
            enc.with_content(prep.vectors.clone().expect("vectors prepared"))
        }
        _ => enc,
    })
}

fn instances(
    corpus: &Corpus,
    f: impl Fn(&crate::corpus::Dialogue) -> Result<Vec<Instance>>,
) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for d in corpus.dialogues() {
        out.extend(f(d)?);
    }
    Ok(out)
}

fn run_cell(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    model: ModelId,
    window: usize,
) -> Result<EvalRun> {
    let enc = encoder(prep, model, window)?;
    // every model at a given W is scored on the same positions, those where
    // the baseline is defined
    let first_eval = window.max(2) - 1;
    let test = instances(&prep.test, |d| enc.instances_from(d, first_eval))?;
    let train = || instances(&prep.train, |d| enc.build_instances(d));
    let seed = derive_seed(cfg.seed, &format!("{model}/w{window}"));
    let trained = match model {
        ModelId::RepeatLast => TrainedModel::RepeatLast(prep.agents.clone()),
        ModelId::AMle | ModelId::AcMle => {
            let layout = FeatureLayout {
                window,
                n_agents: prep.agents.len(),
                n_clusters: prep
                    .clusters
                    .as_ref()
                    .filter(|_| model == ModelId::AcMle)
                    .map_or(0, |c| c.clusters.k()),
            };
            TrainedModel::Mle(mle_fit(&train()?, layout, &prep.agents)?)
        }
        ModelId::ASvm | ModelId::AcSvm => {
            let hyper = SvmHyper { seed, ..cfg.svm };
            TrainedModel::Svm(svm_train_multiclass(&train()?, &prep.agents, &hyper)?)
        }
        ModelId::BaSvm => {
            let hyper = SvmHyper { seed, ..cfg.svm };
            TrainedModel::BaSvm(basvm_train(&train()?, &prep.agents, &hyper)?)
        }
        ModelId::ACnn | ModelId::ALstm | ModelId::AcCnn | ModelId::AcLstm => {
            let words = prep
                .vocabulary
                .as_ref()
                .map_or(Vec::new(), |v| v.tokens().to_vec());
            let vocab = TokenVocab::new(&prep.agents, words);
            let is_lstm = matches!(model, ModelId::ALstm | ModelId::AcLstm);
            let train_cfg = TrainConfig {
                epochs: if is_lstm {
                    cfg.lstm_epochs
                } else {
                    cfg.cnn_epochs
                },
                batch_size: cfg.batch_size,
                seed,
                ..TrainConfig::cnn()
            };
            let m = nn_train(&train()?, vocab, cfg.net(model), &train_cfg)?;
            log::info!(
                "{model} W={window}: loss {:.4} -> {:.4}",
                m.initial_loss,
                m.final_loss
            );
            TrainedModel::Neural(Box::new(m))
        }
    };
    Ok(evaluate(&trained, &test)?.labeled(&prep.name, model.as_str(), window))
}

/// Split, encode, train and evaluate every requested (model, W) cell, then
/// compare each against Repeat-Last on the same instances.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let prep = prepare(cfg).map_err(|e| e.context(format!("experiment `{}`", cfg.name)))?;
    let mut cells: Vec<(ModelId, usize)> = Vec::new();
    for &w in &cfg.windows {
        cells.push((ModelId::RepeatLast, w));
        cells.extend(
            cfg.models
                .iter()
                .filter(|m| **m != ModelId::RepeatLast)
                .map(|&m| (m, w)),
        );
    }
    let runs = cells
        .par_iter()
        .map(|&(m, w)| {
            run_cell(cfg, &prep, m, w).map_err(|e| e.context(format!("model {m} at W={w}")))
        })
        .collect::<Result<Vec<EvalRun>>>()?;
    let mut report = ComparisonReport::default();
    for &w in &cfg.windows {
        let at_w: Vec<&EvalRun> = runs.iter().filter(|r| r.window == w).collect();
        let baseline = at_w[0];
        let shown: Vec<EvalRun> = cfg
            .models
            .iter()
            .map(|m| {
                at_w.iter()
                    .find(|r| r.model == m.as_str())
                    .map(|r| (*r).clone())
                    .expect("every cell ran")
            })
            .collect();
        report.extend(compare_to_baseline(&shown, baseline)?);
    }
    Ok(report)
}
