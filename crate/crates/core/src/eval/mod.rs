//! Accuracy, baseline differences in percentage points, exact McNemar
//! tests, and the experiment runner that ties every model together.

mod experiment;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoding::{AgentIndex, Instance, Mode};
use crate::error::{Error, Result};
use crate::linear::{BinaryEnsemble, LinearClassifier};
use crate::neural::{nn_predict_all, NeuralModel};
use crate::tabular::{repeat_last_predict, TransitionTable};

pub use experiment::{parse_windows, run_experiment, DataSource, ExperimentConfig};

pub const SIGNIFICANCE_LEVEL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    RepeatLast,
    AMle,
    ASvm,
    BaSvm,
    ACnn,
    ALstm,
    AcMle,
    AcSvm,
    AcCnn,
    AcLstm,
}

impl ModelId {
    pub const ALL: [ModelId; 10] = [
        ModelId::RepeatLast,
        ModelId::AMle,
        ModelId::ASvm,
        ModelId::BaSvm,
        ModelId::ACnn,
        ModelId::ALstm,
        ModelId::AcMle,
        ModelId::AcSvm,
        ModelId::AcCnn,
        ModelId::AcLstm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::RepeatLast => "repeat_last",
            ModelId::AMle => "a_mle",
            ModelId::ASvm => "a_svm",
            ModelId::BaSvm => "ba_svm",
            ModelId::ACnn => "a_cnn",
            ModelId::ALstm => "a_lstm",
            ModelId::AcMle => "ac_mle",
            ModelId::AcSvm => "ac_svm",
            ModelId::AcCnn => "ac_cnn",
            ModelId::AcLstm => "ac_lstm",
        }
    }

    /// Encoding the model consumes.
    pub fn mode(self) -> Mode {
        match self {
            ModelId::RepeatLast => Mode::SpeakerHistory,
            ModelId::AMle | ModelId::ASvm | ModelId::BaSvm => Mode::AgentsOnly,
            ModelId::AcMle => Mode::AgentsPlusClusters,
            ModelId::AcSvm => Mode::AgentsPlusUtteranceVectors,
            ModelId::ACnn | ModelId::ALstm => Mode::RawTextAgentsOnly,
            ModelId::AcCnn | ModelId::AcLstm => Mode::RawText,
        }
    }

    /// Uses utterance content (not only who spoke).
    pub fn uses_content(self) -> bool {
        matches!(
            self,
            ModelId::AcMle | ModelId::AcSvm | ModelId::AcCnn | ModelId::AcLstm
        )
    }
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == key)
            .ok_or_else(|| Error::UnknownModel(s.trim().to_string()))
    }
}

/// A trained predictor of any family.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    RepeatLast(AgentIndex),
    Mle(TransitionTable),
    Svm(LinearClassifier),
    BaSvm(BinaryEnsemble),
    Neural(Box<NeuralModel>),
}

impl TrainedModel {
    /// Predicted agent index for every instance, in order.
    pub fn predict_all(&self, instances: &[Instance]) -> Result<Vec<usize>> {
        let mismatch = |want: &str| Error::ModeMismatch(format!("model expects {want} instances"));
        match self {
            TrainedModel::RepeatLast(agents) => instances
                .iter()
                .map(|i| {
                    let h = i.history().ok_or_else(|| mismatch("speaker-history"))?;
                    agents.index_of(repeat_last_predict(h)?)
                })
                .collect(),
            TrainedModel::Neural(m) => {
                let texts = instances
                    .iter()
                    .map(|i| i.text().ok_or_else(|| mismatch("raw-text")))
                    .collect::<Result<Vec<_>>>()?;
                nn_predict_all(m, &texts)
            }
            vector => instances
                .iter()
                .map(|i| {
                    let f = i.features().ok_or_else(|| mismatch("vector"))?;
                    match vector {
                        TrainedModel::Mle(t) => t.predict_features(f),
                        TrainedModel::Svm(m) => m.predict(f),
                        TrainedModel::BaSvm(e) => e.predict(f),
                        _ => unreachable!(),
                    }
                })
                .collect(),
        }
    }

    pub fn agents(&self) -> &[String] {
        match self {
            TrainedModel::RepeatLast(a) => a.names(),
            TrainedModel::Mle(t) => t.agents(),
            TrainedModel::Svm(m) => m.classes(),
            TrainedModel::BaSvm(e) => e.agents(),
            TrainedModel::Neural(m) => m.vocab().agents().names(),
        }
    }
}

/// Predictions of one model on one instance set, aligned with the gold
/// labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub dataset: String,
    pub model: String,
    pub window: usize,
    pub predictions: Vec<usize>,
    pub gold: Vec<usize>,
    pub accuracy: f64,
}

impl EvalRun {
    pub fn new(predictions: Vec<usize>, gold: Vec<usize>) -> Result<Self> {
        if gold.is_empty() {
            return Err(Error::EmptyData);
        }
        if predictions.len() != gold.len() {
            return Err(Error::DimensionMismatch {
                expected: gold.len(),
                got: predictions.len(),
            });
        }
        let correct = predictions
            .iter()
            .zip(&gold)
            .filter(|(p, g)| p == g)
            .count();
        Ok(Self {
            dataset: String::new(),
            model: String::new(),
            window: 0,
            accuracy: correct as f64 / gold.len() as f64,
            predictions,
            gold,
        })
    }

    pub fn labeled(mut self, dataset: &str, model: &str, window: usize) -> Self {
        self.dataset = dataset.to_string();
        self.model = model.to_string();
        self.window = window;
        self
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    pub fn correct(&self) -> Vec<bool> {
        self.predictions
            .iter()
            .zip(&self.gold)
            .map(|(p, g)| p == g)
            .collect()
    }
}

pub fn evaluate(model: &TrainedModel, instances: &[Instance]) -> Result<EvalRun> {
    if instances.is_empty() {
        return Err(Error::EmptyData);
    }
    let names = model.agents();
    let gold = instances
        .iter()
        .map(|i| {
            names
                .iter()
                .position(|a| *a == i.label)
                .ok_or_else(|| Error::UnknownAgent(i.label.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    EvalRun::new(model.predict_all(instances)?, gold)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceResult {
    pub test: String,
    /// Instances only the first run gets right.
    pub b: u64,
    /// Instances only the second run gets right.
    pub c: u64,
    /// `min(b, c)`, the binomial tail cut-off.
    pub statistic: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Exact two-sided McNemar test on discordant counts:
/// `p = min(1, 2 · Σ_{i ≤ min(b,c)} C(b+c, i) / 2^(b+c))`.
pub fn mcnemar_exact(b: u64, c: u64) -> SignificanceResult {
    let n = b + c;
    let k = b.min(c);
    let p = if n == 0 {
        1.0
    } else {
        let ln2n = n as f64 * std::f64::consts::LN_2;
        let mut ln_choose = 0.0;
        let mut tail = 0.0;
        for i in 0..=k {
            if i > 0 {
                ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
            }
            tail += (ln_choose - ln2n).exp();
        }
        (2.0 * tail).min(1.0)
    };
    SignificanceResult {
        test: "mcnemar_exact".into(),
        b,
        c,
        statistic: k as f64,
        p_value: p,
        significant: p < SIGNIFICANCE_LEVEL,
    }
}

fn check_paired(a: &EvalRun, b: &EvalRun) -> Result<()> {
    if a.gold != b.gold {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        }
        .context(format!(
            "runs `{}` and `{}` are not on the same instances",
            a.model, b.model
        )));
    }
    Ok(())
}

pub fn significance_test(a: &EvalRun, b: &EvalRun) -> Result<SignificanceResult> {
    check_paired(a, b)?;
    let (mut only_a, mut only_b) = (0, 0);
    for (x, y) in a.correct().into_iter().zip(b.correct()) {
        match (x, y) {
            (true, false) => only_a += 1,
            (false, true) => only_b += 1,
            _ => {}
        }
    }
    Ok(mcnemar_exact(only_a, only_b))
}

/// `100 · (model − baseline)`, unrounded.
pub fn diff_pp(model: f64, baseline: f64) -> f64 {
    100.0 * (model - baseline)
}

/// Two decimals with an explicit sign; zero prints as `0.00`.
pub fn format_pp(diff: f64) -> String {
    let s = format!("{diff:.2}");
    match s.as_str() {
        "0.00" | "-0.00" => "0.00".into(),
        _ if diff > 0.0 => format!("+{s}"),
        _ => s,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub dataset: String,
    pub model: String,
    pub window: usize,
    pub instances: usize,
    pub accuracy: f64,
    pub baseline_accuracy: f64,
    pub diff_pp: f64,
    pub p_value: f64,
    pub significant: bool,
    pub discordant_b: u64,
    pub discordant_c: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ReportRow>,
}

/// Compares every run with the baseline run on the same instances.
pub fn compare_to_baseline(runs: &[EvalRun], baseline: &EvalRun) -> Result<ComparisonReport> {
    let rows = runs
        .iter()
        .map(|r| {
            let sig = significance_test(r, baseline)?;
            Ok(ReportRow {
                dataset: r.dataset.clone(),
                model: r.model.clone(),
                window: r.window,
                instances: r.len(),
                accuracy: r.accuracy,
                baseline_accuracy: baseline.accuracy,
                diff_pp: diff_pp(r.accuracy, baseline.accuracy),
                p_value: sig.p_value,
                significant: sig.significant,
                discordant_b: sig.b,
                discordant_c: sig.c,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport { rows })
}

impl ComparisonReport {
    pub fn extend(&mut self, other: ComparisonReport) {
        self.rows.extend(other.rows);
    }

    pub fn row(&self, model: &str, window: usize) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.window == window)
    }

    /// One JSON object per (dataset, model, W).
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&serde_json::to_string(r).expect("rows serialize"));
            out.push('\n');
        }
        out
    }

    /// Accuracy and difference tables, models by window, one pair per
    /// dataset. `*` marks p < 0.01 against the baseline.
    pub fn render_tables(&self) -> String {
        let mut out = String::new();
        let datasets: Vec<&str> = unique_in_order(self.rows.iter().map(|r| r.dataset.as_str()));
        for dataset in datasets {
            let rows: Vec<&ReportRow> = self.rows.iter().filter(|r| r.dataset == dataset).collect();
            let models = unique_in_order(rows.iter().map(|r| r.model.as_str()));
            let windows: BTreeSet<usize> = rows.iter().map(|r| r.window).collect();
            let width = models.iter().map(|m| m.len()).max().unwrap_or(5).max(5);
            let header = |out: &mut String, title: &str| {
                writeln!(out, "{title}").unwrap();
                write!(out, "{:width$}", "model").unwrap();
                for w in &windows {
                    write!(out, " {:>9}", format!("W={w}")).unwrap();
                }
                out.push('\n');
            };
            let cell = |m: &str, w: usize| rows.iter().find(|r| r.model == m && r.window == w);
            let n = rows.first().map_or(0, |r| r.instances);
            header(&mut out, &format!("dataset {dataset}: accuracy (%)"));
            for m in &models {
                write!(out, "{m:width$}").unwrap();
                for &w in &windows {
                    let v = cell(m, w).map_or("-".into(), |r| format!("{:.2}", 100.0 * r.accuracy));
                    write!(out, " {v:>9}").unwrap();
                }
                out.push('\n');
            }
            out.push('\n');
            header(
                &mut out,
                &format!("dataset {dataset}: difference from repeat_last (pp)"),
            );
            for m in &models {
                write!(out, "{m:width$}").unwrap();
                for &w in &windows {
                    let v = cell(m, w).map_or("-".into(), |r| {
                        let mark = if r.significant { "*" } else { "" };
                        format!("{}{mark}", format_pp(r.diff_pp))
                    });
                    write!(out, " {v:>9}").unwrap();
                }
                out.push('\n');
            }
            writeln!(
                out,
                "(* p < 0.01, exact McNemar; first W has {n} test instances)\n"
            )
            .unwrap();
        }
        out
    }
}

fn unique_in_order<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = BTreeSet::new();
    items.filter(|s| seen.insert(*s)).collect()
}

#[cfg(test)]
mod tests;
