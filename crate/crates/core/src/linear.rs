//! Linear SVMs trained with Pegasos: a one-vs-rest multiclass classifier and
//! an ensemble of independent per-agent binary classifiers ranked by margin.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::encoding::{AgentIndex, Instance};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::tabular::argmax_first;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmHyper {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmHyper {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 20,
            seed: 0,
        }
    }
}

impl SvmHyper {
    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) || self.epochs == 0 {
            return Err(Error::InvalidConfig(format!(
                "svm needs lambda > 0 and epochs >= 1, got {} and {}",
                self.lambda, self.epochs
            )));
        }
        Ok(())
    }
}

/// `w·x + b`, with the bias treated as the weight of a constant-1 feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    pub w: Vec<f64>,
    pub b: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Hyperplane {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w: vec![0.0; dim],
            b: 0.0,
        }
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }

    fn norm_sq(&self) -> f64 {
        dot(&self.w, &self.w) + self.b * self.b
    }

    fn scale(&mut self, s: f64) {
        self.w.iter_mut().for_each(|v| *v *= s);
        self.b *= s;
    }

    /// One Pegasos step at iteration `t` (1-based) on example `(x, y)`.
    fn pegasos_step(&mut self, x: &[f64], y: f64, t: usize, lambda: f64) {
        let eta = 1.0 / (lambda * t as f64);
        let violated = y * self.margin(x) < 1.0;
        self.scale(1.0 - 1.0 / t as f64);
        if violated {
            for (w, xi) in self.w.iter_mut().zip(x) {
                *w += eta * y * xi;
            }
            self.b += eta * y;
        }
        let radius_sq = 1.0 / lambda;
        let n = self.norm_sq();
        if n > radius_sq {
            self.scale((radius_sq / n).sqrt());
        }
    }

    /// `λ/2 ‖(w, b)‖² + mean hinge`.
    fn objective(&self, xs: &[&[f64]], ys: &[f64], lambda: f64) -> f64 {
        let hinge: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (1.0 - y * self.margin(x)).max(0.0))
            .sum();
        0.5 * lambda * self.norm_sq() + hinge / xs.len() as f64
    }
}

/// Feature rows and label indices pulled from vector instances.
struct Labeled<'a> {
    xs: Vec<&'a [f64]>,
    ys: Vec<usize>,
    dim: usize,
}

fn labeled<'a>(instances: &'a [Instance], agents: &AgentIndex) -> Result<Labeled<'a>> {
    let first = instances.first().ok_or(Error::EmptyData)?;
    let dim = first
        .features()
        .ok_or_else(|| Error::ModeMismatch("svm needs vector features".into()))?
        .len();
    let mut xs = Vec::with_capacity(instances.len());
    let mut ys = Vec::with_capacity(instances.len());
    for inst in instances {
        let x = inst
            .features()
            .ok_or_else(|| Error::ModeMismatch("svm needs vector features".into()))?;
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        xs.push(x);
        ys.push(agents.index_of(&inst.label)?);
    }
    if ys.iter().collect::<BTreeSet<_>>().len() < 2 {
        return Err(Error::SingleLabel);
    }
    Ok(Labeled { xs, ys, dim })
}

fn binary_targets(ys: &[usize], class: usize) -> Vec<f64> {
    ys.iter()
        .map(|&y| if y == class { 1.0 } else { -1.0 })
        .collect()
}

/// Trains one hyperplane over the given visiting order, recording the
/// objective before training and after every epoch.
fn train_binary(
    data: &Labeled,
    targets: &[f64],
    orders: &[Vec<usize>],
    lambda: f64,
) -> (Hyperplane, Vec<f64>) {
    let mut plane = Hyperplane::zeros(data.dim);
    let mut history = vec![plane.objective(&data.xs, targets, lambda)];
    let mut t = 0;
    for order in orders {
        for &i in order {
            t += 1;
            plane.pegasos_step(data.xs[i], targets[i], t, lambda);
        }
        history.push(plane.objective(&data.xs, targets, lambda));
    }
    (plane, history)
}

fn epoch_orders(n: usize, epochs: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..epochs)
        .map(|_| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            order
        })
        .collect()
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

/// One-vs-rest multiclass linear SVM over all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    classes: Vec<String>,
    planes: Vec<Hyperplane>,
    pub hyper: SvmHyper,
    /// Summed one-vs-rest objective before training and after each epoch.
    pub objective_history: Vec<f64>,
}

pub fn svm_train_multiclass(
    instances: &[Instance],
    agents: &AgentIndex,
    hyper: &SvmHyper,
) -> Result<LinearClassifier> {
    hyper.validate()?;
    let data = labeled(instances, agents)?;
    // every class sees the same visiting order
    let orders = epoch_orders(data.xs.len(), hyper.epochs, hyper.seed);
    let trained: Vec<(Hyperplane, Vec<f64>)> = (0..agents.len())
        .into_par_iter()
        .map(|c| train_binary(&data, &binary_targets(&data.ys, c), &orders, hyper.lambda))
        .collect();
    let mut objective_history = vec![0.0; hyper.epochs + 1];
    for (_, h) in &trained {
        objective_history
            .iter_mut()
            .zip(h)
            .for_each(|(a, b)| *a += b);
    }
    Ok(LinearClassifier {
        classes: agents.names().to_vec(),
        planes: trained.into_iter().map(|(p, _)| p).collect(),
        hyper: *hyper,
        objective_history,
    })
}

pub fn svm_predict(model: &LinearClassifier, features: &[f64]) -> Result<usize> {
    model.predict(features)
}

impl LinearClassifier {
    pub fn from_planes(
        classes: Vec<String>,
        planes: Vec<Hyperplane>,
        hyper: SvmHyper,
    ) -> Result<Self> {
        validate_planes(&classes, &planes)?;
        Ok(Self {
            classes,
            planes,
            hyper,
            objective_history: Vec::new(),
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn planes(&self) -> &[Hyperplane] {
        &self.planes
    }

    pub fn dim(&self) -> usize {
        self.planes[0].w.len()
    }

    pub fn scores(&self, features: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), features)?;
        Ok(self.planes.iter().map(|p| p.margin(features)).collect())
    }

    /// Highest-scoring class; ties go to the lowest class index.
    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        Ok(argmax_first(&self.scores(features)?))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("linear-svm\n");
        write_header(&mut out, &self.classes, self.dim(), &self.hyper);
        for (i, p) in self.planes.iter().enumerate() {
            writeln!(out, "plane {i} {}", plane_row(p)).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        expect_line(&mut lines, "linear-svm")?;
        let (classes, dim, hyper) = read_header(&mut lines)?;
        let planes = (0..classes.len())
            .map(|i| {
                let line = lines.next().ok_or_else(|| bad("missing plane"))?;
                let rest = line
                    .strip_prefix(&format!("plane {i} "))
                    .ok_or_else(|| bad("bad plane line"))?;
                parse_plane(rest, dim)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_planes(classes, planes, hyper)
    }
}

/// Per-agent binary member: positive = that agent speaks next.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMember {
    pub plane: Hyperplane,
    /// No positive example in training; never ranked.
    pub degenerate: bool,
    pub objective_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryEnsemble {
    agents: Vec<String>,
    members: Vec<BinaryMember>,
    pub hyper: SvmHyper,
}

pub fn basvm_train(
    instances: &[Instance],
    agents: &AgentIndex,
    hyper: &SvmHyper,
) -> Result<BinaryEnsemble> {
    hyper.validate()?;
    let data = labeled(instances, agents)?;
    let members = agents
        .names()
        .par_iter()
        .enumerate()
        .map(|(a, name)| {
            let targets = binary_targets(&data.ys, a);
            if !targets.iter().any(|&y| y > 0.0) {
                log::warn!(
                    "agent `{name}` never speaks next in training; its member is degenerate"
                );
                return BinaryMember {
                    plane: Hyperplane::zeros(data.dim),
                    degenerate: true,
                    objective_history: Vec::new(),
                };
            }
            let seed = derive_seed(hyper.seed, &format!("member/{name}"));
            let orders = epoch_orders(data.xs.len(), hyper.epochs, seed);
            let (plane, objective_history) = train_binary(&data, &targets, &orders, hyper.lambda);
            BinaryMember {
                plane,
                degenerate: false,
                objective_history,
            }
        })
        .collect();
    Ok(BinaryEnsemble {
        agents: agents.names().to_vec(),
        members,
        hyper: *hyper,
    })
}

pub fn basvm_predict(ensemble: &BinaryEnsemble, features: &[f64]) -> Result<usize> {
    ensemble.predict(features)
}

impl BinaryEnsemble {
    pub fn from_members(
        agents: Vec<String>,
        members: Vec<BinaryMember>,
        hyper: SvmHyper,
    ) -> Result<Self> {
        let planes: Vec<Hyperplane> = members.iter().map(|m| m.plane.clone()).collect();
        validate_planes(&agents, &planes)?;
        Ok(Self {
            agents,
            members,
            hyper,
        })
    }

    pub fn agents(&self) -> &[String] {
        &self.agents
    }

    pub fn members(&self) -> &[BinaryMember] {
        &self.members
    }

    pub fn dim(&self) -> usize {
        self.members[0].plane.w.len()
    }

    /// Signed margins; degenerate members score negative infinity.
    pub fn margins(&self, features: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), features)?;
        Ok(self
            .members
            .iter()
            .map(|m| {
                if m.degenerate {
                    f64::NEG_INFINITY
                } else {
                    m.plane.margin(features)
                }
            })
            .collect())
    }

    /// Top-ranked agent; ties (including all-degenerate) go to the lowest index.
    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        Ok(argmax_first(&self.margins(features)?))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("binary-ensemble\n");
        write_header(&mut out, &self.agents, self.dim(), &self.hyper);
        for (i, m) in self.members.iter().enumerate() {
            let state = if m.degenerate { "degenerate" } else { "ok" };
            writeln!(out, "member {i} {state} {}", plane_row(&m.plane)).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        expect_line(&mut lines, "binary-ensemble")?;
        let (agents, dim, hyper) = read_header(&mut lines)?;
        let members = (0..agents.len())
            .map(|i| {
                let line = lines.next().ok_or_else(|| bad("missing member"))?;
                let rest = line
                    .strip_prefix(&format!("member {i} "))
                    .ok_or_else(|| bad("bad member line"))?;
                let (state, row) = rest.split_once(' ').ok_or_else(|| bad("bad member line"))?;
                let degenerate = match state {
                    "ok" => false,
                    "degenerate" => true,
                    _ => return Err(bad("bad member state")),
                };
                Ok(BinaryMember {
                    plane: parse_plane(row, dim)?,
                    degenerate,
                    objective_history: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_members(agents, members, hyper)
    }
}

fn validate_planes(classes: &[String], planes: &[Hyperplane]) -> Result<()> {
    if planes.is_empty() || planes.len() != classes.len() {
        return Err(Error::DimensionMismatch {
            expected: classes.len(),
            got: planes.len(),
        });
    }
    let dim = planes[0].w.len();
    for p in planes {
        check_dim(dim, &p.w)?;
        if !p.b.is_finite() || p.w.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelFormat("non-finite weight".into()));
        }
    }
    Ok(())
}

fn bad(message: &str) -> Error {
    Error::ModelFormat(format!("svm: {message}"))
}

// f64 Display is the shortest string that parses back to the same bits.
fn plane_row(p: &Hyperplane) -> String {
    let mut row = p.b.to_string();
    for v in &p.w {
        write!(row, " {v}").unwrap();
    }
    row
}

fn parse_plane(row: &str, dim: usize) -> Result<Hyperplane> {
    let values = row
        .split(' ')
        .map(|v| v.parse::<f64>().map_err(|_| bad("bad number")))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != dim + 1 {
        return Err(bad("row width differs from dim"));
    }
    Ok(Hyperplane {
        b: values[0],
        w: values[1..].to_vec(),
    })
}

fn write_header(out: &mut String, classes: &[String], dim: usize, hyper: &SvmHyper) {
    writeln!(out, "classes {}", serde_json::to_string(classes).unwrap()).unwrap();
    writeln!(out, "dim {dim}").unwrap();
    writeln!(
        out,
        "hyper lambda={} epochs={} seed={}",
        hyper.lambda, hyper.epochs, hyper.seed
    )
    .unwrap();
}

fn expect_line<'a>(lines: &mut impl Iterator<Item = &'a str>, want: &str) -> Result<()> {
    match lines.next() {
        Some(l) if l == want => Ok(()),
        _ => Err(bad(&format!("expected `{want}` header"))),
    }
}

fn read_header<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
) -> Result<(Vec<String>, usize, SvmHyper)> {
    let mut field = |name: &str| {
        lines
            .next()
            .and_then(|l| l.strip_prefix(name))
            .and_then(|l| l.strip_prefix(' '))
            .ok_or_else(|| bad(&format!("missing `{name}`")))
    };
    let classes: Vec<String> =
        serde_json::from_str(field("classes")?).map_err(|_| bad("bad class list"))?;
    let dim: usize = field("dim")?.parse().map_err(|_| bad("bad dim"))?;
    let mut hyper = SvmHyper::default();
    for part in field("hyper")?.split(' ') {
        let (k, v) = part.split_once('=').ok_or_else(|| bad("bad hyper"))?;
        match k {
            "lambda" => hyper.lambda = v.parse().map_err(|_| bad("bad lambda"))?,
            "epochs" => hyper.epochs = v.parse().map_err(|_| bad("bad epochs"))?,
            "seed" => hyper.seed = v.parse().map_err(|_| bad("bad seed"))?,
            _ => return Err(bad("unknown hyper key")),
        }
    }
    Ok((classes, dim, hyper))
}
