//! One-vs-rest linear SVM trained by averaged stochastic subgradient descent.
//!
//! Training is single threaded and fully determined by the examples and the
//! [`TrainConfig`]: the example order of every epoch comes from a ChaCha RNG
//! seeded with `config.seed`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::FeatureVector;

pub const MODEL_MAGIC: &str = "ddparse-model";
pub const MODEL_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training needs at least two distinct labels (got {0})")]
    DegenerateData(usize),

    #[error("example {index} has label '{label}' outside the label set")]
    UnknownLabel { index: usize, label: String },

    #[error("example {0} has no features")]
    EmptyExample(usize),

    #[error("model format error at line {line}: {reason}")]
    Format { line: usize, reason: String },

    #[error("unsupported model version '{found}' (expected {MODEL_VERSION})")]
    VersionMismatch { found: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Initial step size; epoch `e` (0-based) uses `learning_rate / (1 + e)`.
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 0.1,
            l2: 1e-5,
            seed: 42,
        }
    }
}

/// Per-label sparse weights and biases. Prediction is the argmax of
/// `w_y · x + b_y`, ties going to the lowest label index.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    labels: Vec<String>,
    weights: Vec<BTreeMap<String, f64>>,
    bias: Vec<f64>,
    meta: TrainConfig,
}

impl LinearModel {
    /// An all-zero model over `labels`.
    pub fn zeros(labels: Vec<String>) -> Self {
        let n = labels.len();
        LinearModel {
            labels,
            weights: vec![BTreeMap::new(); n],
            bias: vec![0.0; n],
            meta: TrainConfig::default(),
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn meta(&self) -> &TrainConfig {
        &self.meta
    }

    pub fn weight(&self, label: usize, feature: &str) -> f64 {
        self.weights[label].get(feature).copied().unwrap_or(0.0)
    }

    pub fn set_weight(&mut self, label: usize, feature: &str, value: f64) {
        if value == 0.0 {
            self.weights[label].remove(feature);
        } else {
            self.weights[label].insert(feature.to_owned(), value);
        }
    }

    pub fn set_bias(&mut self, label: usize, value: f64) {
        self.bias[label] = value;
    }

    /// Raw decision values in label order. Unknown features contribute 0.
    pub fn score_vector(&self, fv: &FeatureVector) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + fv.iter().map(|(f, x)| w.get(f).map_or(0.0, |wf| wf * x)).sum::<f64>())
            .collect()
    }

    pub fn scores(&self, fv: &FeatureVector) -> BTreeMap<String, f64> {
        self.labels.iter().cloned().zip(self.score_vector(fv)).collect()
    }

    /// Index of the best label among those `allowed` admits.
    pub fn predict_index_where(&self, fv: &FeatureVector, allowed: impl Fn(usize) -> bool) -> Option<usize> {
        argmax(
            self.score_vector(fv)
                .into_iter()
                .enumerate()
                .filter(|(i, _)| allowed(*i)),
        )
    }

    pub fn predict_index(&self, fv: &FeatureVector) -> usize {
        self.predict_index_where(fv, |_| true).expect("model has labels")
    }

    pub fn predict(&self, fv: &FeatureVector) -> &str {
        &self.labels[self.predict_index(fv)]
    }

    /// Serializes to the versioned text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_text(&mut out);
        out
    }

    pub(crate) fn write_text(&self, out: &mut String) {
        let m = &self.meta;
        writeln!(out, "{MODEL_MAGIC} v{MODEL_VERSION}").unwrap();
        writeln!(
            out,
            "meta\tlabels={}\tepochs={}\tlearning_rate={}\tl2={}\tseed={}",
            self.labels.len(),
            m.epochs,
            float(m.learning_rate),
            float(m.l2),
            m.seed
        )
        .unwrap();
        for ((label, weights), bias) in self.labels.iter().zip(&self.weights).zip(&self.bias) {
            writeln!(out, "label\t{label}\t{}\t{}", float(*bias), weights.len()).unwrap();
            for (feature, w) in weights {
                writeln!(out, "{feature}\t{}", float(*w)).unwrap();
            }
        }
    }

    pub fn from_text(text: &str) -> Result<Self, ClassifierError> {
        let mut lines = Lines::new(text);
        let model = Self::read_text(&mut lines)?;
        if let Some((n, _)) = lines.next_nonempty() {
            return Err(format_err(n, "trailing content after model"));
        }
        Ok(model)
    }

    pub(crate) fn read_text(lines: &mut Lines<'_>) -> Result<Self, ClassifierError> {
        let (n, header) = lines.require("header")?;
        let version = header
            .strip_prefix(MODEL_MAGIC)
            .and_then(|v| v.strip_prefix(" v"))
            .ok_or_else(|| format_err(n, "missing model header"))?;
        if version != MODEL_VERSION {
            return Err(ClassifierError::VersionMismatch {
                found: version.to_owned(),
            });
        }

        let (n, meta_line) = lines.require("metadata")?;
        let mut fields = meta_line.split('\t');
        if fields.next() != Some("meta") {
            return Err(format_err(n, "expected metadata line"));
        }
        let meta: HashMap<&str, &str> = fields.filter_map(|f| f.split_once('=')).collect();
        let get = |key: &str| {
            meta.get(key)
                .copied()
                .ok_or_else(|| format_err(n, &format!("missing {key}")))
        };
        let n_labels: usize = parse_num(n, get("labels")?)?;
        let config = TrainConfig {
            epochs: parse_num(n, get("epochs")?)?,
            learning_rate: parse_num(n, get("learning_rate")?)?,
            l2: parse_num(n, get("l2")?)?,
            seed: parse_num(n, get("seed")?)?,
        };

        let mut labels = Vec::with_capacity(n_labels);
        let mut weights = Vec::with_capacity(n_labels);
        let mut bias = Vec::with_capacity(n_labels);
        for _ in 0..n_labels {
            let (n, line) = lines.require("label block")?;
            let parts: Vec<&str> = line.split('\t').collect();
            let [tag, label, b, count] = parts[..] else {
                return Err(format_err(n, "malformed label line"));
            };
            if tag != "label" {
                return Err(format_err(n, "expected label line"));
            }
            let count: usize = parse_num(n, count)?;
            let mut w = BTreeMap::new();
            for _ in 0..count {
                let (n, line) = lines.require("weight record")?;
                let (feature, value) = line
                    .rsplit_once('\t')
                    .ok_or_else(|| format_err(n, "malformed weight record"))?;
                w.insert(feature.to_owned(), parse_num(n, value)?);
            }
            labels.push(label.to_owned());
            bias.push(parse_num(n, b)?);
            weights.push(w);
        }
        Ok(LinearModel {
            labels,
            weights,
            bias,
            meta: config,
        })
    }
}

fn argmax(scores: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// 17 significant digits, enough to round-trip any f64.
fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_err(line: usize, reason: &str) -> ClassifierError {
    ClassifierError::Format {
        line,
        reason: reason.to_owned(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, ClassifierError> {
    s.trim()
        .parse()
        .map_err(|_| format_err(line, &format!("bad number '{s}'")))
}

/// Line cursor with 1-based numbering for error messages.
pub(crate) struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
        }
    }

    pub(crate) fn require(&mut self, what: &str) -> Result<(usize, &'a str), ClassifierError> {
        match self.inner.next() {
            Some((i, line)) => Ok((i + 1, line)),
            None => Err(format_err(0, &format!("unexpected end of file, expected {what}"))),
        }
    }

    pub(crate) fn next_nonempty(&mut self) -> Option<(usize, &'a str)> {
        self.inner
            .by_ref()
            .find(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l))
    }
}

pub fn save_model(model: &LinearModel, path: &Path) -> Result<(), ClassifierError> {
    fs::write(path, model.to_text()).map_err(|source| ClassifierError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<LinearModel, ClassifierError> {
    let text = fs::read_to_string(path).map_err(|source| ClassifierError::Io {
        path: path.to_owned(),
        source,
    })?;
    LinearModel::from_text(&text)
}

pub fn scores(model: &LinearModel, fv: &FeatureVector) -> BTreeMap<String, f64> {
    model.scores(fv)
}

pub fn predict<'m>(model: &'m LinearModel, fv: &FeatureVector) -> &'m str {
    model.predict(fv)
}

/// Labeled training example.
pub type Example = (FeatureVector, String);

/// Trains over the distinct labels of `examples`, in sorted order.
pub fn train(examples: &[Example], config: &TrainConfig) -> Result<LinearModel, ClassifierError> {
    let mut labels: Vec<String> = examples.iter().map(|(_, l)| l.clone()).collect();
    labels.sort();
    labels.dedup();
    train_with_labels(examples, &labels, config)
}

/// Trains over a fixed label list; its order is the tie-break order.
/// Labels without examples still get (negative) weights.
pub fn train_with_labels(
    examples: &[Example],
    labels: &[String],
    config: &TrainConfig,
) -> Result<LinearModel, ClassifierError> {
    Ok(train_traced(examples, labels, config)?.0)
}

/// Like [`train_with_labels`], also returning the mean one-vs-rest hinge loss
/// of the averaged model after each epoch.
pub fn train_traced(
    examples: &[Example],
    labels: &[String],
    config: &TrainConfig,
) -> Result<(LinearModel, Vec<f64>), ClassifierError> {
    let mut distinct = labels.to_vec();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 2 || distinct.len() != labels.len() {
        return Err(ClassifierError::DegenerateData(distinct.len()));
    }

    let label_index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut feature_index: HashMap<&str, usize> = HashMap::new();
    let mut feature_names: Vec<&str> = Vec::new();
    let mut data: Vec<(Vec<(usize, f64)>, usize)> = Vec::with_capacity(examples.len());
    for (i, (fv, label)) in examples.iter().enumerate() {
        if fv.is_empty() {
            return Err(ClassifierError::EmptyExample(i));
        }
        let y = *label_index
            .get(label.as_str())
            .ok_or_else(|| ClassifierError::UnknownLabel {
                index: i,
                label: label.clone(),
            })?;
        let x = fv
            .iter()
            .map(|(name, value)| {
                let next = feature_names.len();
                let idx = *feature_index.entry(name).or_insert_with(|| {
                    feature_names.push(name);
                    next
                });
                (idx, value)
            })
            .collect();
        data.push((x, y));
    }

    let mut sgd = AveragedSgd::new(labels.len(), feature_names.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let eta = config.learning_rate / (1.0 + epoch as f64);
        for &i in &order {
            let (x, y) = &data[i];
            sgd.step(x, *y, eta, config.l2);
        }
        let (w, b) = sgd.averaged();
        losses.push(mean_hinge(&w, &b, &data));
    }

    let (w, b) = sgd.averaged();
    let weights = w
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(f, v)| (feature_names[f].to_owned(), *v))
                .collect()
        })
        .collect();
    let model = LinearModel {
        labels: labels.to_vec(),
        weights,
        bias: b,
        meta: config.clone(),
    };
    Ok((model, losses))
}

fn mean_hinge(w: &[Vec<f64>], b: &[f64], data: &[(Vec<(usize, f64)>, usize)]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (x, y) in data {
        for (label, (row, bias)) in w.iter().zip(b).enumerate() {
            let t = if label == *y { 1.0 } else { -1.0 };
            let s = bias + x.iter().map(|(f, v)| row[*f] * v).sum::<f64>();
            total += (1.0 - t * s).max(0.0);
        }
    }
    total / (data.len() * w.len()) as f64
}

/// Dense SGD state with lazy L2 shrinkage and lazy weight averaging.
///
/// The live weights are `scale * v`. `acc` holds the running sum of live
/// weights over all steps so far, settled lazily: between updates a weight
/// only changes through `scale`, so its contribution is `v * (cum_scale -
/// settled_at)`.
struct AveragedSgd {
    v: Vec<Vec<f64>>,
    acc: Vec<Vec<f64>>,
    settled_at: Vec<Vec<f64>>,
    bias: Vec<f64>,
    bias_acc: Vec<f64>,
    scale: f64,
    cum_scale: f64,
    steps: u64,
}

impl AveragedSgd {
    fn new(n_labels: usize, n_features: usize) -> Self {
        AveragedSgd {
            v: vec![vec![0.0; n_features]; n_labels],
            acc: vec![vec![0.0; n_features]; n_labels],
            settled_at: vec![vec![0.0; n_features]; n_labels],
            bias: vec![0.0; n_labels],
            bias_acc: vec![0.0; n_labels],
            scale: 1.0,
            cum_scale: 0.0,
            steps: 0,
        }
    }

    fn step(&mut self, x: &[(usize, f64)], y: usize, eta: f64, l2: f64) {
        let margins: Vec<f64> = (0..self.v.len())
            .map(|label| {
                let t = if label == y { 1.0 } else { -1.0 };
                let dot: f64 = x.iter().map(|(f, val)| self.v[label][*f] * val).sum();
                t * (self.scale * dot + self.bias[label])
            })
            .collect();

        self.scale *= 1.0 - eta * l2;
        for (label, margin) in margins.into_iter().enumerate() {
            if margin >= 1.0 {
                continue;
            }
            let t = if label == y { 1.0 } else { -1.0 };
            for &(f, val) in x {
                self.settle(label, f);
                self.v[label][f] += eta * t * val / self.scale;
            }
            self.bias[label] += eta * t;
        }
        self.cum_scale += self.scale;
        for (acc, b) in self.bias_acc.iter_mut().zip(&self.bias) {
            *acc += b;
        }
        self.steps += 1;

        if self.scale < 1e-9 {
            self.rescale();
        }
    }

    fn settle(&mut self, label: usize, f: usize) {
        let since = self.cum_scale - self.settled_at[label][f];
        if since != 0.0 {
            self.acc[label][f] += self.v[label][f] * since;
            self.settled_at[label][f] = self.cum_scale;
        }
    }

    fn settle_all(&mut self) {
        for label in 0..self.v.len() {
            for f in 0..self.v[label].len() {
                self.settle(label, f);
            }
        }
    }

    fn rescale(&mut self) {
        self.settle_all();
        for row in &mut self.v {
            for w in row.iter_mut() {
                *w *= self.scale;
            }
        }
        // acc already holds true weight sums, so only future increments of
        // cum_scale need to be relative to the new unit scale.
        self.scale = 1.0;
    }

    /// Averaged weights and biases over all steps taken so far.
    fn averaged(&mut self) -> (Vec<Vec<f64>>, Vec<f64>) {
        self.settle_all();
        let n = self.steps.max(1) as f64;
        let w = self.acc.iter().map(|row| row.iter().map(|a| a / n).collect()).collect();
        let b = self.bias_acc.iter().map(|a| a / n).collect();
        (w, b)
    }
}
