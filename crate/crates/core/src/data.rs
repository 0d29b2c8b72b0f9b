//! Datasets, unit normalisation, loss vectors and synthetic generators.
//!
//! # Synthetic construction
//!
//! [`synth`] places `K` orthonormal anchor directions `a_k` in `R^d` and draws
//! each point as `x = normalize(a_c + spread * z)` with `c` uniform and
//! `z ~ N(0, I/d)`. The posterior is a deterministic function of geometry:
//! with `b = argmax_k ⟨x, a_k⟩` and geometric margin
//! `δ(x) = ⟨x, a_b⟩ - max_{k≠b} ⟨x, a_k⟩`, the Bayes gap is
//! `g(x) = min(1, δ(x) / saturation)`, and
//!
//! ```text
//! P(y = b | x) = (g (K-1) + 1) / K,   P(y = k | x) = (1 - P(y = b | x)) / (K-1)  for k ≠ b.
//! ```
//!
//! The expected 0-1 loss vector is `h(x)[k] = 1 - P(y = k | x)`, so the gap
//! between the runner-up and the optimal class is exactly `g(x)`.
//!
//! * Hard-margin mode rejects draws with `g(x) < ε`, so every point has a
//!   unique optimal class with gap at least `ε`.
//! * Noise-exponent mode accepts a draw with probability `g(x)^α`. The
//!   accepted density of `g` is bounded by `C g^α`, which gives the tail
//!   `P(g ≤ ε) ≤ c ε^α`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pair::LossVector;

/// Tolerance for accepting a row as unit norm.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    name: String,
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    normalized: bool,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        inputs: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::shape("dataset labels", inputs.len(), labels.len()));
        }
        if num_classes == 0 {
            return Err(Error::Data("dataset needs at least one class".into()));
        }
        let dim = inputs.first().map_or(0, Vec::len);
        for (i, row) in inputs.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Data(format!(
                    "row {i} has {} features, expected {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {i} has a non-finite feature")));
            }
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::Data(format!(
                "label {y} at row {i} is out of range for {num_classes} classes"
            )));
        }
        let normalized = inputs
            .iter()
            .all(|r| (norm(r) - 1.0).abs() <= UNIT_NORM_TOL);
        Ok(Self {
            name: name.into(),
            inputs,
            labels,
            num_classes,
            normalized,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    pub fn y(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// L2-normalises every row. Fails on the first zero-norm row.
    pub fn normalize(mut self) -> Result<Self> {
        for (i, row) in self.inputs.iter_mut().enumerate() {
            let n = norm(row);
            if n == 0.0 {
                return Err(Error::Data(format!("row {i} has zero norm")));
            }
            row.iter_mut().for_each(|v| *v /= n);
        }
        self.normalized = true;
        Ok(self)
    }

    /// Returns an error naming the first row that is not unit norm.
    pub fn require_normalized(&self) -> Result<()> {
        for (row, x) in self.inputs.iter().enumerate() {
            let n = norm(x);
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::NotNormalized { row, norm: n });
            }
        }
        Ok(())
    }

    /// Seeded permutation of the rows.
    pub fn shuffled(&self, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        self.subset(&order)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            normalized: self.normalized,
        }
    }

    /// First `n` rows and the remainder.
    pub fn split_at(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Delimiter-separated text: numeric features followed by a label column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelimitedFormat {
    pub delimiter: u8,
    /// `None` detects a header from non-numeric feature fields in the first row.
    pub has_header: Option<bool>,
}

impl Default for DelimitedFormat {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: None,
        }
    }
}

pub fn load_normalize(path: &Path, format: &DelimitedFormat) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned());
    parse_delimited(&name, &text, format)?.normalize()
}

/// Parses features and labels without normalising. Labels are remapped to
/// `0..K` in sorted order (numeric when every label parses as a number).
pub fn parse_delimited(name: &str, text: &str, format: &DelimitedFormat) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        rows.push(record);
    }
    let has_header = match format.has_header {
        Some(h) => h,
        None => rows.first().is_some_and(|r| {
            let n = r.len();
            r.iter()
                .take(n.saturating_sub(1))
                .any(|f| f.parse::<f64>().is_err())
        }),
    };
    let body = if has_header {
        &rows[1.min(rows.len())..]
    } else {
        &rows[..]
    };

    let mut inputs = Vec::with_capacity(body.len());
    let mut raw_labels = Vec::with_capacity(body.len());
    for (i, record) in body.iter().enumerate() {
        if record.len() < 2 {
            return Err(Error::Data(format!(
                "row {i} needs at least one feature and a label"
            )));
        }
        let n = record.len();
        let mut features = Vec::with_capacity(n - 1);
        for field in record.iter().take(n - 1) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Data(format!("row {i}: cannot parse feature {field:?}")))?;
            features.push(v);
        }
        let label = record.get(n - 1).unwrap_or_default();
        if label.is_empty() {
            return Err(Error::Data(format!("row {i}: missing label")));
        }
        inputs.push(features);
        raw_labels.push(label.to_string());
    }

    let numeric: Option<Vec<f64>> = raw_labels.iter().map(|l| l.parse::<f64>().ok()).collect();
    let mut distinct: Vec<String> = raw_labels.clone();
    match &numeric {
        Some(_) => distinct.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap()
                .total_cmp(&b.parse::<f64>().unwrap())
        }),
        None => distinct.sort(),
    }
    distinct.dedup();
    let index: BTreeMap<&str, usize> = distinct
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let labels = raw_labels.iter().map(|l| index[l.as_str()]).collect();
    Dataset::new(name, inputs, labels, distinct.len().max(1))
}

/// Writes features and labels as comma-separated text without a header.
pub fn write_delimited(dataset: &Dataset, out: &mut impl std::io::Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for (x, y) in dataset.inputs.iter().zip(&dataset.labels) {
        let mut fields: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        fields.push(y.to_string());
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-class loss `ℓ(k, label) ∈ [0, 1]`.
#[derive(Clone, Default)]
pub enum LossKind {
    #[default]
    ZeroOne,
    Custom(Arc<dyn Fn(usize, usize) -> f64 + Send + Sync>),
}

impl fmt::Debug for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::ZeroOne => f.write_str("ZeroOne"),
            LossKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

pub fn make_loss_vector(label: usize, num_classes: usize, kind: &LossKind) -> Result<LossVector> {
    if label >= num_classes {
        return Err(Error::Data(format!(
            "label {label} out of range for {num_classes} classes"
        )));
    }
    let u = match kind {
        LossKind::ZeroOne => (0..num_classes)
            .map(|k| if k == label { 0.0 } else { 1.0 })
            .collect(),
        LossKind::Custom(f) => (0..num_classes).map(|k| f(k, label)).collect(),
    };
    LossVector::new(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseModel {
    /// Every point has Bayes gap at least `margin`.
    Hard { margin: f64 },
    /// Mammen-Tsybakov style tail with exponent `alpha`.
    Tsybakov { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dim: usize,
    pub num_classes: usize,
    pub n: usize,
    pub noise: NoiseModel,
    /// Scale of the Gaussian perturbation around the anchor.
    #[serde(default = "default_spread")]
    pub spread: f64,
    /// Geometric margin at which labels become noise-free.
    #[serde(default = "default_saturation")]
    pub saturation: f64,
    pub seed: u64,
}

fn default_spread() -> f64 {
    0.6
}

fn default_saturation() -> f64 {
    0.5
}

impl SynthSpec {
    pub fn hard(dim: usize, num_classes: usize, n: usize, margin: f64, seed: u64) -> Self {
        Self {
            dim,
            num_classes,
            n,
            noise: NoiseModel::Hard { margin },
            spread: default_spread(),
            saturation: default_saturation(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig(
                "synthetic dimension must be positive".into(),
            ));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(
                "synthetic data needs at least two classes".into(),
            ));
        }
        if self.num_classes > self.dim {
            return Err(Error::InvalidConfig(format!(
                "{} orthogonal anchors do not fit in dimension {}",
                self.num_classes, self.dim
            )));
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return Err(Error::InvalidConfig("spread must be nonnegative".into()));
        }
        if !(self.saturation.is_finite() && self.saturation > 0.0) {
            return Err(Error::InvalidConfig("saturation must be positive".into()));
        }
        match self.noise {
            NoiseModel::Hard { margin } if !(margin > 0.0 && margin <= 1.0) => Err(
                Error::InvalidConfig(format!("hard margin must lie in (0, 1], got {margin}")),
            ),
            NoiseModel::Tsybakov { alpha } if !(alpha.is_finite() && alpha >= 0.0) => Err(
                Error::InvalidConfig(format!("noise exponent must be >= 0, got {alpha}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Known generative model behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthModel {
    anchors: Vec<Vec<f64>>,
    saturation: f64,
}

impl SynthModel {
    pub fn anchors(&self) -> &[Vec<f64>] {
        &self.anchors
    }

    fn ranked(&self, x: &[f64]) -> (usize, f64) {
        let proj: Vec<f64> = self.anchors.iter().map(|a| crate::nn::dot(a, x)).collect();
        let best = argmax(&proj);
        let runner_up = proj
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != best)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        (best, proj[best] - runner_up)
    }

    pub fn bayes_class(&self, x: &[f64]) -> usize {
        self.ranked(x).0
    }

    /// `h(x)[k°] - h(x)[k*]`.
    pub fn bayes_gap(&self, x: &[f64]) -> f64 {
        (self.ranked(x).1 / self.saturation).min(1.0)
    }

    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let k = self.anchors.len();
        let (best, _) = self.ranked(x);
        let g = self.bayes_gap(x);
        let p_best = (g * (k as f64 - 1.0) + 1.0) / k as f64;
        let p_other = (1.0 - p_best) / (k as f64 - 1.0);
        (0..k)
            .map(|c| if c == best { p_best } else { p_other })
            .collect()
    }

    /// Expected 0-1 loss per class, `h(x)[k] = 1 - P(y = k | x)`.
    pub fn expected_loss(&self, x: &[f64]) -> Vec<f64> {
        self.posterior(x).into_iter().map(|p| 1.0 - p).collect()
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub model: SynthModel,
}

const MAX_ATTEMPTS_PER_POINT: usize = 100_000;

pub fn synth(spec: &SynthSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let anchors = orthonormal_anchors(spec.num_classes, spec.dim, &mut rng);
    let model = SynthModel {
        anchors,
        saturation: spec.saturation,
    };
    let noise_scale = spec.spread / (spec.dim as f64).sqrt();
    let mut inputs = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    while inputs.len() < spec.n {
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS_PER_POINT {
            let c = rng.random_range(0..spec.num_classes);
            let mut x: Vec<f64> = model.anchors[c]
                .iter()
                .map(|a| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    a + noise_scale * z
                })
                .collect();
            let n = norm(&x);
            if n == 0.0 {
                continue;
            }
            x.iter_mut().for_each(|v| *v /= n);
            let g = model.bayes_gap(&x);
            let keep = match spec.noise {
                NoiseModel::Hard { margin } => g >= margin,
                NoiseModel::Tsybakov { alpha } => rng.random::<f64>() < g.powf(alpha),
            };
            if keep {
                accepted = Some(x);
                break;
            }
        }
        let x = accepted.ok_or_else(|| {
            Error::InvalidConfig(format!(
                "synthetic generator could not place a point after {MAX_ATTEMPTS_PER_POINT} draws; \
                 reduce the margin or increase the saturation"
            ))
        })?;
        let post = model.posterior(&x);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut y = post.len() - 1;
        for (k, p) in post.iter().enumerate() {
            acc += p;
            if u < acc {
                y = k;
                break;
            }
        }
        inputs.push(x);
        labels.push(y);
    }
    let name = match spec.noise {
        NoiseModel::Hard { margin } => format!("synth-hard-{margin}"),
        NoiseModel::Tsybakov { alpha } => format!("synth-alpha-{alpha}"),
    };
    let dataset = Dataset::new(name, inputs, labels, spec.num_classes)?;
    Ok(Synthetic { dataset, model })
}

/// Gram-Schmidt on Gaussian vectors.
fn orthonormal_anchors<R: Rng>(k: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for a in &out {
            let p = crate::nn::dot(a, &v);
            v.iter_mut().zip(a).for_each(|(vi, ai)| *vi -= p * ai);
        }
        let n = norm(&v);
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            out.push(v);
        }
    }
    out
}
