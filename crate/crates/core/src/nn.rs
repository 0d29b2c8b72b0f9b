//! Dense ReLU multilayer perceptron without biases.
//!
//! The network computes `f(x) = sqrt(m) * W_L relu(W_{L-1} ... relu(W_1 x))`
//! where `m` is the hidden width. Hidden weights are drawn from `N(0, 2/m)` and
//! the output layer from `N(0, 1/(K m))`. Gradients are exact: for every layer
//! the gradient is a rank-one outer product `delta_l ⊗ a_{l-1}`, which
//! [`backward_factors`] exposes directly so callers can form gradient inner
//! products without materialising the full gradient.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of a network: input dimension `d`, width `m`, depth `L`
/// (number of weight matrices) and output dimension `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    input_dim: usize,
    width: usize,
    depth: usize,
    output_dim: usize,
}

impl NetConfig {
    pub fn new(input_dim: usize, width: usize, depth: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || width == 0 || output_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "network dimensions must be positive (d={input_dim}, m={width}, K={output_dim})"
            )));
        }
        if depth < 2 {
            return Err(Error::InvalidConfig(format!(
                "network depth must be at least 2, got {depth}"
            )));
        }
        Ok(Self {
            input_dim,
            width,
            depth,
            output_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// `(rows, cols)` of weight matrix `layer` (0-based).
    pub fn layer_shape(&self, layer: usize) -> (usize, usize) {
        let rows = if layer + 1 == self.depth {
            self.output_dim
        } else {
            self.width
        };
        let cols = if layer == 0 {
            self.input_dim
        } else {
            self.width
        };
        (rows, cols)
    }

    pub fn num_params(&self) -> usize {
        (0..self.depth)
            .map(|l| {
                let (r, c) = self.layer_shape(l);
                r * c
            })
            .sum()
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("matrix data", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::shape("matrix row", cols, row.len()));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn matvec_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.data.chunks_exact(self.cols).map(|row| dot(row, x)));
    }

    fn transpose_matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &s) in self.data.chunks_exact(self.cols).zip(v) {
            if s != 0.0 {
                axpy(s, row, &mut out);
            }
        }
        out
    }

    /// `self += scale * (u ⊗ v)`.
    fn add_outer(&mut self, scale: f64, u: &[f64], v: &[f64]) {
        for (row, &ui) in self.data.chunks_exact_mut(self.cols).zip(u) {
            let s = scale * ui;
            if s != 0.0 {
                axpy(s, v, row);
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Network weights `θ = [W_1, ..., W_L]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    config: NetConfig,
    layers: Vec<Matrix>,
}

/// Per-layer partial derivatives, shape-congruent with [`Params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    layers: Vec<Matrix>,
}

impl Params {
    pub fn zeros(config: NetConfig) -> Self {
        let layers = (0..config.depth)
            .map(|l| {
                let (r, c) = config.layer_shape(l);
                Matrix::zeros(r, c)
            })
            .collect();
        Self { config, layers }
    }

    pub fn from_layers(config: NetConfig, layers: Vec<Matrix>) -> Result<Self> {
        if layers.len() != config.depth {
            return Err(Error::shape("layer count", config.depth, layers.len()));
        }
        for (l, w) in layers.iter().enumerate() {
            let (r, c) = config.layer_shape(l);
            if w.rows != r {
                return Err(Error::shape("layer rows", r, w.rows));
            }
            if w.cols != c {
                return Err(Error::shape("layer cols", c, w.cols));
            }
            if w.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "layer {l} contains a non-finite weight"
                )));
            }
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut Matrix {
        &mut self.layers[l]
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|w| w.data.iter().all(|v| v.is_finite()))
    }

    /// Flattened `θ`, layer by layer in row-major order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|w| w.data.iter().copied())
            .collect()
    }

    fn apply(&mut self, grad: &Gradient, step: f64) {
        for (w, g) in self.layers.iter_mut().zip(&grad.layers) {
            axpy(-step, &g.data, &mut w.data);
        }
    }
}

impl Gradient {
    pub fn zeros_like(params: &Params) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|w| Matrix::zeros(w.rows, w.cols))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|w| w.data.iter().copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|w| w.data.iter().all(|&v| v == 0.0))
    }

    pub fn shape_matches(&self, params: &Params) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, w)| g.rows == w.rows && g.cols == w.cols)
    }
}

/// Draws hidden weights i.i.d. `N(0, 2/m)` and output weights `N(0, 1/(K m))`.
pub fn init_params(config: &NetConfig, seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_params_with(config, &mut rng)
}

pub fn init_params_with<R: Rng + ?Sized>(config: &NetConfig, rng: &mut R) -> Params {
    let m = config.width as f64;
    let k = config.output_dim as f64;
    let hidden = Normal::new(0.0, (2.0 / m).sqrt()).expect("positive std");
    let last = Normal::new(0.0, (1.0 / (k * m)).sqrt()).expect("positive std");
    let layers = (0..config.depth)
        .map(|l| {
            let (r, c) = config.layer_shape(l);
            let dist = if l + 1 == config.depth {
                &last
            } else {
                &hidden
            };
            let data = (0..r * c).map(|_| dist.sample(rng)).collect();
            Matrix {
                rows: r,
                cols: c,
                data,
            }
        })
        .collect();
    Params {
        config: *config,
        layers,
    }
}

/// Intermediate values of one forward pass.
///
/// `activations[0]` is the input; `activations[l]` for `1 <= l < L` is the
/// post-ReLU output `g_l` of hidden layer `l`. `masks[l-1]` marks the positive
/// pre-activations of hidden layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
    masks: Vec<Vec<bool>>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }

    /// Post-activation of hidden layer `l` (1-based, `1 <= l < L`).
    pub fn hidden(&self, l: usize) -> &[f64] {
        &self.activations[l]
    }

    /// Output of the last hidden layer, `g_{L-1}`.
    pub fn last_hidden(&self) -> &[f64] {
        self.activations
            .last()
            .expect("cache has at least one entry")
    }

    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

pub fn forward(params: &Params, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    let cfg = &params.config;
    if x.len() != cfg.input_dim {
        return Err(Error::shape("network input", cfg.input_dim, x.len()));
    }
    let depth = cfg.depth;
    let mut activations = Vec::with_capacity(depth);
    let mut masks = Vec::with_capacity(depth - 1);
    activations.push(x.to_vec());
    let mut pre = Vec::with_capacity(cfg.width);
    for w in &params.layers[..depth - 1] {
        w.matvec_into(activations.last().expect("nonempty"), &mut pre);
        // ReLU'(0) = 0.
        let mask: Vec<bool> = pre.iter().map(|&v| v > 0.0).collect();
        let act = pre.iter().map(|&v| v.max(0.0)).collect();
        masks.push(mask);
        activations.push(act);
    }
    let scale = (cfg.width as f64).sqrt();
    let mut output = Vec::with_capacity(cfg.output_dim);
    params.layers[depth - 1].matvec_into(activations.last().expect("nonempty"), &mut output);
    for v in &mut output {
        *v *= scale;
    }
    let cache = ForwardCache {
        activations,
        masks,
        output: output.clone(),
    };
    Ok((output, cache))
}

/// Output only, without retaining a cache.
pub fn predict(params: &Params, x: &[f64]) -> Result<Vec<f64>> {
    forward(params, x).map(|(out, _)| out)
}

fn check_cache(params: &Params, cache: &ForwardCache, upstream: &[f64]) -> Result<()> {
    let cfg = &params.config;
    if upstream.len() != cfg.output_dim {
        return Err(Error::shape(
            "upstream gradient",
            cfg.output_dim,
            upstream.len(),
        ));
    }
    if cache.activations.len() != cfg.depth {
        return Err(Error::shape(
            "cached layers",
            cfg.depth,
            cache.activations.len(),
        ));
    }
    for (l, a) in cache.activations.iter().enumerate() {
        let (_, cols) = cfg.layer_shape(l);
        if a.len() != cols {
            return Err(Error::shape("cached activation", cols, a.len()));
        }
    }
    if cache.output.len() != cfg.output_dim {
        return Err(Error::shape(
            "cached output",
            cfg.output_dim,
            cache.output.len(),
        ));
    }
    Ok(())
}

/// Backpropagated error signals `delta_l`, one per weight matrix.
///
/// The gradient of `⟨upstream, f(x)⟩` with respect to layer `l` is
/// `deltas[l] ⊗ cache.activations[l]`.
pub fn backward_factors(
    params: &Params,
    cache: &ForwardCache,
    upstream: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_cache(params, cache, upstream)?;
    let depth = params.config.depth;
    let scale = (params.config.width as f64).sqrt();
    let mut deltas = vec![Vec::new(); depth];
    deltas[depth - 1] = upstream.iter().map(|u| u * scale).collect();
    for l in (0..depth - 1).rev() {
        let mut e = params.layers[l + 1].transpose_matvec(&deltas[l + 1]);
        for (v, &on) in e.iter_mut().zip(&cache.masks[l]) {
            if !on {
                *v = 0.0;
            }
        }
        deltas[l] = e;
    }
    Ok(deltas)
}

/// `∇_θ ⟨upstream, f(x; θ)⟩`.
pub fn backward(params: &Params, cache: &ForwardCache, upstream: &[f64]) -> Result<Gradient> {
    let mut grad = Gradient::zeros_like(params);
    accumulate_gradient(params, cache, upstream, 1.0, &mut grad)?;
    Ok(grad)
}

fn accumulate_gradient(
    params: &Params,
    cache: &ForwardCache,
    upstream: &[f64],
    scale: f64,
    grad: &mut Gradient,
) -> Result<()> {
    let deltas = backward_factors(params, cache, upstream)?;
    for (l, delta) in deltas.iter().enumerate() {
        grad.layers[l].add_outer(scale, delta, &cache.activations[l]);
    }
    Ok(())
}

/// How [`sgd_train`] walks the buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// Plain SGD: one step per example, in buffer order.
    ExactPool,
    /// Seeded shuffle each epoch, averaged gradient per mini-batch.
    #[default]
    MiniBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub mode: TrainMode,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 40,
            batch_size: 64,
            mode: TrainMode::MiniBatch,
        }
    }
}

impl TrainSpec {
    /// One SGD step on each example, one pass.
    pub fn single_step(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            epochs: 1,
            batch_size: 1,
            mode: TrainMode::ExactPool,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A regression example: network input and target output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl Sample {
    pub fn new(input: Vec<f64>, target: Vec<f64>) -> Self {
        Self { input, target }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Params,
    /// Mean of `Σ_k (f(x)[k] - target[k])² / 2` over the buffer after training.
    pub loss: f64,
}

/// Squared loss `Σ_k (f(x)[k] - target[k])² / 2` of one example.
pub fn squared_loss(params: &Params, sample: &Sample) -> Result<f64> {
    let out = predict(params, &sample.input)?;
    if out.len() != sample.target.len() {
        return Err(Error::shape(
            "training target",
            out.len(),
            sample.target.len(),
        ));
    }
    Ok(out
        .iter()
        .zip(&sample.target)
        .map(|(o, t)| (o - t) * (o - t))
        .sum::<f64>()
        / 2.0)
}

pub fn mean_loss(params: &Params, buffer: &[&Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in buffer {
        total += squared_loss(params, s)?;
    }
    Ok(total / buffer.len().max(1) as f64)
}

/// Trains on the squared loss with SGD. Deterministic given `seed`.
pub fn sgd_train(
    params: &Params,
    buffer: &[Sample],
    spec: &TrainSpec,
    seed: u64,
) -> Result<TrainOutcome> {
    let refs: Vec<&Sample> = buffer.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sgd_train_refs(params, &refs, spec, &mut rng)
}

pub fn sgd_train_refs<R: Rng + ?Sized>(
    params: &Params,
    buffer: &[&Sample],
    spec: &TrainSpec,
    rng: &mut R,
) -> Result<TrainOutcome> {
    spec.validate()?;
    if buffer.is_empty() {
        return Err(Error::InvalidConfig("training buffer is empty".into()));
    }
    let k = params.config.output_dim;
    for s in buffer {
        if s.target.len() != k {
            return Err(Error::shape("training target", k, s.target.len()));
        }
    }
    let mut params = params.clone();
    let mut grad = Gradient::zeros_like(&params);
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let batch_size = match spec.mode {
        TrainMode::ExactPool => 1,
        TrainMode::MiniBatch => spec.batch_size,
    };
    for epoch in 1..=spec.epochs {
        if spec.mode == TrainMode::MiniBatch {
            order.shuffle(rng);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            for w in &mut grad.layers {
                w.data.fill(0.0);
            }
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let sample = buffer[i];
                let (out, cache) = forward(&params, &sample.input)?;
                let residual: Vec<f64> =
                    out.iter().zip(&sample.target).map(|(o, t)| o - t).collect();
                epoch_loss += residual.iter().map(|r| r * r).sum::<f64>() / 2.0;
                accumulate_gradient(&params, &cache, &residual, scale, &mut grad)?;
            }
            params.apply(&grad, spec.learning_rate);
        }
        if !epoch_loss.is_finite() || !params.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: epoch_loss,
            });
        }
    }
    let loss = mean_loss(&params, buffer)?;
    if !loss.is_finite() {
        return Err(Error::Divergence {
            epoch: spec.epochs,
            loss,
        });
    }
    Ok(TrainOutcome { params, loss })
}
