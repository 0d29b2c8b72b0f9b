//! The exploitation network `f1`, the exploration network `f2`, and their
//! coupled update.
//!
//! `f1` maps an input to an estimate of the per-class loss vector. `f2` reads
//! the end-to-end embedding of `f1` (first hidden layer plus the last-layer
//! Jacobian) and estimates the signed residual `u - f1(x)`. The decision score
//! is `f1(x) + f2(φ(x))`; the predicted class is its argmin.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{self, NetConfig, Params, Sample, TrainMode, TrainSpec};

/// Per-class losses `u[k] = ℓ(k, y)` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if let Some((k, v)) = u
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::InvalidConfig(format!(
                "loss entry {k} = {v} is outside [0, 1]"
            )));
        }
        Ok(Self(u))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// End-to-end embedding `φ(x)` of length `m + K m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub phi: Vec<f64>,
    /// False only when the raw vector was zero and could not be scaled.
    pub normalized: bool,
}

/// Builds `φ(x)` from a forward pass of `f1`.
///
/// The first block is the first hidden layer `relu(W_1 x)`. The second block is
/// `vec(∇_{W_L} f1)` with row `k` equal to `∂f1[k]/∂W_L[k,:] = sqrt(m) g_{L-1}`.
pub fn embedding_from_cache(f1: &Params, cache: &nn::ForwardCache) -> Embedding {
    let cfg = f1.config();
    let m = cfg.width();
    let k = cfg.output_dim();
    let scale = (m as f64).sqrt();
    let mut phi = Vec::with_capacity(m + k * m);
    phi.extend_from_slice(cache.hidden(1));
    let last = cache.last_hidden();
    for _ in 0..k {
        phi.extend(last.iter().map(|g| scale * g));
    }
    let n = crate::data::norm(&phi);
    let normalized = n > 0.0;
    if normalized {
        phi.iter_mut().for_each(|v| *v /= n);
    }
    Embedding { phi, normalized }
}

/// Outputs of both networks for one input.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub exploit: Vec<f64>,
    pub explore: Vec<f64>,
    pub embedding: Embedding,
}

impl Evaluation {
    pub fn score(&self) -> Vec<f64> {
        self.exploit
            .iter()
            .zip(&self.explore)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Training targets used by one update; exposed so callers can audit them.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateTargets {
    pub exploit: Sample,
    pub explore: Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PairHyper {
    pub exploit: TrainSpec,
    pub explore: TrainSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorPair {
    f1: Params,
    f2: Params,
    hyper: PairHyper,
}

impl PredictorPair {
    /// Fresh pair with `f2` sharing `f1`'s width and depth.
    pub fn init(
        input_dim: usize,
        width: usize,
        depth: usize,
        num_classes: usize,
        hyper: PairHyper,
        seed: u64,
    ) -> Result<Self> {
        let c1 = NetConfig::new(input_dim, width, depth, num_classes)?;
        let c2 = NetConfig::new(width * (1 + num_classes), width, depth, num_classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f1 = nn::init_params_with(&c1, &mut rng);
        let f2 = nn::init_params_with(&c2, &mut rng);
        Self::from_params(f1, f2, hyper)
    }

    pub fn from_params(f1: Params, f2: Params, hyper: PairHyper) -> Result<Self> {
        let c1 = f1.config();
        let c2 = f2.config();
        let want = c1.width() * (1 + c1.output_dim());
        if c2.input_dim() != want {
            return Err(Error::shape("exploration input", want, c2.input_dim()));
        }
        if c2.output_dim() != c1.output_dim() {
            return Err(Error::shape(
                "exploration output",
                c1.output_dim(),
                c2.output_dim(),
            ));
        }
        hyper.exploit.validate()?;
        hyper.explore.validate()?;
        Ok(Self { f1, f2, hyper })
    }

    pub fn exploit(&self) -> &Params {
        &self.f1
    }

    pub fn explore(&self) -> &Params {
        &self.f2
    }

    pub fn hyper(&self) -> &PairHyper {
        &self.hyper
    }

    pub fn num_classes(&self) -> usize {
        self.f1.config().output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.f1.config().input_dim()
    }

    pub fn embed(&self, x: &[f64]) -> Result<Embedding> {
        let (_, cache) = nn::forward(&self.f1, x)?;
        Ok(embedding_from_cache(&self.f1, &cache))
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        let (exploit, cache) = nn::forward(&self.f1, x)?;
        let embedding = embedding_from_cache(&self.f1, &cache);
        let explore = nn::predict(&self.f2, &embedding.phi)?;
        Ok(Evaluation {
            exploit,
            explore,
            embedding,
        })
    }

    /// `f1(x) + f2(φ(x))`.
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(x).map(|e| e.score())
    }

    /// Class with minimal score, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmin(&self.score(x)?))
    }

    /// Targets for one observation, computed with the current (pre-update) `f1`.
    pub fn targets(&self, x: &[f64], u: &LossVector) -> Result<UpdateTargets> {
        if u.len() != self.num_classes() {
            return Err(Error::shape("loss vector", self.num_classes(), u.len()));
        }
        let (before, cache) = nn::forward(&self.f1, x)?;
        let embedding = embedding_from_cache(&self.f1, &cache);
        let residual = u
            .as_slice()
            .iter()
            .zip(&before)
            .map(|(ui, fi)| ui - fi)
            .collect();
        Ok(UpdateTargets {
            exploit: Sample::new(x.to_vec(), u.as_slice().to_vec()),
            explore: Sample::new(embedding.phi, residual),
        })
    }

    /// Trains `f1` toward `u` on `x` and `f2` toward `u - f1(x)` on `φ(x)`,
    /// both targets taken from the pair before the update.
    pub fn update(&self, x: &[f64], u: &LossVector, seed: u64) -> Result<(Self, UpdateTargets)> {
        let targets = self.targets(x, u)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let next = self.train_on(&[&targets.exploit], &[&targets.explore], &mut rng)?;
        Ok((next, targets))
    }

    fn train_on<R: Rng + ?Sized>(
        &self,
        exploit: &[&Sample],
        explore: &[&Sample],
        rng: &mut R,
    ) -> Result<Self> {
        let f1 = nn::sgd_train_refs(&self.f1, exploit, &self.hyper.exploit, rng)?.params;
        let f2 = nn::sgd_train_refs(&self.f2, explore, &self.hyper.explore, rng)?.params;
        Ok(Self {
            f1,
            f2,
            hyper: self.hyper,
        })
    }
}

pub(crate) fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmin-score class equals the label.
pub fn accuracy(pair: &PredictorPair, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (x, &y) in data.inputs().iter().zip(data.labels()) {
        if pair.predict(x)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// A [`PredictorPair`] plus the history of observations it was trained on.
///
/// With `replay <= 1` each observation triggers one update on that example
/// alone. Otherwise each update trains on the newest example together with up
/// to `replay - 1` earlier examples drawn uniformly without replacement. The
/// stored exploration targets keep the embedding and residual from the round
/// they were observed in.
#[derive(Debug, Clone)]
pub struct OnlineLearner {
    pair: PredictorPair,
    exploit_history: Vec<Sample>,
    explore_history: Vec<Sample>,
    replay: usize,
}

impl OnlineLearner {
    pub fn new(pair: PredictorPair, replay: usize) -> Self {
        Self {
            pair,
            exploit_history: Vec::new(),
            explore_history: Vec::new(),
            replay,
        }
    }

    pub fn pair(&self) -> &PredictorPair {
        &self.pair
    }

    pub fn into_pair(self) -> PredictorPair {
        self.pair
    }

    pub fn replay(&self) -> usize {
        self.replay
    }

    pub fn observations(&self) -> usize {
        self.exploit_history.len()
    }

    pub fn observe<R: Rng + ?Sized>(
        &mut self,
        x: &[f64],
        u: &LossVector,
        rng: &mut R,
    ) -> Result<UpdateTargets> {
        let targets = self.pair.targets(x, u)?;
        self.exploit_history.push(targets.exploit.clone());
        self.explore_history.push(targets.explore.clone());
        let newest = self.exploit_history.len() - 1;
        let mut picked = vec![newest];
        if self.replay > 1 && newest > 0 {
            let extra = (self.replay - 1).min(newest);
            picked.extend(index::sample(rng, newest, extra).iter());
        }
        let exploit: Vec<&Sample> = picked.iter().map(|&i| &self.exploit_history[i]).collect();
        let explore: Vec<&Sample> = picked.iter().map(|&i| &self.explore_history[i]).collect();
        self.pair = self.pair.train_on(&exploit, &explore, rng)?;
        Ok(targets)
    }
}

/// Training specs for the analysis-style update: one plain SGD step per round.
pub fn single_step_hyper(lr_exploit: f64, lr_explore: f64) -> PairHyper {
    PairHyper {
        exploit: TrainSpec::single_step(lr_exploit),
        explore: TrainSpec::single_step(lr_explore),
    }
}

impl PairHyper {
    pub fn uses_exact_steps(&self) -> bool {
        self.exploit.mode == TrainMode::ExactPool && self.explore.mode == TrainMode::ExactPool
    }
}
