//! Stream-based selective sampling.
//!
//! Each round scores the incoming point with `f1 + f2`, predicts the argmin
//! class `k̂`, and queries the label when the gap to the runner-up `k°` is
//! below `2 γ β_t`. Unqueried rounds train on the prediction itself as a
//! pseudo-label.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{make_loss_vector, Dataset, LossKind};
use crate::error::{Error, Result};
use crate::pair::{accuracy, OnlineLearner, PredictorPair};

/// `β_t = sqrt(K S² / t) + sqrt(2 log(3T/δ) / t)`.
pub fn beta(t: usize, num_classes: usize, s_norm: f64, horizon: usize, delta: f64) -> f64 {
    let t = t as f64;
    (num_classes as f64 * s_norm * s_norm / t).sqrt()
        + (2.0 * (3.0 * horizon as f64 / delta).ln() / t).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub k_hat: usize,
    pub k_circ: usize,
    /// `|s[k̂] - s[k°]|`.
    pub gap: f64,
    /// `I_t`: the gap is strictly below `2 γ β_t`.
    pub fires: bool,
}

/// Top-two selection over `scores` with lowest-index tie-breaking.
pub fn top_two(scores: &[f64]) -> Result<(usize, usize)> {
    if scores.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "a decision needs at least two classes, got {}",
            scores.len()
        )));
    }
    let k_hat = crate::pair::argmin(scores);
    let mut k_circ = usize::MAX;
    for (k, &s) in scores.iter().enumerate() {
        if k != k_hat && (k_circ == usize::MAX || s < scores[k_circ]) {
            k_circ = k;
        }
    }
    Ok((k_hat, k_circ))
}

pub fn decide(scores: &[f64], gamma: f64, beta_t: f64) -> Result<Decision> {
    let (k_hat, k_circ) = top_two(scores)?;
    let gap = (scores[k_hat] - scores[k_circ]).abs();
    Ok(Decision {
        k_hat,
        k_circ,
        gap,
        fires: gap < 2.0 * gamma * beta_t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    /// Fraction of the horizon.
    Fraction(f64),
    Count(usize),
}

impl Budget {
    pub fn resolve(&self, horizon: usize) -> usize {
        match *self {
            Budget::Fraction(f) => (f * horizon as f64).floor() as usize,
            Budget::Count(n) => n,
        }
    }
}

/// How parameters evolve between rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PoolMode {
    /// Every trained iterate is kept; inference uses a uniform draw from them.
    ExactPool,
    /// Inference uses the latest trained iterate.
    #[default]
    MiniBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub horizon: usize,
    pub num_classes: usize,
    pub gamma: f64,
    pub delta: f64,
    pub s_norm: f64,
    pub budget: Budget,
    pub pool_mode: PoolMode,
}

impl StreamConfig {
    /// `γ = 6`, `δ = 0.1`, `S = 1`, budget `0.3 T`.
    pub fn new(horizon: usize, num_classes: usize) -> Self {
        Self {
            horizon,
            num_classes,
            gamma: 6.0,
            delta: 0.1,
            s_norm: 1.0,
            budget: Budget::Fraction(0.3),
            pool_mode: PoolMode::MiniBatch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(
                "stream decisions need at least two classes".into(),
            ));
        }
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be > 1, got {}",
                self.gamma
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.s_norm.is_finite() && self.s_norm > 0.0) {
            return Err(Error::InvalidConfig(
                "norm parameter S must be positive".into(),
            ));
        }
        if let Budget::Fraction(f) = self.budget {
            if !(f.is_finite() && f >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "budget fraction {f} is invalid"
                )));
            }
        }
        Ok(())
    }

    pub fn budget_count(&self) -> usize {
        self.budget.resolve(self.horizon)
    }

    pub fn beta(&self, t: usize) -> f64 {
        beta(t, self.num_classes, self.s_norm, self.horizon, self.delta)
    }
}

/// Inputs to a query rule for one round.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub t: usize,
    pub horizon: usize,
    pub budget: usize,
    pub scores: &'a [f64],
    pub decision: &'a Decision,
}

/// Decides whether to ask for the label of the current point.
pub trait QueryRule {
    fn name(&self) -> &str;
    fn wants_label(&mut self, ctx: &RoundContext<'_>, rng: &mut dyn rand::RngCore) -> bool;
}

/// The `I_t` rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct GapThresholdRule;

impl QueryRule for GapThresholdRule {
    fn name(&self) -> &str {
        "neuronal-stream"
    }

    fn wants_label(&mut self, ctx: &RoundContext<'_>, _rng: &mut dyn rand::RngCore) -> bool {
        ctx.decision.fires
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    True,
    Pseudo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub t: usize,
    pub scores: Vec<f64>,
    pub k_hat: usize,
    pub k_circ: usize,
    pub beta_t: f64,
    /// Whether the query rule fired.
    pub fired: bool,
    pub queried: bool,
    /// The rule fired but the budget was already spent.
    pub suppressed: bool,
    pub label_used: LabelSource,
    pub regret_inc: u8,
    /// Index of the parameter snapshot used for the next round (exact-pool mode).
    pub drawn_snapshot: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub round: usize,
    pub labels: usize,
    pub accuracy: f64,
}

/// Optional held-out evaluation during a run.
#[derive(Debug, Clone, Copy)]
pub struct Evaluation<'a> {
    pub data: &'a Dataset,
    /// Evaluate every this many rounds (and after the last one).
    pub every: usize,
}

#[derive(Debug, Clone)]
pub struct StreamOutcome {
    pub rounds: Vec<RoundLog>,
    pub queries: usize,
    pub budget: usize,
    /// Cumulative misclassifications after each round.
    pub regret_curve: Vec<u32>,
    pub checkpoints: Vec<Checkpoint>,
    /// Predictor used for inference at the end of the run.
    pub predictor: PredictorPair,
    pub learner: OnlineLearner,
}

impl StreamOutcome {
    pub fn cumulative_regret(&self) -> u32 {
        self.regret_curve.last().copied().unwrap_or(0)
    }
}

pub fn run_stream(
    config: &StreamConfig,
    data: &Dataset,
    learner: OnlineLearner,
    seed: u64,
) -> Result<StreamOutcome> {
    run_stream_with(
        config,
        data,
        learner,
        &mut GapThresholdRule,
        &LossKind::ZeroOne,
        None,
        seed,
    )
}

/// Generic stream loop; `rule` decides queries, everything else is shared.
pub fn run_stream_with(
    config: &StreamConfig,
    data: &Dataset,
    mut learner: OnlineLearner,
    rule: &mut dyn QueryRule,
    loss: &LossKind,
    eval: Option<Evaluation<'_>>,
    seed: u64,
) -> Result<StreamOutcome> {
    config.validate()?;
    if data.len() < config.horizon {
        return Err(Error::Data(format!(
            "stream needs {} rounds but the data has {} rows",
            config.horizon,
            data.len()
        )));
    }
    if data.num_classes() != config.num_classes
        || learner.pair().num_classes() != config.num_classes
    {
        return Err(Error::shape(
            "number of classes",
            config.num_classes,
            data.num_classes(),
        ));
    }
    data.require_normalized()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = config.budget_count();
    let mut snapshots: Vec<Arc<PredictorPair>> = Vec::new();
    let mut inference: Option<Arc<PredictorPair>> = None;
    if config.pool_mode == PoolMode::ExactPool {
        let first = Arc::new(learner.pair().clone());
        snapshots.push(first.clone());
        inference = Some(first);
    }

    let mut rounds = Vec::with_capacity(config.horizon);
    let mut regret_curve = Vec::with_capacity(config.horizon);
    let mut checkpoints = Vec::new();
    let mut queries = 0usize;
    let mut regret = 0u32;

    for t in 1..=config.horizon {
        let x = data.x(t - 1);
        let y = data.y(t - 1);
        let scores = match &inference {
            Some(p) => p.score(x)?,
            None => learner.pair().score(x)?,
        };
        let beta_t = config.beta(t);
        let decision = decide(&scores, config.gamma, beta_t)?;
        let ctx = RoundContext {
            t,
            horizon: config.horizon,
            budget,
            scores: &scores,
            decision: &decision,
        };
        let fired = rule.wants_label(&ctx, &mut rng);
        let queried = fired && queries < budget;
        let (label, source) = if queried {
            queries += 1;
            (y, LabelSource::True)
        } else {
            (decision.k_hat, LabelSource::Pseudo)
        };
        let u = make_loss_vector(label, config.num_classes, loss)?;
        learner
            .observe(x, &u, &mut rng)
            .map_err(|e| annotate_round(e, t))?;

        let mut drawn = None;
        if config.pool_mode == PoolMode::ExactPool {
            snapshots.push(Arc::new(learner.pair().clone()));
            let idx = rng.random_range(0..snapshots.len());
            inference = Some(snapshots[idx].clone());
            drawn = Some(idx);
        }

        let inc = u8::from(decision.k_hat != y);
        regret += u32::from(inc);
        regret_curve.push(regret);
        rounds.push(RoundLog {
            t,
            scores,
            k_hat: decision.k_hat,
            k_circ: decision.k_circ,
            beta_t,
            fired,
            queried,
            suppressed: fired && !queried,
            label_used: source,
            regret_inc: inc,
            drawn_snapshot: drawn,
        });

        if let Some(ev) = eval {
            let every = ev.every.max(1);
            if t % every == 0 || t == config.horizon {
                let pair = inference.as_deref().unwrap_or(learner.pair());
                checkpoints.push(Checkpoint {
                    round: t,
                    labels: queries,
                    accuracy: accuracy(pair, ev.data)?,
                });
            }
        }
    }

    let predictor = match inference {
        Some(p) => (*p).clone(),
        None => learner.pair().clone(),
    };
    Ok(StreamOutcome {
        rounds,
        queries,
        budget,
        regret_curve,
        checkpoints,
        predictor,
        learner,
    })
}

fn annotate_round(e: Error, t: usize) -> Error {
    match e {
        Error::Divergence { loss, .. } => Error::Divergence { epoch: t, loss },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn beta_hand_values() {
        assert_relative_eq!(
            beta(1, 4, 1.0, 1, 0.1),
            2.0 + (2.0 * 30f64.ln()).sqrt(),
            epsilon = 1e-12
        );
        assert_relative_eq!(beta(1, 4, 1.0, 1, 0.1), 4.608140096567727, epsilon = 1e-12);
        assert_relative_eq!(
            beta(10_000, 2, 1.0, 10_000, 0.1),
            0.06436471571205046,
            epsilon = 1e-12
        );
    }

    #[test]
    fn decide_examples() {
        let d = decide(&[0.2, 0.25, 0.9], 1.0, 0.05).unwrap();
        assert_eq!((d.k_hat, d.k_circ, d.fires), (0, 1, true));
        // A gap of exactly the threshold does not fire. 0.3 - 0.1 is not exactly
        // 0.2 in binary, so the boundary is checked with representable values.
        let d = decide(&[0.1, 0.3], 1.0, 0.1).unwrap();
        assert_eq!(d.gap, 0.19999999999999998);
        let d = decide(&[0.0, 0.5], 1.0, 0.25).unwrap();
        assert!(!d.fires);
        let d = decide(&[0.25, 0.75], 2.0, 0.125).unwrap();
        assert!(!d.fires);
        let d = decide(&[0.0, 1.0], 1.0, 2.5).unwrap();
        assert!(d.fires);
        assert!(decide(&[0.3], 1.0, 1.0).is_err());
    }

    #[test]
    fn ties_break_by_lowest_index() {
        let d = decide(&[0.4, 0.1, 0.1, 0.1], 1.0, 0.0).unwrap();
        assert_eq!((d.k_hat, d.k_circ), (1, 2));
        assert!(!d.fires);
    }

    #[test]
    fn budget_resolution() {
        assert_eq!(Budget::Fraction(0.3).resolve(10_000), 3000);
        assert_eq!(Budget::Count(7).resolve(10_000), 7);
    }

    #[test]
    fn config_validation() {
        let mut c = StreamConfig::new(100, 3);
        assert!(c.validate().is_ok());
        c.gamma = 1.0;
        assert!(c.validate().is_err());
        let mut c = StreamConfig::new(100, 3);
        c.delta = 1.0;
        assert!(c.validate().is_err());
        assert!(StreamConfig::new(100, 1).validate().is_err());
    }
}
