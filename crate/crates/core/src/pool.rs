//! Pool-based selection with inverse gap weighting.
//!
//! Every round draws `B` unlabeled candidates, scores them with `f1 + f2`, and
//! turns each candidate's top-two score gap `w_i` into a sampling probability:
//!
//! ```text
//! p_i = w_î / (μ w_î + γ (w_i - w_î))   for i ≠ î,     p_î = 1 - Σ_{i≠î} p_i
//! ```
//!
//! where `î` has the smallest gap. Small gaps mean high uncertainty, so the
//! most ambiguous candidate gets the largest share and the rest decay with
//! their excess gap.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{make_loss_vector, Dataset, LossKind};
use crate::error::{Error, Result};
use crate::pair::{accuracy, OnlineLearner, PredictorPair};
use crate::stream::{decide, top_two, Checkpoint, Evaluation, StreamConfig};

/// Whether candidates are re-scored between consecutive selections of a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Rescoring {
    #[default]
    EachSelection,
    OncePerRound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    /// Number of query rounds `Q`.
    pub rounds: usize,
    /// Candidates per round `B`.
    pub candidates: usize,
    pub mu: f64,
    pub gamma: f64,
    pub batch_per_round: usize,
    pub rescoring: Rescoring,
}

impl PoolConfig {
    pub fn new(rounds: usize, candidates: usize, mu: f64, gamma: f64) -> Self {
        Self {
            rounds,
            candidates,
            mu,
            gamma,
            batch_per_round: 1,
            rescoring: Rescoring::EachSelection,
        }
    }

    /// `μ = Q`, `γ = sqrt(Q / (K S²))`.
    pub fn theorem_regime(
        rounds: usize,
        candidates: usize,
        num_classes: usize,
        s_norm: f64,
    ) -> Self {
        let q = rounds as f64;
        Self::new(
            rounds,
            candidates,
            q,
            (q / (num_classes as f64 * s_norm * s_norm)).sqrt(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidConfig(
                "pool rounds must be at least 1".into(),
            ));
        }
        if self.candidates < 2 {
            return Err(Error::InvalidConfig(
                "pool rounds need at least two candidates".into(),
            ));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) || !(self.gamma.is_finite() && self.gamma > 0.0)
        {
            return Err(Error::InvalidConfig("mu and gamma must be positive".into()));
        }
        if self.batch_per_round == 0 || self.batch_per_round > self.candidates {
            return Err(Error::InvalidConfig(format!(
                "batch_per_round must lie in 1..={}, got {}",
                self.candidates, self.batch_per_round
            )));
        }
        Ok(())
    }

    pub fn budget(&self) -> usize {
        self.rounds * self.batch_per_round
    }
}

/// Sampling distribution over one round's candidates.
///
/// `probs` sums to one. When `μ ≥ B` every non-minimal probability is at most
/// `1/B`, so the minimal-gap candidate also has the largest probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgwDistribution {
    pub gaps: Vec<f64>,
    pub probs: Vec<f64>,
    pub i_hat: usize,
}

fn igw_others(gaps: &[f64], i_hat: usize, mu: f64, gamma: f64) -> Vec<f64> {
    let w_min = gaps[i_hat];
    gaps.iter()
        .enumerate()
        .map(|(i, &w)| {
            if i == i_hat {
                0.0
            } else if w == w_min {
                // Limit of the formula as the excess gap vanishes.
                1.0 / mu
            } else {
                w_min / (mu * w_min + gamma * (w - w_min))
            }
        })
        .collect()
}

pub fn igw_distribution(gaps: &[f64], mu: f64, gamma: f64) -> Result<IgwDistribution> {
    if gaps.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "inverse gap weighting needs at least two candidates, got {}",
            gaps.len()
        )));
    }
    if let Some(w) = gaps.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidConfig(format!(
            "gaps must be finite and nonnegative, got {w}"
        )));
    }
    if !(mu.is_finite() && mu > 0.0 && gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidConfig("mu and gamma must be positive".into()));
    }
    let i_hat = crate::pair::argmin(gaps);
    let mut probs = igw_others(gaps, i_hat, mu, gamma);
    let others: f64 = probs.iter().sum();
    if others > 1.0 {
        return Err(Error::Parameterization {
            excess: others,
            min_mu: minimal_mu(gaps, i_hat, gamma),
            fallback: gaps.len(),
        });
    }
    probs[i_hat] = 1.0 - others;
    Ok(IgwDistribution {
        gaps: gaps.to_vec(),
        probs,
        i_hat,
    })
}

/// Smallest `μ` for which the non-minimal probabilities sum to at most one.
fn minimal_mu(gaps: &[f64], i_hat: usize, gamma: f64) -> f64 {
    let total = |mu: f64| igw_others(gaps, i_hat, mu, gamma).iter().sum::<f64>();
    // At μ = B - 1 every term is at most 1/(B-1).
    let mut hi = (gaps.len() - 1) as f64;
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 || total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

impl IgwDistribution {
    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding left a sliver above the last cumulative sum.
        self.probs
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(self.i_hat)
    }
}

/// How a round picks among its candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selector {
    InverseGap,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRoundLog {
    pub round: usize,
    /// Row of the pool dataset that was queried.
    pub selected: usize,
    pub k_hat: usize,
    pub label: usize,
    pub gap: f64,
    pub probability: f64,
    pub regret_inc: u8,
}

#[derive(Debug, Clone)]
struct CandidateScore {
    k_hat: usize,
    gap: f64,
}

fn score_candidates(
    pair: &PredictorPair,
    pool: &Dataset,
    rows: &[usize],
) -> Result<Vec<CandidateScore>> {
    rows.iter()
        .map(|&r| {
            let s = pair.score(pool.x(r))?;
            let (k_hat, k_circ) = top_two(&s)?;
            Ok(CandidateScore {
                k_hat,
                gap: (s[k_hat] - s[k_circ]).abs(),
            })
        })
        .collect()
}

/// One selection: score `rows`, draw one, query its label and update.
/// Returns the position within `rows` that was chosen.
#[allow(clippy::too_many_arguments)]
pub fn pool_round<R: Rng + ?Sized>(
    learner: &mut OnlineLearner,
    pool: &Dataset,
    rows: &[usize],
    config: &PoolConfig,
    selector: Selector,
    loss: &LossKind,
    round: usize,
    rng: &mut R,
) -> Result<(usize, PoolRoundLog)> {
    let scored = score_candidates(learner.pair(), pool, rows)?;
    select_and_update(
        learner, pool, rows, &scored, config, selector, loss, round, rng,
    )
}

#[allow(clippy::too_many_arguments)]
fn select_and_update<R: Rng + ?Sized>(
    learner: &mut OnlineLearner,
    pool: &Dataset,
    rows: &[usize],
    scored: &[CandidateScore],
    config: &PoolConfig,
    selector: Selector,
    loss: &LossKind,
    round: usize,
    rng: &mut R,
) -> Result<(usize, PoolRoundLog)> {
    let (pos, probability) = if rows.len() == 1 {
        (0, 1.0)
    } else {
        match selector {
            Selector::InverseGap => {
                let gaps: Vec<f64> = scored.iter().map(|c| c.gap).collect();
                let dist = igw_distribution(&gaps, config.mu, config.gamma)?;
                let pos = dist.sample(rng);
                (pos, dist.probs[pos])
            }
            Selector::Uniform => (rng.random_range(0..rows.len()), 1.0 / rows.len() as f64),
        }
    };
    let row = rows[pos];
    let label = pool.y(row);
    let u = make_loss_vector(label, pool.num_classes(), loss)?;
    learner.observe(pool.x(row), &u, rng)?;
    let k_hat = scored[pos].k_hat;
    Ok((
        pos,
        PoolRoundLog {
            round,
            selected: row,
            k_hat,
            label,
            gap: scored[pos].gap,
            probability,
            regret_inc: u8::from(k_hat != label),
        },
    ))
}

#[derive(Debug, Clone)]
pub struct PoolOutcome {
    pub selections: Vec<PoolRoundLog>,
    pub completed_rounds: usize,
    /// Set when the pool ran out before all rounds finished.
    pub exhausted: bool,
    /// Misclassified queried points, cumulative after each query.
    pub regret_curve: Vec<u32>,
    pub checkpoints: Vec<Checkpoint>,
    pub learner: OnlineLearner,
}

impl PoolOutcome {
    pub fn queries(&self) -> usize {
        self.selections.len()
    }

    pub fn cumulative_regret(&self) -> u32 {
        self.regret_curve.last().copied().unwrap_or(0)
    }

    pub fn predictor(&self) -> &PredictorPair {
        self.learner.pair()
    }
}

pub fn run_pool(
    config: &PoolConfig,
    pool: &Dataset,
    learner: OnlineLearner,
    seed: u64,
) -> Result<PoolOutcome> {
    run_pool_with(
        config,
        pool,
        learner,
        Selector::InverseGap,
        &LossKind::ZeroOne,
        None,
        seed,
    )
}

pub fn run_pool_with(
    config: &PoolConfig,
    pool: &Dataset,
    mut learner: OnlineLearner,
    selector: Selector,
    loss: &LossKind,
    eval: Option<Evaluation<'_>>,
    seed: u64,
) -> Result<PoolOutcome> {
    config.validate()?;
    check_pool(pool, &learner)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unlabeled: Vec<usize> = (0..pool.len()).collect();
    let mut selections = Vec::with_capacity(config.budget());
    let mut regret_curve = Vec::with_capacity(config.budget());
    let mut checkpoints = Vec::new();
    let mut regret = 0u32;
    let mut completed = 0;
    let mut exhausted = false;

    for round in 1..=config.rounds {
        if unlabeled.len() < config.candidates {
            exhausted = true;
            break;
        }
        let picks = index::sample(&mut rng, unlabeled.len(), config.candidates);
        let mut rows: Vec<usize> = picks.iter().map(|p| unlabeled[p]).collect();
        let mut scored = score_candidates(learner.pair(), pool, &rows)?;
        let mut taken = HashSet::with_capacity(config.batch_per_round);
        for j in 0..config.batch_per_round {
            if j > 0 && config.rescoring == Rescoring::EachSelection {
                scored = score_candidates(learner.pair(), pool, &rows)?;
            }
            let (pos, log) = select_and_update(
                &mut learner,
                pool,
                &rows,
                &scored,
                config,
                selector,
                loss,
                round,
                &mut rng,
            )?;
            regret += u32::from(log.regret_inc);
            regret_curve.push(regret);
            taken.insert(log.selected);
            selections.push(log);
            rows.remove(pos);
            scored.remove(pos);
        }
        unlabeled.retain(|r| !taken.contains(r));
        completed = round;
        if let Some(ev) = eval {
            if round % ev.every.max(1) == 0 || round == config.rounds {
                checkpoints.push(Checkpoint {
                    round,
                    labels: selections.len(),
                    accuracy: accuracy(learner.pair(), ev.data)?,
                });
            }
        }
    }
    Ok(PoolOutcome {
        selections,
        completed_rounds: completed,
        exhausted,
        regret_curve,
        checkpoints,
        learner,
    })
}

fn check_pool(pool: &Dataset, learner: &OnlineLearner) -> Result<()> {
    if pool.num_classes() != learner.pair().num_classes() {
        return Err(Error::shape(
            "number of classes",
            learner.pair().num_classes(),
            pool.num_classes(),
        ));
    }
    if pool.num_classes() < 2 {
        return Err(Error::InvalidConfig(
            "pool selection needs at least two classes".into(),
        ));
    }
    pool.require_normalized()
}

/// Draws this many times the pool size at most before giving up.
pub const NEU_UNIS_DRAW_FACTOR: usize = 50;

/// Uniform draws from the pool fed to the stream query rule.
///
/// Each draw is scored and tested with `I_t`; a firing draw spends one unit of
/// `budget`, is labeled and trained on, and leaves the pool. Non-firing draws
/// are discarded without training. Stops when the budget is spent, the pool is
/// empty, or `NEU_UNIS_DRAW_FACTOR × |pool|` draws have been made.
pub fn neu_unis(
    stream: &StreamConfig,
    budget: usize,
    pool: &Dataset,
    mut learner: OnlineLearner,
    loss: &LossKind,
    eval: Option<Evaluation<'_>>,
    seed: u64,
) -> Result<PoolOutcome> {
    stream.validate()?;
    check_pool(pool, &learner)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unlabeled: Vec<usize> = (0..pool.len()).collect();
    let mut selections = Vec::with_capacity(budget);
    let mut regret_curve = Vec::with_capacity(budget);
    let mut checkpoints = Vec::new();
    let mut regret = 0u32;
    let max_draws = NEU_UNIS_DRAW_FACTOR * pool.len().max(1);
    let mut draws = 0usize;

    while selections.len() < budget && !unlabeled.is_empty() && draws < max_draws {
        draws += 1;
        let pos = rng.random_range(0..unlabeled.len());
        let row = unlabeled[pos];
        let scores = learner.pair().score(pool.x(row))?;
        let d = decide(&scores, stream.gamma, stream.beta(draws))?;
        if !d.fires {
            continue;
        }
        let label = pool.y(row);
        let u = make_loss_vector(label, pool.num_classes(), loss)?;
        learner.observe(pool.x(row), &u, &mut rng)?;
        unlabeled.swap_remove(pos);
        let inc = u8::from(d.k_hat != label);
        regret += u32::from(inc);
        regret_curve.push(regret);
        selections.push(PoolRoundLog {
            round: selections.len() + 1,
            selected: row,
            k_hat: d.k_hat,
            label,
            gap: d.gap,
            probability: 1.0 / (unlabeled.len() + 1) as f64,
            regret_inc: inc,
        });
        if let Some(ev) = eval {
            let n = selections.len();
            if n % ev.every.max(1) == 0 || n == budget {
                checkpoints.push(Checkpoint {
                    round: n,
                    labels: n,
                    accuracy: accuracy(learner.pair(), ev.data)?,
                });
            }
        }
    }
    let completed = selections.len();
    Ok(PoolOutcome {
        exhausted: completed < budget,
        completed_rounds: completed,
        selections,
        regret_curve,
        checkpoints,
        learner,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hand_case() {
        let d = igw_distribution(&[0.1, 0.3, 0.7], 4.0, 2.0).unwrap();
        assert_eq!(d.i_hat, 0);
        assert_relative_eq!(d.probs[0], 0.8125, epsilon = 1e-15);
        assert_relative_eq!(d.probs[1], 0.125, epsilon = 1e-15);
        assert_relative_eq!(d.probs[2], 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn equal_gaps_with_mu_b_is_uniform() {
        for w in [0.0, 0.3] {
            let d = igw_distribution(&[w; 5], 5.0, 3.0).unwrap();
            for p in &d.probs {
                assert_relative_eq!(*p, 0.2, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn zero_minimal_gap_takes_everything() {
        let d = igw_distribution(&[0.4, 0.0, 0.2], 2.0, 1.0).unwrap();
        assert_eq!(d.i_hat, 1);
        assert_eq!(d.probs, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn small_mu_is_rejected_with_guidance() {
        let err = igw_distribution(&[0.1, 0.1, 0.1, 0.1], 1.5, 1.0).unwrap_err();
        match err {
            Error::Parameterization {
                min_mu, fallback, ..
            } => {
                assert_relative_eq!(min_mu, 3.0, epsilon = 1e-9);
                assert_eq!(fallback, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
        // Just above the reported minimum is admissible.
        assert!(igw_distribution(&[0.1, 0.1, 0.1, 0.1], 3.0 + 1e-9, 1.0).is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(igw_distribution(&[0.1], 4.0, 1.0).is_err());
        assert!(igw_distribution(&[0.1, -0.2], 4.0, 1.0).is_err());
        assert!(igw_distribution(&[0.1, f64::NAN], 4.0, 1.0).is_err());
        assert!(igw_distribution(&[0.1, 0.2], 0.0, 1.0).is_err());
    }

    #[test]
    fn theorem_regime() {
        let c = PoolConfig::theorem_regime(100, 10, 4, 1.0);
        assert_eq!(c.mu, 100.0);
        assert_eq!(c.gamma, 5.0);
    }

    #[test]
    fn config_validation() {
        assert!(PoolConfig::new(10, 100, 500.0, 500.0).validate().is_ok());
        assert!(PoolConfig::new(0, 100, 500.0, 500.0).validate().is_err());
        assert!(PoolConfig::new(10, 1, 500.0, 500.0).validate().is_err());
        let mut c = PoolConfig::new(10, 4, 5.0, 5.0);
        c.batch_per_round = 5;
        assert!(c.validate().is_err());
    }
}
