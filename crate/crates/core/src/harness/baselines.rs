//! Comparison query rules for the stream loop.
//!
//! Both reuse the same learner and loop as the main algorithm and only change
//! when a label is requested. The pool-side baseline is
//! [`Selector::Uniform`](crate::pool::Selector::Uniform).

use rand::Rng;

use crate::stream::{QueryRule, RoundContext};

/// Queries each round independently with probability `budget / T`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomRule;

impl QueryRule for RandomRule {
    fn name(&self) -> &str {
        "random-stream"
    }

    fn wants_label(&mut self, ctx: &RoundContext<'_>, rng: &mut dyn rand::RngCore) -> bool {
        let p = (ctx.budget as f64 / ctx.horizon as f64).min(1.0);
        rng.random_bool(p)
    }
}

/// Queries when the top-two score gap falls below a fixed threshold.
#[derive(Debug, Clone, Copy)]
pub struct MarginRule {
    pub threshold: f64,
}

impl QueryRule for MarginRule {
    fn name(&self) -> &str {
        "margin-stream"
    }

    fn wants_label(&mut self, ctx: &RoundContext<'_>, _rng: &mut dyn rand::RngCore) -> bool {
        ctx.decision.gap < self.threshold
    }
}
