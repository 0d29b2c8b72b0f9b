use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::Algorithm;
use super::run::RunRecord;
use crate::error::{Error, Result};

/// Mean and spread over seeds.
///
/// `std` is the population standard deviation (divide by `n`), so a single
/// run has `std = 0`; `sample_std` divides by `n - 1` and is `0` for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub sample_std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                sample_std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        Self {
            mean,
            std: (ss / n as f64).sqrt(),
            sample_std: if n > 1 {
                (ss / (n - 1) as f64).sqrt()
            } else {
                0.0
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub round: usize,
    pub regret: Stat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelPoint {
    pub round: usize,
    pub labels: Stat,
    pub accuracy: Stat,
}

/// Aggregate over the seeds of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub algorithm: Algorithm,
    /// Seeds in ascending order.
    pub seeds: Vec<u64>,
    pub test_accuracy: Stat,
    pub queries: Stat,
    pub cumulative_regret: Stat,
    /// Over the rounds every seed completed.
    pub regret_vs_round: Vec<RegretPoint>,
    /// One point per checkpoint shared by every seed.
    pub accuracy_vs_labels: Vec<LabelPoint>,
}

/// Aggregates runs of a single configuration. Runs are ordered by seed first
/// so the result does not depend on the order they are passed in.
pub fn metrics_summary(records: &[RunRecord]) -> Result<Summary> {
    let first = records
        .first()
        .ok_or_else(|| Error::Data("cannot summarise zero records".into()))?;
    if let Some(other) = records.iter().find(|r| r.config_hash != first.config_hash) {
        return Err(Error::InvalidConfig(format!(
            "refusing to aggregate mixed configurations {} and {}",
            &first.config_hash[..12.min(first.config_hash.len())],
            &other.config_hash[..12.min(other.config_hash.len())]
        )));
    }
    let mut runs: Vec<&RunRecord> = records.iter().collect();
    runs.sort_by_key(|r| r.seed);
    if runs.windows(2).any(|w| w[0].seed == w[1].seed) {
        return Err(Error::Data("duplicate seed among records".into()));
    }

    let stat =
        |f: &dyn Fn(&RunRecord) -> f64| Stat::of(&runs.iter().map(|r| f(r)).collect::<Vec<_>>());
    let rounds = runs
        .iter()
        .map(|r| r.metrics.regret_curve.len())
        .min()
        .unwrap_or(0);
    let regret_vs_round = (0..rounds)
        .map(|i| RegretPoint {
            round: i + 1,
            regret: stat(&|r| f64::from(r.metrics.regret_curve[i])),
        })
        .collect();
    let checkpoints = runs
        .iter()
        .map(|r| r.metrics.checkpoints.len())
        .min()
        .unwrap_or(0);
    let accuracy_vs_labels = (0..checkpoints)
        .map(|i| LabelPoint {
            round: runs[0].metrics.checkpoints[i].round,
            labels: stat(&|r| r.metrics.checkpoints[i].labels as f64),
            accuracy: stat(&|r| r.metrics.checkpoints[i].accuracy),
        })
        .collect();

    Ok(Summary {
        config_hash: first.config_hash.clone(),
        algorithm: first.algorithm,
        seeds: runs.iter().map(|r| r.seed).collect(),
        test_accuracy: stat(&|r| r.metrics.test_accuracy),
        queries: stat(&|r| r.metrics.queries as f64),
        cumulative_regret: stat(&|r| f64::from(r.metrics.cumulative_regret)),
        regret_vs_round,
        accuracy_vs_labels,
    })
}

/// Groups runs by config hash (first-seen order) and summarises each group.
pub fn summarise_groups(records: &[RunRecord]) -> Result<Vec<Summary>> {
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.config_hash.as_str()) {
            order.push(&r.config_hash);
        }
    }
    order
        .into_iter()
        .map(|h| {
            let group: Vec<RunRecord> = records
                .iter()
                .filter(|r| r.config_hash == h)
                .cloned()
                .collect();
            metrics_summary(&group)
        })
        .collect()
}

/// Fixed-width table, one row per summary.
pub fn render_table(summaries: &[Summary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:<12} {:>5}  {:>21}  {:>19}  {:>19}",
        "algorithm", "config", "seeds", "accuracy % (std)", "N_T (std)", "regret (std)"
    );
    let _ = writeln!(
        out,
        "std = population standard deviation over seeds; sample std is in the machine rows"
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<16} {:<12} {:>5}  {:>21}  {:>19}  {:>19}",
            s.algorithm.name(),
            &s.config_hash[..12.min(s.config_hash.len())],
            s.seeds.len(),
            format!(
                "{:.2} ({:.2})",
                100.0 * s.test_accuracy.mean,
                100.0 * s.test_accuracy.std
            ),
            format!("{:.1} ({:.1})", s.queries.mean, s.queries.std),
            format!(
                "{:.1} ({:.1})",
                s.cumulative_regret.mean, s.cumulative_regret.std
            ),
        );
    }
    out
}

/// One plotting row in long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub config_hash: String,
    pub algorithm: String,
    /// `regret-vs-round` or `accuracy-vs-labels`.
    pub series: String,
    pub x: f64,
    pub mean: f64,
    pub std: f64,
    pub sample_std: f64,
}

pub fn series_rows(summary: &Summary) -> Vec<SeriesRow> {
    let row = |series: &str, x: f64, s: Stat| SeriesRow {
        config_hash: summary.config_hash.clone(),
        algorithm: summary.algorithm.name().to_string(),
        series: series.to_string(),
        x,
        mean: s.mean,
        std: s.std,
        sample_std: s.sample_std,
    };
    let mut rows: Vec<SeriesRow> = summary
        .regret_vs_round
        .iter()
        .map(|p| row("regret-vs-round", p.round as f64, p.regret))
        .collect();
    rows.extend(
        summary
            .accuracy_vs_labels
            .iter()
            .map(|p| row("accuracy-vs-labels", p.labels.mean, p.accuracy)),
    );
    rows
}

/// Writes [`series_rows`] for every summary as CSV with a header.
pub fn write_series_csv(summaries: &[Summary], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in summaries {
        for row in series_rows(s) {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}
