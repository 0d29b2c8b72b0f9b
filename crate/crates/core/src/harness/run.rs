use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{MarginRule, RandomRule};
use super::config::{Algorithm, ExperimentConfig};
use super::summary::{metrics_summary, Summary};
use crate::data::{Dataset, LossKind};
use crate::error::{Error, Result};
use crate::pair::{accuracy, OnlineLearner, PredictorPair};
use crate::pool::{self, PoolRoundLog, Selector};
use crate::stream::{
    self, Checkpoint, Evaluation, GapThresholdRule, QueryRule, RoundLog, StreamConfig,
};

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub test_accuracy: f64,
    /// `N_T`, labels actually requested.
    pub queries: usize,
    pub budget: usize,
    pub cumulative_regret: u32,
    /// Cumulative regret after each round (stream) or query (pool).
    pub regret_curve: Vec<u32>,
    pub checkpoints: Vec<Checkpoint>,
    pub completed_rounds: usize,
    /// Pool runs only: the pool or draw cap ran out early.
    pub exhausted: bool,
    /// Stream runs only: rounds where the rule fired after the budget was spent.
    pub suppressed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "logs", rename_all = "kebab-case")]
pub enum RoundDetail {
    Stream(Vec<RoundLog>),
    Pool(Vec<PoolRoundLog>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub metrics: RunMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<RoundDetail>,
}

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Record {
    Run(Box<RunRecord>),
    Aggregate(Summary),
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunRecord>,
    pub summary: Summary,
    /// Seconds per seed, in the order of `runs`. Kept out of the records so
    /// that reruns persist identical bytes.
    pub wall_times: Vec<f64>,
    /// Results file, when the config names an output directory.
    pub path: Option<PathBuf>,
}

/// SplitMix64 step; derives independent sub-seeds from a run seed.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    let mut z = seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const DATA_ORDER: u64 = 1;
const NET_INIT: u64 = 2;
const RUN: u64 = 3;

/// Train rows (reshuffled per seed) and the held-out tail.
pub fn split_data(config: &ExperimentConfig, data: &Dataset) -> Result<(Dataset, Dataset)> {
    let test_size = config.data.test_size;
    if test_size == 0 || test_size >= data.len() {
        return Err(Error::Data(format!(
            "test_size must lie in 1..{}, got {test_size}",
            data.len()
        )));
    }
    Ok(data.split_at(data.len() - test_size))
}

/// Runs every seed of `config` and writes the results file if an output
/// directory is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let data = config.data.load()?;
    let (train, test) = split_data(config, &data)?;
    config.net.validate(data.dim(), data.num_classes())?;
    let hash = config.hash()?;

    let results: Vec<(RunRecord, f64)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let start = Instant::now();
            let record =
                run_seed(config, &hash, &train, &test, seed).map_err(|e| Error::Seeded {
                    seed,
                    source: Box::new(e),
                })?;
            Ok((record, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    let (runs, wall_times): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let summary = metrics_summary(&runs)?;

    let path = match &config.output {
        Some(dir) => Some(write_results(
            dir,
            config,
            &hash,
            &runs,
            &summary,
            &wall_times,
        )?),
        None => None,
    };
    Ok(ExperimentOutcome {
        runs,
        summary,
        wall_times,
        path,
    })
}

pub fn run_seed(
    config: &ExperimentConfig,
    hash: &str,
    train: &Dataset,
    test: &Dataset,
    seed: u64,
) -> Result<RunRecord> {
    let train = train.shuffled(derive_seed(seed, DATA_ORDER));
    let pair = PredictorPair::init(
        train.dim(),
        config.net.width,
        config.net.depth,
        train.num_classes(),
        config.net.hyper(),
        derive_seed(seed, NET_INIT),
    )?;
    let learner = OnlineLearner::new(pair, config.net.replay);
    let eval = Some(Evaluation {
        data: test,
        every: config.checkpoint_every(),
    });
    let run_seed = derive_seed(seed, RUN);
    let loss = LossKind::ZeroOne;

    let (metrics, rounds) = if let Some(stream_cfg) = &config.stream {
        let mut rule: Box<dyn QueryRule> = match config.algorithm {
            Algorithm::NeuronalStream => Box::new(GapThresholdRule),
            Algorithm::RandomStream => Box::new(RandomRule),
            Algorithm::MarginStream => Box::new(MarginRule {
                threshold: config.margin_threshold,
            }),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "{other} is not a stream algorithm"
                )))
            }
        };
        let out = stream::run_stream_with(
            stream_cfg,
            &train,
            learner,
            rule.as_mut(),
            &loss,
            eval,
            run_seed,
        )?;
        let metrics = RunMetrics {
            test_accuracy: accuracy(&out.predictor, test)?,
            queries: out.queries,
            budget: out.budget,
            cumulative_regret: out.cumulative_regret(),
            regret_curve: out.regret_curve.clone(),
            checkpoints: out.checkpoints.clone(),
            completed_rounds: out.rounds.len(),
            exhausted: false,
            suppressed: out.rounds.iter().filter(|r| r.suppressed).count(),
        };
        (metrics, RoundDetail::Stream(out.rounds))
    } else {
        let settings = config
            .pool
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("missing [pool] section".into()))?;
        let pool_cfg = &settings.config;
        let out = match config.algorithm {
            Algorithm::NeuronalPool | Algorithm::RandomPool => {
                let selector = if config.algorithm == Algorithm::NeuronalPool {
                    Selector::InverseGap
                } else {
                    Selector::Uniform
                };
                pool::run_pool_with(pool_cfg, &train, learner, selector, &loss, eval, run_seed)?
            }
            Algorithm::NeuUnis => {
                let mut rule = StreamConfig::new(train.len(), train.num_classes());
                rule.gamma = settings.unis_gamma;
                rule.delta = settings.unis_delta;
                rule.s_norm = settings.s_norm;
                let eval = Some(Evaluation {
                    data: test,
                    every: (pool_cfg.budget() / 100).max(1),
                });
                pool::neu_unis(
                    &rule,
                    pool_cfg.budget(),
                    &train,
                    learner,
                    &loss,
                    eval,
                    run_seed,
                )?
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "{other} is not a pool algorithm"
                )))
            }
        };
        let metrics = RunMetrics {
            test_accuracy: accuracy(out.predictor(), test)?,
            queries: out.queries(),
            budget: pool_cfg.budget(),
            cumulative_regret: out.cumulative_regret(),
            regret_curve: out.regret_curve.clone(),
            checkpoints: out.checkpoints.clone(),
            completed_rounds: out.completed_rounds,
            exhausted: out.exhausted,
            suppressed: 0,
        };
        (metrics, RoundDetail::Pool(out.selections))
    };

    // Where results are written has no bearing on replaying them.
    let mut stored = config.clone();
    stored.output = None;
    Ok(RunRecord {
        config_hash: hash.to_string(),
        algorithm: config.algorithm,
        seed,
        config: stored,
        metrics,
        rounds: config.record_rounds.then_some(rounds),
    })
}

/// `<dir>/<algorithm>-<hash prefix>.jsonl`
pub fn results_path(dir: &Path, config: &ExperimentConfig, hash: &str) -> PathBuf {
    dir.join(format!("{}-{}.jsonl", config.algorithm, &hash[..12]))
}

fn write_results(
    dir: &Path,
    config: &ExperimentConfig,
    hash: &str,
    runs: &[RunRecord],
    summary: &Summary,
    wall_times: &[f64],
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = results_path(dir, config, hash);
    let mut out = BufWriter::new(File::create(&path)?);
    for run in runs {
        serde_json::to_writer(&mut out, &Record::Run(Box::new(run.clone())))?;
        out.write_all(b"\n")?;
    }
    serde_json::to_writer(&mut out, &Record::Aggregate(summary.clone()))?;
    out.write_all(b"\n")?;
    out.flush()?;

    let timing: Vec<_> = runs
        .iter()
        .zip(wall_times)
        .map(|(r, t)| serde_json::json!({ "seed": r.seed, "wall_time": t }))
        .collect();
    fs::write(
        path.with_extension("timing.json"),
        serde_json::to_vec_pretty(&timing)?,
    )?;
    Ok(path)
}

/// Reads every record of a results file.
pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}
