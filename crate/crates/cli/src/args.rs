use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use neuronal::data::{NoiseModel, SynthSpec};
use neuronal::harness::{DataSource, ExperimentConfig, NetSettings};
use neuronal::nn::{TrainMode, TrainSpec};
use neuronal::pool::Rescoring;
use neuronal::stream::{Budget, PoolMode};

/// Neural active learning: stream and pool experiments, NTK diagnostics and
/// synthetic data.
#[derive(Debug, Parser)]
#[command(name = "neuronal", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a stream experiment (neuronal-stream, random-stream, margin-stream).
    Stream(StreamArgs),
    /// Run a pool experiment (neuronal-pool, random-pool, neu-unis).
    Pool(PoolArgs),
    /// Print the NTK complexity terms of a dataset prefix as JSON.
    Ntk(NtkArgs),
    /// Write a synthetic dataset as delimited text.
    Synth(SynthCmdArgs),
    /// Summarise results files.
    Report(ReportArgs),
}

/// Flags shared by `stream` and `pool`. Precedence is flag, then config file,
/// then built-in default. The output directory falls back to
/// `$NEURONAL_OUTPUT_DIR` and then `results`.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML file with the same layout as the persisted `config` object.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Directory for the results file.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Keep per-round logs in the records.
    #[arg(long)]
    pub record_rounds: bool,
    /// Print the resolved config as TOML and exit.
    #[arg(long)]
    pub print_config: bool,
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    ExactPool,
    MiniBatch,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ExactPool => TrainMode::ExactPool,
            ModeArg::MiniBatch => TrainMode::MiniBatch,
        }
    }
}

impl From<ModeArg> for PoolMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ExactPool => PoolMode::ExactPool,
            ModeArg::MiniBatch => PoolMode::MiniBatch,
        }
    }
}

#[derive(Debug, Args)]
pub struct NetArgs {
    /// Hidden width m of both networks.
    #[arg(long)]
    pub width: Option<usize>,
    /// Number of weight matrices L.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Past observations replayed with each new one.
    #[arg(long)]
    pub replay: Option<usize>,
    /// Learning rate for both networks.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs per update for both networks.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size for both networks.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Training mode for both networks.
    #[arg(long, value_enum)]
    pub train_mode: Option<ModeArg>,
    #[arg(long)]
    pub exploit_lr: Option<f64>,
    #[arg(long)]
    pub exploit_epochs: Option<usize>,
    #[arg(long)]
    pub exploit_batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub exploit_mode: Option<ModeArg>,
    #[arg(long)]
    pub explore_lr: Option<f64>,
    #[arg(long)]
    pub explore_epochs: Option<usize>,
    #[arg(long)]
    pub explore_batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub explore_mode: Option<ModeArg>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_train(
    spec: &mut TrainSpec,
    lr: Option<f64>,
    epochs: Option<usize>,
    batch: Option<usize>,
    mode: Option<ModeArg>,
) {
    set(&mut spec.learning_rate, lr);
    set(&mut spec.epochs, epochs);
    set(&mut spec.batch_size, batch);
    set(&mut spec.mode, mode.map(Into::into));
}

impl NetArgs {
    pub fn apply(&self, net: &mut NetSettings) {
        set(&mut net.width, self.width);
        set(&mut net.depth, self.depth);
        set(&mut net.replay, self.replay);
        for spec in [&mut net.exploit, &mut net.explore] {
            apply_train(spec, self.lr, self.epochs, self.batch_size, self.train_mode);
        }
        apply_train(
            &mut net.exploit,
            self.exploit_lr,
            self.exploit_epochs,
            self.exploit_batch_size,
            self.exploit_mode,
        );
        apply_train(
            &mut net.explore,
            self.explore_lr,
            self.explore_epochs,
            self.explore_batch_size,
            self.explore_mode,
        );
    }
}

/// Generator settings.
#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Input dimension d.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Number of classes K.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Rows to generate.
    #[arg(long)]
    pub n: Option<usize>,
    /// Hard-margin noise with this minimum Bayes gap.
    #[arg(long, conflicts_with = "alpha")]
    pub margin: Option<f64>,
    /// Tsybakov noise with this exponent.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub saturation: Option<f64>,
    #[arg(long)]
    pub data_seed: Option<u64>,
}

impl SynthArgs {
    pub fn any(&self) -> bool {
        self.dim.is_some()
            || self.classes.is_some()
            || self.n.is_some()
            || self.margin.is_some()
            || self.alpha.is_some()
            || self.spread.is_some()
            || self.saturation.is_some()
            || self.data_seed.is_some()
    }

    pub fn apply(&self, spec: &mut SynthSpec) {
        set(&mut spec.dim, self.dim);
        set(&mut spec.num_classes, self.classes);
        set(&mut spec.n, self.n);
        set(&mut spec.spread, self.spread);
        set(&mut spec.saturation, self.saturation);
        set(&mut spec.seed, self.data_seed);
        if let Some(margin) = self.margin {
            spec.noise = NoiseModel::Hard { margin };
        }
        if let Some(alpha) = self.alpha {
            spec.noise = NoiseModel::Tsybakov { alpha };
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Delimited file (features then label) instead of generated data.
    #[arg(long)]
    pub data_file: Option<PathBuf>,
    #[arg(long, requires = "data_file")]
    pub delimiter: Option<char>,
    #[arg(long, requires = "data_file")]
    pub has_header: Option<bool>,
    /// Rows held out from the end of the data for testing.
    #[arg(long)]
    pub test_size: Option<usize>,
    #[command(flatten)]
    pub synth: SynthArgs,
}

impl DataArgs {
    /// Applies the flags; returns whether the generator row count was set.
    pub fn apply(&self, config: &mut ExperimentConfig) -> Result<bool, String> {
        set(&mut config.data.test_size, self.test_size);
        if let Some(path) = &self.data_file {
            if self.synth.any() {
                return Err("generator flags cannot be combined with --data-file".into());
            }
            config.data.source = DataSource::File {
                path: path.clone(),
                delimiter: self.delimiter.unwrap_or(','),
                has_header: self.has_header,
            };
            return Ok(false);
        }
        match &mut config.data.source {
            DataSource::Synth(spec) => {
                self.synth.apply(spec);
                Ok(self.synth.n.is_some())
            }
            DataSource::File {
                delimiter,
                has_header,
                ..
            } => {
                if self.synth.any() {
                    return Err(
                        "generator flags need generated data, but the config names a file".into(),
                    );
                }
                set(delimiter, self.delimiter);
                if self.has_header.is_some() {
                    *has_header = self.has_header;
                }
                Ok(false)
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Defaults to neuronal-stream.
    #[arg(long, value_parser = ["neuronal-stream", "random-stream", "margin-stream"])]
    pub algorithm: Option<String>,
    /// Rounds T (default 10000).
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Norm parameter S.
    #[arg(long)]
    pub s_norm: Option<f64>,
    /// Label budget as a fraction of T.
    #[arg(long, conflicts_with = "budget_count")]
    pub budget: Option<f64>,
    /// Label budget as an absolute count.
    #[arg(long)]
    pub budget_count: Option<usize>,
    #[arg(long, value_enum)]
    pub pool_mode: Option<ModeArg>,
    /// Gap threshold for margin-stream.
    #[arg(long)]
    pub margin_threshold: Option<f64>,
    #[command(flatten)]
    pub run: RunArgs,
}

impl StreamArgs {
    pub fn budget(&self) -> Option<Budget> {
        self.budget
            .map(Budget::Fraction)
            .or(self.budget_count.map(Budget::Count))
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RescoringArg {
    EachSelection,
    OncePerRound,
}

impl From<RescoringArg> for Rescoring {
    fn from(r: RescoringArg) -> Self {
        match r {
            RescoringArg::EachSelection => Rescoring::EachSelection,
            RescoringArg::OncePerRound => Rescoring::OncePerRound,
        }
    }
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Defaults to neuronal-pool.
    #[arg(long, value_parser = ["neuronal-pool", "random-pool", "neu-unis"])]
    pub algorithm: Option<String>,
    /// Query rounds Q (default 100).
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Candidates per round B (default 20).
    #[arg(long)]
    pub candidates: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Set mu = Q and gamma = sqrt(Q / (K S^2)).
    #[arg(long, conflicts_with_all = ["mu", "gamma"])]
    pub theorem_regime: bool,
    #[arg(long)]
    pub batch_per_round: Option<usize>,
    #[arg(long, value_enum)]
    pub rescoring: Option<RescoringArg>,
    /// Stream-rule gamma for neu-unis.
    #[arg(long)]
    pub unis_gamma: Option<f64>,
    /// Stream-rule delta for neu-unis.
    #[arg(long)]
    pub unis_delta: Option<f64>,
    /// Norm parameter S.
    #[arg(long)]
    pub s_norm: Option<f64>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct NtkArgs {
    /// Leading rows used.
    #[arg(long, default_value_t = 8)]
    pub points: usize,
    /// Kernel depth L.
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long)]
    pub data_file: Option<PathBuf>,
    #[arg(long, requires = "data_file")]
    pub delimiter: Option<char>,
    #[arg(long, requires = "data_file")]
    pub has_header: Option<bool>,
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Also write the record to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthCmdArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Destination file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Results files, or directories searched for `*.jsonl`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Write regret-vs-round and accuracy-vs-labels rows to this CSV file.
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// Print the summaries as JSON lines instead of a table.
    #[arg(long)]
    pub json: bool,
}
