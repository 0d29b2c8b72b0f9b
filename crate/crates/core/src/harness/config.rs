use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, DelimitedFormat, SynthSpec};
use crate::error::{Error, Result};
use crate::nn::{NetConfig, TrainSpec};
use crate::pair::PairHyper;
use crate::pool::PoolConfig;
use crate::stream::StreamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    NeuronalStream,
    NeuronalPool,
    NeuUnis,
    RandomStream,
    RandomPool,
    MarginStream,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::NeuronalStream,
        Algorithm::NeuronalPool,
        Algorithm::NeuUnis,
        Algorithm::RandomStream,
        Algorithm::RandomPool,
        Algorithm::MarginStream,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::NeuronalStream => "neuronal-stream",
            Algorithm::NeuronalPool => "neuronal-pool",
            Algorithm::NeuUnis => "neu-unis",
            Algorithm::RandomStream => "random-stream",
            Algorithm::RandomPool => "random-pool",
            Algorithm::MarginStream => "margin-stream",
        }
    }

    pub fn is_stream(self) -> bool {
        matches!(
            self,
            Algorithm::NeuronalStream | Algorithm::RandomStream | Algorithm::MarginStream
        )
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm '{s}'")))
    }
}

/// Width, depth and training regime shared by `f1` and `f2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSettings {
    pub width: usize,
    pub depth: usize,
    pub exploit: TrainSpec,
    pub explore: TrainSpec,
    /// Past observations replayed with the newest one at each update.
    pub replay: usize,
}

impl Default for NetSettings {
    fn default() -> Self {
        let hyper = PairHyper::default();
        Self {
            width: 100,
            depth: 2,
            exploit: hyper.exploit,
            explore: hyper.explore,
            replay: 64,
        }
    }
}

impl NetSettings {
    pub fn hyper(&self) -> PairHyper {
        PairHyper {
            exploit: self.exploit,
            explore: self.explore,
        }
    }

    pub fn validate(&self, input_dim: usize, num_classes: usize) -> Result<()> {
        NetConfig::new(input_dim, self.width, self.depth, num_classes)?;
        self.exploit.validate()?;
        self.explore.validate()?;
        if self.replay == 0 {
            return Err(Error::InvalidConfig("replay must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Synth(SynthSpec),
    File {
        path: PathBuf,
        #[serde(default = "default_delimiter")]
        delimiter: char,
        #[serde(default)]
        has_header: Option<bool>,
    },
}

fn default_delimiter() -> char {
    ','
}

/// Where the rows come from and how many are held out.
///
/// The last `test_size` rows form the test set; the rest feed the stream or
/// the pool, reshuffled per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSettings {
    pub source: DataSource,
    pub test_size: usize,
}

impl DataSettings {
    pub fn load(&self) -> Result<data::Dataset> {
        match &self.source {
            DataSource::Synth(spec) => Ok(data::synth(spec)?.dataset),
            DataSource::File {
                path,
                delimiter,
                has_header,
            } => {
                let delimiter = u8::try_from(*delimiter).map_err(|_| {
                    Error::InvalidConfig(format!("delimiter '{delimiter}' is not a single byte"))
                })?;
                data::load_normalize(
                    path,
                    &DelimitedFormat {
                        delimiter,
                        has_header: *has_header,
                    },
                )
            }
        }
    }
}

/// Extra knobs for the pool family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolSettings {
    #[serde(flatten)]
    pub config: PoolConfig,
    /// Stream-rule parameters used by Neu-UniS.
    #[serde(default = "default_unis_gamma")]
    pub unis_gamma: f64,
    #[serde(default = "default_unis_delta")]
    pub unis_delta: f64,
    #[serde(default = "default_s_norm")]
    pub s_norm: f64,
}

fn default_unis_gamma() -> f64 {
    6.0
}

fn default_unis_delta() -> f64 {
    0.1
}

fn default_s_norm() -> f64 {
    1.0
}

impl PoolSettings {
    pub fn new(config: PoolConfig) -> Self {
        Self {
            config,
            unis_gamma: default_unis_gamma(),
            unis_delta: default_unis_delta(),
            s_norm: default_s_norm(),
        }
    }
}

/// Everything needed to replay an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub net: NetSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<StreamConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<PoolSettings>,
    pub data: DataSettings,
    /// Query threshold on the top-two score gap for `margin-stream`.
    #[serde(default)]
    pub margin_threshold: f64,
    pub seeds: Vec<u64>,
    /// Directory for result files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Keep per-round logs in the persisted records.
    #[serde(default)]
    pub record_rounds: bool,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Number of classes implied by the run settings.
    pub fn num_classes(&self) -> Option<usize> {
        match (&self.stream, &self.data.source) {
            (Some(s), _) => Some(s.num_classes),
            (None, DataSource::Synth(spec)) => Some(spec.num_classes),
            _ => None,
        }
    }

    /// Structural checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        match (self.algorithm.is_stream(), &self.stream, &self.pool) {
            (true, Some(s), None) => s.validate()?,
            (false, None, Some(p)) => {
                p.config.validate()?;
                if self.algorithm == Algorithm::NeuUnis {
                    if !(p.unis_gamma.is_finite() && p.unis_gamma > 1.0) {
                        return Err(Error::InvalidConfig("unis_gamma must be > 1".into()));
                    }
                    if !(p.unis_delta > 0.0 && p.unis_delta < 1.0) {
                        return Err(Error::InvalidConfig("unis_delta must lie in (0, 1)".into()));
                    }
                }
            }
            (true, _, _) => {
                return Err(Error::InvalidConfig(format!(
                    "{} needs a [stream] section and no [pool] section",
                    self.algorithm
                )))
            }
            (false, _, _) => {
                return Err(Error::InvalidConfig(format!(
                    "{} needs a [pool] section and no [stream] section",
                    self.algorithm
                )))
            }
        }
        if !(self.margin_threshold.is_finite() && self.margin_threshold >= 0.0) {
            return Err(Error::InvalidConfig(
                "margin_threshold must be nonnegative".into(),
            ));
        }
        if let DataSource::Synth(spec) = &self.data.source {
            spec.validate()?;
            if let Some(s) = &self.stream {
                if s.num_classes != spec.num_classes {
                    return Err(Error::InvalidConfig(format!(
                        "stream expects {} classes but the generator has {}",
                        s.num_classes, spec.num_classes
                    )));
                }
            }
        }
        if let Some(k) = self.num_classes() {
            if let DataSource::Synth(spec) = &self.data.source {
                self.net.validate(spec.dim, k)?;
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the config with seeds and output location removed, so
    /// runs that differ only by seed share a hash.
    pub fn hash(&self) -> Result<String> {
        let mut canon = self.clone();
        canon.seeds.clear();
        canon.output = None;
        let bytes = serde_json::to_vec(&canon)?;
        let digest = Sha256::digest(&bytes);
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Accuracy checkpoints fall every `max(1, T / 100)` rounds.
    pub fn checkpoint_every(&self) -> usize {
        let horizon = match (&self.stream, &self.pool) {
            (Some(s), _) => s.horizon,
            (_, Some(p)) => p.config.rounds,
            _ => 0,
        };
        (horizon / 100).max(1)
    }
}

/// Small helper for tests and snippets that only tweak a few fields.
#[derive(Debug, Clone, Copy, Default)]
pub struct NetSettingsBuilder(NetSettings);

impl NetSettingsBuilder {
    pub fn width(mut self, m: usize) -> Self {
        self.0.width = m;
        self
    }

    pub fn depth(mut self, l: usize) -> Self {
        self.0.depth = l;
        self
    }

    pub fn epochs(mut self, e: usize) -> Self {
        self.0.exploit.epochs = e;
        self.0.explore.epochs = e;
        self
    }

    pub fn learning_rate(mut self, lr: f64) -> Self {
        self.0.exploit.learning_rate = lr;
        self.0.explore.learning_rate = lr;
        self
    }

    pub fn batch_size(mut self, b: usize) -> Self {
        self.0.exploit.batch_size = b;
        self.0.explore.batch_size = b;
        self
    }

    pub fn replay(mut self, r: usize) -> Self {
        self.0.replay = r;
        self
    }

    pub fn build(self) -> NetSettings {
        self.0
    }
}

impl NetSettings {
    pub fn builder() -> NetSettingsBuilder {
        NetSettingsBuilder::default()
    }
}
