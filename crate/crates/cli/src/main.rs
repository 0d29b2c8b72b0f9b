mod args;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use neuronal::data::{self, SynthSpec};
use neuronal::harness::{
    self, Algorithm, DataSettings, DataSource, ExperimentConfig, NetSettings, NtkSettings,
    PoolSettings, Record,
};
use neuronal::pool::PoolConfig;
use neuronal::stream::StreamConfig;
use neuronal::{Error, Result};

use args::{
    Cli, Command, DataArgs, NtkArgs, PoolArgs, ReportArgs, RunArgs, StreamArgs, SynthArgs,
    SynthCmdArgs,
};

const OUTPUT_ENV: &str = "NEURONAL_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "results";
const DEFAULT_TEST_SIZE: usize = 1000;
const DEFAULT_HORIZON: usize = 10_000;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Stream(a) => run_stream(&a),
        Command::Pool(a) => run_pool(&a),
        Command::Ntk(a) => run_ntk(&a),
        Command::Synth(a) => run_synth(&a),
        Command::Report(a) => run_report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}

fn default_synth(n: usize) -> SynthSpec {
    SynthSpec::hard(10, 3, n, 0.2, 0)
}

fn base_config(algorithm: Algorithm, run: &RunArgs) -> Result<ExperimentConfig> {
    match &run.config {
        Some(path) => ExperimentConfig::from_toml_file(path),
        None => Ok(ExperimentConfig {
            algorithm,
            net: NetSettings::default(),
            stream: None,
            pool: None,
            data: DataSettings {
                source: DataSource::Synth(default_synth(0)),
                test_size: DEFAULT_TEST_SIZE,
            },
            margin_threshold: 0.0,
            seeds: vec![0],
            output: None,
            record_rounds: false,
        }),
    }
}

/// Shared tail of `stream` and `pool` flag handling. Returns whether the
/// generator row count was given explicitly.
fn apply_run(config: &mut ExperimentConfig, run: &RunArgs) -> Result<bool> {
    run.net.apply(&mut config.net);
    let n_set = apply_data(&run.data, config)?;
    if let Some(seeds) = &run.seeds {
        config.seeds = seeds.clone();
    }
    if run.record_rounds {
        config.record_rounds = true;
    }
    if run.output.is_some() {
        config.output = run.output.clone();
    }
    if config.output.is_none() {
        config.output = Some(
            std::env::var_os(OUTPUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT)),
        );
    }
    Ok(n_set || run.config.is_some())
}

fn apply_data(data: &DataArgs, config: &mut ExperimentConfig) -> Result<bool> {
    data.apply(config).map_err(Error::InvalidConfig)
}

/// Classes in the configured data; loads files to find out.
fn data_classes(config: &ExperimentConfig) -> Result<usize> {
    match &config.data.source {
        DataSource::Synth(spec) => Ok(spec.num_classes),
        DataSource::File { .. } => Ok(config.data.load()?.num_classes()),
    }
}

fn parse_algorithm(name: &Option<String>) -> Result<Option<Algorithm>> {
    name.as_deref().map(str::parse).transpose()
}

fn run_stream(a: &StreamArgs) -> Result<()> {
    let algorithm = parse_algorithm(&a.algorithm)?;
    let mut config = base_config(algorithm.unwrap_or(Algorithm::NeuronalStream), &a.run)?;
    if let Some(alg) = algorithm {
        config.algorithm = alg;
    }
    if !config.algorithm.is_stream() {
        return Err(Error::InvalidConfig(format!(
            "{} is a pool algorithm; use the pool subcommand",
            config.algorithm
        )));
    }
    let explicit_n = apply_run(&mut config, &a.run)?;
    let classes_flag = a.run.data.synth.classes.is_some();
    let from_file = a.run.config.is_some();
    let k = if from_file && !classes_flag && config.stream.is_some() {
        None
    } else {
        Some(data_classes(&config)?)
    };
    let stream = config
        .stream
        .get_or_insert_with(|| StreamConfig::new(DEFAULT_HORIZON, k.unwrap_or(3)));
    if let Some(k) = k {
        stream.num_classes = k;
    }
    if let Some(h) = a.horizon {
        stream.horizon = h;
    }
    if let Some(g) = a.gamma {
        stream.gamma = g;
    }
    if let Some(d) = a.delta {
        stream.delta = d;
    }
    if let Some(s) = a.s_norm {
        stream.s_norm = s;
    }
    if let Some(b) = a.budget() {
        stream.budget = b;
    }
    if let Some(m) = a.pool_mode {
        stream.pool_mode = m.into();
    }
    if let Some(t) = a.margin_threshold {
        config.margin_threshold = t;
    }
    let horizon = stream.horizon;
    if !explicit_n {
        if let DataSource::Synth(spec) = &mut config.data.source {
            spec.n = horizon + config.data.test_size;
        }
    }
    execute(&config, a.run.print_config)
}

fn run_pool(a: &PoolArgs) -> Result<()> {
    let algorithm = parse_algorithm(&a.algorithm)?;
    let mut config = base_config(algorithm.unwrap_or(Algorithm::NeuronalPool), &a.run)?;
    if let Some(alg) = algorithm {
        config.algorithm = alg;
    }
    if config.algorithm.is_stream() {
        return Err(Error::InvalidConfig(format!(
            "{} is a stream algorithm; use the stream subcommand",
            config.algorithm
        )));
    }
    let explicit_n = apply_run(&mut config, &a.run)?;
    let k = data_classes(&config)?;
    let settings = config
        .pool
        .get_or_insert_with(|| PoolSettings::new(PoolConfig::theorem_regime(100, 20, k, 1.0)));
    let p = &mut settings.config;
    if let Some(v) = a.rounds {
        p.rounds = v;
    }
    if let Some(v) = a.candidates {
        p.candidates = v;
    }
    if let Some(v) = a.mu {
        p.mu = v;
    }
    if let Some(v) = a.gamma {
        p.gamma = v;
    }
    if let Some(v) = a.batch_per_round {
        p.batch_per_round = v;
    }
    if let Some(v) = a.rescoring {
        p.rescoring = v.into();
    }
    if let Some(v) = a.unis_gamma {
        settings.unis_gamma = v;
    }
    if let Some(v) = a.unis_delta {
        settings.unis_delta = v;
    }
    if let Some(v) = a.s_norm {
        settings.s_norm = v;
    }
    let regime =
        a.theorem_regime || (a.run.config.is_none() && a.mu.is_none() && a.gamma.is_none());
    if regime {
        let t = PoolConfig::theorem_regime(
            settings.config.rounds,
            settings.config.candidates,
            k,
            settings.s_norm,
        );
        settings.config.mu = t.mu;
        settings.config.gamma = t.gamma;
    }
    if !explicit_n {
        if let DataSource::Synth(spec) = &mut config.data.source {
            spec.n = 2000 + config.data.test_size;
        }
    }
    execute(&config, a.run.print_config)
}

fn execute(config: &ExperimentConfig, print_only: bool) -> Result<()> {
    if print_only {
        print!("{}", config.to_toml_string()?);
        return Ok(());
    }
    let outcome = harness::run_experiment(config)?;
    print!(
        "{}",
        harness::render_table(std::slice::from_ref(&outcome.summary))
    );
    if let Some(path) = &outcome.path {
        println!("results: {}", path.display());
    }
    Ok(())
}

fn data_source(
    file: &Option<PathBuf>,
    delimiter: Option<char>,
    has_header: Option<bool>,
    synth: &SynthArgs,
    default_n: usize,
) -> Result<DataSource> {
    match file {
        Some(path) => {
            if synth.any() {
                return Err(Error::InvalidConfig(
                    "generator flags cannot be combined with --data-file".into(),
                ));
            }
            Ok(DataSource::File {
                path: path.clone(),
                delimiter: delimiter.unwrap_or(','),
                has_header,
            })
        }
        None => {
            let mut spec = default_synth(default_n);
            synth.apply(&mut spec);
            Ok(DataSource::Synth(spec))
        }
    }
}

fn run_ntk(a: &NtkArgs) -> Result<()> {
    let settings = NtkSettings {
        source: data_source(&a.data_file, a.delimiter, a.has_header, &a.synth, a.points)?,
        points: a.points,
        depth: a.depth,
    };
    let record = harness::ntk_report(&settings)?;
    let line = serde_json::to_string(&record)?;
    println!("{line}");
    if let Some(path) = &a.out {
        write_creating_parent(path, format!("{line}\n").as_bytes())?;
    }
    Ok(())
}

fn run_synth(a: &SynthCmdArgs) -> Result<()> {
    let mut spec = default_synth(1000);
    a.synth.apply(&mut spec);
    let generated = data::synth(&spec)?;
    match &a.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let mut out = BufWriter::new(File::create(path)?);
            data::write_delimited(&generated.dataset, &mut out)?;
            out.flush()?;
        }
        None => {
            let mut out = BufWriter::new(io::stdout().lock());
            data::write_delimited(&generated.dataset, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn write_creating_parent(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn results_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)?
                .map(|e| e.map(|e| e.path()))
                .collect::<io::Result<_>>()?;
            found.retain(|p| p.extension().is_some_and(|x| x == "jsonl"));
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

fn run_report(a: &ReportArgs) -> Result<()> {
    let mut runs = Vec::new();
    for file in results_files(&a.inputs)? {
        for record in harness::read_records(&file)? {
            if let Record::Run(r) = record {
                runs.push(*r);
            }
        }
    }
    if runs.is_empty() {
        return Err(Error::Data("no run records found".into()));
    }
    let summaries = harness::summarise_groups(&runs)?;
    if a.json {
        for s in &summaries {
            println!("{}", serde_json::to_string(s)?);
        }
    } else {
        print!("{}", harness::render_table(&summaries));
    }
    if let Some(path) = &a.series {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        harness::write_series_csv(&summaries, BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}
