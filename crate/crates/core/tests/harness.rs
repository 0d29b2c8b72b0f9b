use std::fs;

use neuronal::data::SynthSpec;
use neuronal::harness::{
    read_records, run_experiment, Algorithm, DataSettings, DataSource, ExperimentConfig,
    NetSettings, PoolSettings, Record,
};
use neuronal::pool::PoolConfig;
use neuronal::stream::{Budget, StreamConfig};

fn config(algorithm: Algorithm) -> ExperimentConfig {
    let stream = algorithm.is_stream().then(|| StreamConfig::new(50, 3));
    let pool = (!algorithm.is_stream()).then(|| PoolSettings::new(PoolConfig::new(6, 5, 5.0, 2.0)));
    ExperimentConfig {
        algorithm,
        net: NetSettings::builder().width(8).epochs(2).replay(4).build(),
        stream,
        pool,
        data: DataSettings {
            source: DataSource::Synth(SynthSpec::hard(5, 3, 80, 0.2, 2)),
            test_size: 25,
        },
        margin_threshold: 0.0,
        seeds: vec![1, 2, 3],
        output: None,
        record_rounds: true,
    }
}

#[test]
fn reruns_persist_identical_bytes() {
    for algorithm in Algorithm::ALL {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        for dir in [&a, &b] {
            let mut cfg = config(algorithm);
            cfg.output = Some(dir.path().to_path_buf());
            paths.push(run_experiment(&cfg).unwrap().path.unwrap());
        }
        assert_eq!(paths[0].file_name(), paths[1].file_name());
        assert_eq!(
            fs::read(&paths[0]).unwrap(),
            fs::read(&paths[1]).unwrap(),
            "{algorithm}"
        );

        let records = read_records(&paths[0]).unwrap();
        assert_eq!(records.len(), 4);
        assert!(matches!(records.last(), Some(Record::Aggregate(_))));
    }
}

#[test]
fn random_stream_with_full_budget_queries_every_round() {
    let mut cfg = config(Algorithm::RandomStream);
    cfg.stream.as_mut().unwrap().budget = Budget::Fraction(1.0);
    for run in run_experiment(&cfg).unwrap().runs {
        assert_eq!(run.metrics.queries, 50);
    }
}

#[test]
fn margin_stream_with_zero_threshold_never_queries() {
    let cfg = config(Algorithm::MarginStream);
    for run in run_experiment(&cfg).unwrap().runs {
        assert_eq!(run.metrics.queries, 0);
    }
}

#[test]
fn seed_order_does_not_change_the_aggregate() {
    let cfg = config(Algorithm::NeuronalStream);
    let mut reversed = cfg.clone();
    reversed.seeds.reverse();
    assert_eq!(
        run_experiment(&cfg).unwrap().summary,
        run_experiment(&reversed).unwrap().summary
    );
}
