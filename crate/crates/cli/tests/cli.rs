use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_neuronal"));
    c.env_remove("NEURONAL_OUTPUT_DIR");
    c
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

const SMALL_STREAM: &[&str] = &[
    "stream",
    "--horizon",
    "60",
    "--test-size",
    "40",
    "--width",
    "8",
    "--epochs",
    "2",
    "--replay",
    "4",
    "--seeds",
    "1,2",
];

fn only_jsonl(dir: &Path) -> std::path::PathBuf {
    let files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    assert_eq!(files.len(), 1, "{files:?}");
    files[0].clone()
}

#[test]
fn stream_writes_one_record_per_seed_plus_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().args(SMALL_STREAM).arg("--output").arg(dir.path()));
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("neuronal-stream"));

    let text = fs::read_to_string(only_jsonl(dir.path())).unwrap();
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["kind"], "run");
    assert_eq!(lines[1]["kind"], "run");
    assert_eq!(lines[2]["kind"], "aggregate");
    assert_eq!(lines[0]["config"]["stream"]["horizon"], 60);
    assert_eq!(lines[0]["config_hash"], lines[2]["config_hash"]);
    assert!(lines[0]["metrics"].get("wall_time").is_none());
}

#[test]
fn rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        assert!(
            run(bin().args(SMALL_STREAM).arg("--output").arg(dir.path()))
                .status
                .success()
        );
    }
    assert_eq!(
        fs::read(only_jsonl(a.path())).unwrap(),
        fs::read(only_jsonl(b.path())).unwrap()
    );
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = run(bin().args(SMALL_STREAM).env("NEURONAL_OUTPUT_DIR", &target));
    assert!(out.status.success());
    only_jsonl(&target);

    // An explicit flag wins over the variable.
    let flag = dir.path().join("from-flag");
    let out = run(bin()
        .args(SMALL_STREAM)
        .arg("--output")
        .arg(&flag)
        .env("NEURONAL_OUTPUT_DIR", dir.path().join("unused")));
    assert!(out.status.success());
    only_jsonl(&flag);
    assert!(!dir.path().join("unused").exists());
}

#[test]
fn config_file_round_trips_through_print_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(SMALL_STREAM)
        .arg("--gamma")
        .arg("3")
        .arg("--print-config"));
    assert!(out.status.success());
    let toml_path = dir.path().join("exp.toml");
    fs::write(&toml_path, &out.stdout).unwrap();

    let again = run(bin()
        .arg("stream")
        .arg("--config")
        .arg(&toml_path)
        .arg("--print-config"));
    assert!(again.status.success());
    assert_eq!(out.stdout, again.stdout);

    // Flags override the file.
    let tweaked = run(bin().arg("stream").arg("--config").arg(&toml_path).args([
        "--gamma",
        "4",
        "--print-config",
    ]));
    let text = String::from_utf8(tweaked.stdout).unwrap();
    assert!(text.contains("gamma = 4.0"), "{text}");
}

#[test]
fn validation_errors_exit_with_category_code() {
    let out = run(bin().args(SMALL_STREAM).args(["--gamma", "0.5"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));

    // Pool algorithm in a stream config file.
    let dir = tempfile::tempdir().unwrap();
    let printed = run(bin().args(["pool", "--print-config"]));
    let path = dir.path().join("pool.toml");
    fs::write(&path, printed.stdout).unwrap();
    let out = run(bin().arg("stream").arg("--config").arg(&path));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_file_is_an_io_error() {
    let out = run(bin().args(["ntk", "--data-file", "/definitely/not/here.csv"]));
    assert_eq!(out.status.code(), Some(6));
}

#[test]
fn pool_and_report() {
    let dir = tempfile::tempdir().unwrap();
    for alg in ["neuronal-pool", "random-pool", "neu-unis"] {
        let out = run(bin()
            .args([
                "pool",
                "--algorithm",
                alg,
                "--rounds",
                "6",
                "--candidates",
                "5",
            ])
            .args([
                "--n",
                "120",
                "--test-size",
                "40",
                "--width",
                "8",
                "--epochs",
                "2",
            ])
            .args(["--seeds", "3,4", "--output"])
            .arg(dir.path()));
        assert!(out.status.success(), "{alg}");
    }
    let series = dir.path().join("series.csv");
    let out = run(bin()
        .arg("report")
        .arg(dir.path())
        .arg("--series")
        .arg(&series));
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    for alg in ["neuronal-pool", "random-pool", "neu-unis"] {
        assert!(table.contains(alg), "{table}");
    }
    let csv = fs::read_to_string(series).unwrap();
    assert!(csv.starts_with("config_hash,algorithm,series,x,mean,std,sample_std"));
    assert!(csv.contains("accuracy-vs-labels"));
    assert!(csv.contains("regret-vs-round"));
}

#[test]
fn synth_then_stream_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    let out = run(bin()
        .args([
            "synth",
            "--n",
            "150",
            "--dim",
            "4",
            "--classes",
            "2",
            "--out",
        ])
        .arg(&data));
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&data).unwrap().lines().count(), 150);

    let out = run(bin()
        .args([
            "stream",
            "--horizon",
            "80",
            "--test-size",
            "50",
            "--width",
            "8",
            "--epochs",
            "1",
        ])
        .arg("--data-file")
        .arg(&data)
        .arg("--output")
        .arg(dir.path().join("res")));
    assert!(out.status.success());
}

#[test]
fn ntk_prints_a_complexity_record() {
    let out = run(bin().args(["ntk", "--points", "5", "--dim", "6", "--classes", "3"]));
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["report"]["size"], 15);
    assert_eq!(v["report"]["bound_holds"], true);
}
