use std::fs;
use std::path::{Path, PathBuf};

use mad_cli::{main_with, EXIT_CONFIG, EXIT_DATASET, EXIT_MISMATCH};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn mad(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["mad"];
    argv.extend_from_slice(args);
    let code = main_with(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn run_into(dir: &Path, methods: &str) -> (i32, String, String) {
    let config = data("experiment.toml");
    let dataset = data("sample.jsonl");
    mad(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--methods",
        methods,
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn run_is_byte_identical_across_invocations() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let methods = "svr_mad,self_consistency,mad,group_debate,sid_et,s2_mad";
    assert_eq!(run_into(a.path(), methods).0, 0);
    assert_eq!(run_into(b.path(), methods).0, 0);
    assert_eq!(
        fs::read(a.path().join("report.csv")).unwrap(),
        fs::read(b.path().join("report.csv")).unwrap()
    );
    for m in methods.split(',') {
        let f = format!("traces/{m}.jsonl");
        assert_eq!(
            fs::read(a.path().join(&f)).unwrap(),
            fs::read(b.path().join(&f)).unwrap(),
            "{m}"
        );
    }
}

#[test]
fn two_methods_give_two_rows_per_question() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = run_into(dir.path(), "svr_mad,mad");
    assert_eq!(code, 0);
    assert!(stdout.starts_with("method\t"));
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let rows: Vec<&str> = report
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .collect();
    let svr: Vec<&str> = rows
        .iter()
        .filter(|r| r.starts_with("svr_mad,"))
        .map(|r| r.split(',').nth(1).unwrap())
        .collect();
    let mad_rows: Vec<&str> = rows
        .iter()
        .filter(|r| r.starts_with("mad,"))
        .map(|r| r.split(',').nth(1).unwrap())
        .collect();
    assert!(!svr.is_empty());
    assert_eq!(svr, mad_rows);
    assert_eq!(rows.len(), 2 * svr.len());
    assert_eq!(report.lines().filter(|l| l.starts_with('#')).count(), 2);
}

#[test]
fn missing_dataset_is_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = mad(&[
        "run",
        "--dataset",
        "/nonexistent/questions.jsonl",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_DATASET, "{err}");
}

#[test]
fn replay_of_fresh_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_into(dir.path(), "svr_mad,sid_et,s2_mad").0, 0);
    let traces = dir.path().join("traces");
    let (code, stdout, err) = mad(&["replay", traces.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("svr_mad"));
}

#[test]
fn flipped_retained_bit_is_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_into(dir.path(), "svr_mad").0, 0);
    let path = dir.path().join("traces/svr_mad.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let flipped = if text.contains("\"retained\":true") {
        text.replacen("\"retained\":true", "\"retained\":false", 1)
    } else {
        text.replacen("\"retained\":false", "\"retained\":true", 1)
    };
    assert_ne!(flipped, text);
    fs::write(&path, flipped).unwrap();
    let (code, _, err) = mad(&["replay", dir.path().join("traces").to_str().unwrap()]);
    assert_eq!(code, EXIT_MISMATCH);
    assert!(err.contains("mismatch"), "{err}");
}

#[test]
fn tampered_report_is_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_into(dir.path(), "self_consistency").0, 0);
    let path = dir.path().join("report.csv");
    let text = fs::read_to_string(&path).unwrap();
    let tampered = if text.contains(",true\n") {
        text.replacen(",true\n", ",false\n", 1)
    } else {
        text.replacen(",false\n", ",true\n", 1)
    };
    fs::write(&path, tampered).unwrap();
    let (code, _, _) = mad(&["replay", dir.path().join("traces").to_str().unwrap()]);
    assert_eq!(code, EXIT_MISMATCH);
}

#[test]
fn empty_trace_dir_is_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = mad(&["replay", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_DATASET);
}

#[test]
fn tune_sid_prints_every_skip_rate() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_into(dir.path(), "svr_mad").0, 0);
    let config = data("experiment.toml");
    let dataset = data("sample.jsonl");
    let reference = dir.path().join("report.csv");
    let (code, stdout, err) = mad(&[
        "tune-sid",
        "--config",
        config.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--reference",
        reference.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let rates: Vec<&str> = stdout
        .lines()
        .skip(1)
        .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit()))
        .collect();
    assert_eq!(rates.len(), 9);
    assert!(stdout.contains("selected skip rate:"));

    let (code, _, _) = mad(&[
        "tune-sid",
        "--dataset",
        dataset.to_str().unwrap(),
        "--reference",
        "/nonexistent/report.csv",
    ]);
    assert_eq!(code, EXIT_CONFIG);
}

fn sweep(dir: &Path, extra: &[&str]) -> (i32, String, String) {
    let config = data("experiment.toml");
    let dataset = data("sample.jsonl");
    let mut args = vec![
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let owned: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    let refs: Vec<&str> = owned.iter().map(String::as_str).collect();
    mad(&refs)
}

#[test]
fn sweep_has_one_row_per_threshold_and_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let extra = ["--variants", "svr,conf", "--thresholds=-0.5,0.0,0.5"];
    let (code, first, err) = sweep(a.path(), &extra);
    assert_eq!(code, 0, "{err}");
    let (_, second, _) = sweep(b.path(), &extra);
    assert_eq!(first, second);
    assert_eq!(first.lines().filter(|l| l.starts_with("svr\t")).count(), 3);
    assert_eq!(first.lines().filter(|l| l.starts_with("conf\t")).count(), 3);
    assert_eq!(
        fs::read_to_string(a.path().join("sweep.tsv")).unwrap(),
        first
    );
}

#[test]
fn empty_variant_list_is_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = sweep(dir.path(), &["--variants="]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn unknown_config_field_is_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "[experiment]\nn_agents = 6\nbogus = 1\n").unwrap();
    let (code, _, err) = mad(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("bogus"), "{err}");
}

#[test]
fn invalid_arguments_are_exit_1_and_help_is_0() {
    assert_eq!(mad(&["frobnicate"]).0, EXIT_CONFIG);
    let (code, stdout, _) = mad(&["--help"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("replay"));
}

#[test]
fn analyze_writes_strata() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = data("sample.jsonl");
    let (code, stdout, err) = mad(&[
        "analyze",
        "--dataset",
        dataset.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.starts_with("bucket\t"));
    assert!(dir.path().join("strata.tsv").is_file());
}
