use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SCENARIO: &str = r#"
seed = 7
n_commits = 20
tests_per_commit = 8
commit_spacing_hours = 192
[[injections]]
commit = 4
layers = ["PDCP"]
drop = 0.3
[[injections]]
commit = 12
layers = ["MAC", "RLC"]
drop = 0.3
"#;

fn ranperf(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ranperf"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn ok(out: &Path, args: &[&str]) -> Output {
    let o = ranperf(out, args);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

/// Runs synth through report and returns the analyze exit code.
fn full_chain(out: &Path) -> i32 {
    let scenario = out.join("scenario.toml");
    std::fs::create_dir_all(out).unwrap();
    std::fs::write(&scenario, SCENARIO).unwrap();
    let synth = out.join("synth");
    ok(out, &["synth", "--scenario", scenario.to_str().unwrap()]);
    ok(out, &["ingest", "--dataset", synth.join("dataset").to_str().unwrap()]);
    ok(out, &["categorize", "--commits", synth.join("commits.jsonl").to_str().unwrap()]);
    ok(out, &["assemble"]);
    ok(out, &["decompose"]);
    ok(out, &["train-baseline", "--seed", "7"]);
    let analyze = code(&ranperf(out, &["analyze"]));
    ok(out, &["train-risk", "--seed", "7"]);
    ok(out, &["score"]);
    ok(out, &["report"]);
    analyze
}

fn report_files(out: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    for e in std::fs::read_dir(out).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            files.insert(p.strip_prefix(out).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
        }
    }
    files
}

#[test]
fn full_chain_reports_degraded_commits_and_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(full_chain(a.path()), 3);
    assert_eq!(full_chain(b.path()), 3);

    let fa = report_files(a.path());
    for name in [
        "variance.csv",
        "baseline_metrics.csv",
        "expected_efficiency.csv",
        "labels.csv",
        "commit_rollup.csv",
        "layer_impact.csv",
        "temporal_baseline.csv",
        "risk_metrics.csv",
        "risk_scores.csv",
        "report.md",
    ] {
        let bytes = fa.get(Path::new(name)).unwrap_or_else(|| panic!("{name} missing"));
        assert!(bytes.len() > 20, "{name} is empty");
    }
    assert_eq!(fa, report_files(b.path()));

    let rollup = String::from_utf8(fa[Path::new("commit_rollup.csv")].clone()).unwrap();
    assert!(rollup.lines().filter(|l| l.contains("degraded")).count() >= 2, "{rollup}");
}

#[test]
fn ingest_and_categorize_are_idempotent() {
    let out = tempfile::tempdir().unwrap();
    let out = out.path();
    let scenario = out.join("scenario.toml");
    std::fs::write(&scenario, SCENARIO).unwrap();
    ok(out, &["synth", "--scenario", scenario.to_str().unwrap()]);
    let dataset = out.join("synth/dataset");
    let commits = out.join("synth/commits.jsonl");
    for _ in 0..2 {
        ok(out, &["ingest", "--dataset", dataset.to_str().unwrap()]);
        ok(out, &["categorize", "--commits", commits.to_str().unwrap()]);
    }
    let lines = |f: &str| std::fs::read_to_string(out.join(f)).unwrap().lines().count();
    assert_eq!(lines("tests.jsonl"), 160);
    assert_eq!(lines("commit_features.jsonl"), 20);
}

#[test]
fn unreachable_refinement_service_falls_back_to_keywords() {
    let out = tempfile::tempdir().unwrap();
    let out = out.path();
    let commits = out.join("commits.jsonl");
    std::fs::write(
        &commits,
        concat!(
            r#"{"hash":"2024aa16","message":"remove a useless copy and specific buffer for all UE UL payload"}"#,
            "\n",
            r#"{"hash":"2024aa17","message":"fix HARQ retransmission in NR_MAC scheduler"}"#,
            "\n",
        ),
    )
    .unwrap();
    let config = out.join("ranperf.toml");
    std::fs::write(&config, "[categorize]\nmax_retries = 0\ntimeout_s = 1.0\n").unwrap();
    let o = ok(
        out,
        &[
            "--config",
            config.to_str().unwrap(),
            "categorize",
            "--commits",
            commits.to_str().unwrap(),
            "--refine",
            "http://127.0.0.1:9/refine",
        ],
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("1 in degraded mode"));
    let store = std::fs::read_to_string(out.join("commit_features.jsonl")).unwrap();
    let low = store.lines().find(|l| l.contains("2024aa16")).unwrap();
    assert!(low.contains(r#""degraded_mode":true"#), "{low}");
    assert!(low.contains("memory"), "{low}");
    let high = store.lines().find(|l| l.contains("2024aa17")).unwrap();
    assert!(high.contains(r#""degraded_mode":false"#), "{high}");
}

#[test]
fn usage_and_config_errors_exit_2() {
    let out = tempfile::tempdir().unwrap();
    let out = out.path();
    assert_eq!(code(&ranperf(out, &["no-such-command"])), 2);
    assert_eq!(code(&ranperf(out, &["synth"])), 2);
    assert_eq!(code(&ranperf(out, &["train-baseline"])), 2);
    assert_eq!(code(&ranperf(out, &["score", "--threshold", "1.5"])), 2);
    let bad = out.join("bad.toml");
    std::fs::write(&bad, "[analyze.thresholds]\ntau_rho = 2.0\n").unwrap();
    assert_eq!(code(&ranperf(out, &["--config", bad.to_str().unwrap(), "report"])), 2);
    assert_eq!(code(&ranperf(out, &["--help"])), 0);
}

#[test]
fn missing_inputs_are_data_errors() {
    let out = tempfile::tempdir().unwrap();
    let out = out.path();
    assert_eq!(code(&ranperf(out, &["assemble"])), 1);
    assert_eq!(code(&ranperf(out, &["report"])), 1);
    let empty = out.join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    assert_eq!(code(&ranperf(out, &["ingest", "--dataset", empty.to_str().unwrap()])), 1);
}

#[test]
fn analyze_exits_0_when_no_commit_reaches_min_degraded() {
    let out = tempfile::tempdir().unwrap();
    let out = out.path();
    let scenario = out.join("clean.toml");
    std::fs::write(&scenario, "seed = 3\n").unwrap();
    ok(out, &["synth", "--scenario", scenario.to_str().unwrap()]);
    ok(out, &["ingest", "--dataset", out.join("synth/dataset").to_str().unwrap()]);
    ok(out, &["categorize", "--commits", out.join("synth/commits.jsonl").to_str().unwrap()]);
    ok(out, &["assemble"]);
    ok(out, &["train-baseline", "--seed", "3"]);
    // baseline error and noise leave a few scattered degraded tests, at most
    // two on any single commit of this clean campaign
    let o = ranperf(out, &["analyze", "--min-degraded", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let rollup = std::fs::read_to_string(out.join("commit_rollup.csv")).unwrap();
    assert!(rollup.lines().skip(1).all(|l| l.ends_with(",normal") || l.ends_with(",environmental_limit")), "{rollup}");
}
