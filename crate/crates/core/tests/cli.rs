mod common;

use common::{fixture_path, fixture_run, fixture_stats_mismatches, run_cli};

fn path(name: &str) -> String {
    fixture_path(name).to_str().unwrap().to_string()
}

#[test]
fn stats_reproduce_fixture_counts() {
    assert_eq!(fixture_stats_mismatches(), Vec::<String>::new());
}

#[test]
fn stats_table_lists_each_split() {
    let (code, out, _) = run_cli(&["stats", "--corpus", &path("spice_fixture.jsonl")]);
    assert_eq!(code, 0);
    assert!(out.lines().any(|l| l.starts_with("train") && l.contains(" 89 ")), "{out}");
    assert!(out.lines().any(|l| l.starts_with("test") && l.contains(" 28 ")), "{out}");
}

#[test]
fn validate_clean_fixture() {
    let (code, out, _) = run_cli(&["validate", "--corpus", &path("spice_fixture.jsonl")]);
    assert_eq!(code, 0);
    assert_eq!(out, "0 violation(s)\n");
}

#[test]
fn validate_bad_corpus_reports_each_violation() {
    let (code, out, _) = run_cli(&["validate", "--corpus", &path("bad_corpus.jsonl")]);
    assert_eq!(code, 2);
    assert!(out.contains("dialogue bad-00, utterance 0"), "{out}");
    assert!(out.contains("dialogue bad-01, utterance 0"), "{out}");
    assert!(out.ends_with("2 violation(s)\n"), "{out}");
}

#[test]
fn stats_refuses_invalid_corpus() {
    let (code, _, err) = run_cli(&["stats", "--corpus", &path("bad_corpus.jsonl")]);
    assert_eq!(code, 2);
    assert!(err.contains("bad-00"), "{err}");
}

#[test]
fn agreement_on_annotation_fixture() {
    let (code, out, _) = run_cli(&["agreement", "--annotations", &path("annotations.jsonl")]);
    assert_eq!(code, 0);
    assert_eq!(out, "items: 4\nannotators: 2\nalpha: 0.533333\n");
}

#[test]
fn malformed_config_override_is_usage_error() {
    let (code, _, err) = run_cli(&["train-discovery", "--seed", "1", "--set", "discovery.epochs"]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn evaluate_without_checkpoints_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run_cli(&[
        "evaluate",
        "--seed",
        "1",
        "--corpus",
        &path("spice_fixture.jsonl"),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("discovery.json"), "{err}");
}

#[test]
fn end_to_end_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let files = fixture_run(dir.path());
    for name in [
        "discovery.json",
        "typeid.json",
        "valueex.json",
        "discovery.log.json",
        "report-standalone.json",
        "report-standalone.txt",
        "report-pipeline.json",
        "report-pipeline.txt",
        "profiles.jsonl",
    ] {
        assert!(files.contains_key(name), "missing {name}: {:?}", files.keys());
    }
    let report: serde_json::Value = serde_json::from_slice(&files["report-pipeline.json"]).unwrap();
    assert_eq!(report["mode"], "pipeline");
    assert_eq!(report["config"]["seed"], 7);
    let profiles = String::from_utf8(files["profiles.jsonl"].clone()).unwrap();
    assert_eq!(profiles.lines().count(), 5);

    // `report` re-renders the saved JSON to the same table.
    let json = dir.path().join("report-pipeline.json");
    let (code, table, _) = run_cli(&["report", "--input", json.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(table.as_bytes(), &files["report-pipeline.txt"][..]);
}
