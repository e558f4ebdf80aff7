use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn bank_fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/banks_study.json")
}

fn panelahp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_panelahp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Copies the pilot study into a temp dir and imports the sample panel.
fn pilot_with_panel() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let study = dir.path().join("study.json");
    std::fs::copy(fixture("pilot_study.json"), &study).unwrap();
    let s = study.to_str().unwrap().to_string();
    let o = panelahp(&["import", &s, fixture("panel.csv").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    (dir, s)
}

fn write_single_respondent(dir: &Path) -> String {
    let path = dir.join("single.json");
    std::fs::write(
        &path,
        r#"{
  "schema_version": 1,
  "hierarchy": {"goal": "G", "criteria": ["A", "B", "C"]},
  "judgments": [{"respondent_id": "r1", "matrices": {"G": {"upper": ["2", "4", "2"]}}}]
}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_reports_ok_and_failures() {
    let o = panelahp(&["validate", bank_fixture().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("9 criteria, 16 alternatives"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"schema_version": 1, "hierarchy": {"goal": "G", "criteria": ["A", "B"]},
            "judgments": [{"respondent_id": "r", "matrices": {"Resources": {"upper": ["2"]}}}]}"#,
    )
    .unwrap();
    let o = panelahp(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Resources"));
    assert!(stdout(&o).is_empty());

    let o = panelahp(&["validate", "/nonexistent/study.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn priorities_for_consistent_respondent() {
    let dir = tempfile::tempdir().unwrap();
    let study = write_single_respondent(dir.path());
    let eig = panelahp(&["priorities", &study, "--node", "G"]);
    assert!(eig.status.success(), "{}", stderr(&eig));
    let text = stdout(&eig);
    assert!(text.contains("0.571") && text.contains("0.286") && text.contains("0.143"), "{text}");
    assert!(text.contains(" 0.000  true"), "{text}");

    let geo = panelahp(&["priorities", &study, "--node", "G", "--method", "geometric"]);
    assert_eq!(stdout(&geo), text);

    let missing = panelahp(&["priorities", &study, "--node", "Nope"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("unknown node"));
}

#[test]
fn priorities_out_file_is_json() {
    let dir = tempfile::tempdir().unwrap();
    let study = write_single_respondent(dir.path());
    let out = dir.path().join("p.json");
    let o = panelahp(&["priorities", &study, "--node", "G", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["respondents"][0]["respondent_id"], "r1");
    let a: f64 = doc["respondents"][0]["weights"]["A"].as_str().unwrap().parse().unwrap();
    assert!((a - 4.0 / 7.0).abs() < 1e-12);
}

#[test]
fn aggregate_filters_and_threshold_override() {
    let (_dir, study) = pilot_with_panel();
    let o = panelahp(&["--json", "aggregate", &study]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["total"], 3);
    assert_eq!(doc["accepted"], 2);
    assert_eq!(doc["rejected"][0]["respondent_id"], "e3");
    assert!(stderr(&o).contains("accepted 2 of 3"));

    let o = panelahp(&["--json", "aggregate", &study, "--threshold", "1.0"]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["accepted"], 3);

    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::copy(fixture("pilot_study.json"), &empty).unwrap();
    let o = panelahp(&["aggregate", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn file_config_sits_between_flag_and_default() {
    let (_dir, study) = pilot_with_panel();
    let text = std::fs::read_to_string(&study).unwrap();
    let lenient = text.replace("\"threshold\": \"0.120000000000\"", "\"threshold\": \"0.9\"");
    assert_ne!(lenient, text);
    std::fs::write(&study, lenient).unwrap();
    let accepted = |args: &[&str]| {
        let o = panelahp(args);
        let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        doc["accepted"].as_u64().unwrap()
    };
    assert_eq!(accepted(&["--json", "aggregate", &study]), 3);
    assert_eq!(accepted(&["--json", "aggregate", &study, "--threshold", "0.12"]), 2);
}

#[test]
fn synthesize_bank_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = panelahp(&["synthesize", bank_fixture().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("Total                1.000"), "{text}");
    let nb1 = text.lines().find(|l| l.starts_with("NB1")).unwrap();
    assert!(nb1.trim_end().ends_with("0.066"));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["grid"]["ranking"][0], "NB1");
    assert_eq!(doc["groups"].as_array().unwrap().len(), 8);
    assert_eq!(doc["groups"][0]["display"], "0.064");
}

#[test]
fn synthesize_singletons_and_weights_only() {
    let (_dir, study) = pilot_with_panel();
    let o = panelahp(&["--json", "synthesize", &study]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = doc["grid"]["rows"].as_array().unwrap();
    for g in doc["groups"].as_array().unwrap() {
        let member = g["members"][0].as_str().unwrap();
        let row = rows.iter().find(|r| r["alternative"] == member).unwrap();
        assert_eq!(g["mean"], row["score"]);
    }

    let dir = tempfile::tempdir().unwrap();
    let weights_only = write_single_respondent(dir.path());
    let o = panelahp(&["synthesize", &weights_only]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no alternatives"));
}

#[test]
fn ri_estimate_needs_seed_and_is_deterministic() {
    let o = panelahp(&["ri-estimate", "--order", "3"]);
    assert_eq!(o.status.code(), Some(1));
    let a = panelahp(&["--json", "ri-estimate", "--seed", "5", "--order", "3", "--samples", "5000"]);
    let b = panelahp(&["--json", "ri-estimate", "--seed", "5", "--order", "3", "--samples", "5000"]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ri.json");
    let o = panelahp(&[
        "ri-estimate", "--seed", "5", "--max-order", "4", "--samples", "2000", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = panelahp_core::io::study::parse_ri_table(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(table.max_order(), 4);
}

#[test]
fn delphi_round_control() {
    let dir = tempfile::tempdir().unwrap();
    let study = dir.path().join("study.json");
    std::fs::copy(fixture("pilot_study.json"), &study).unwrap();
    let s = study.to_str().unwrap();

    assert!(panelahp(&["delphi", "open", s]).status.success());
    let o = panelahp(&["delphi", "open", s]);
    assert_eq!(o.status.code(), Some(1));
    for (e, sel) in [("e1", "value_proposition,financial_domain"), ("e2", "value_proposition"), ("e3", "business_processes,value_proposition")] {
        let o = panelahp(&["delphi", "vote", s, "--expert", e, "--select", sel]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = panelahp(&["delphi", "vote", s, "--expert", "nobody", "--select", "value_proposition"]);
    assert_eq!(o.status.code(), Some(1));
    let o = panelahp(&["delphi", "close", s]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("1 items retained"));

    let o = panelahp(&["--json", "delphi", "status", s]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["counts"]["value_proposition"], 3);
    assert_eq!(doc["voters"], 3);
    assert!(!stdout(&o).contains("e1"));
}
