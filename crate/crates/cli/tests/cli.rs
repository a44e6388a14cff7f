use std::process::{Command, Output};

use serde_json::Value;

fn brauer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brauer")).args(args).output().expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = brauer(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn exact(v: &Value, name: &str) -> String {
    v["values"].as_array().unwrap().iter().find(|r| r["name"] == name).unwrap_or_else(|| panic!("no row {name}"))
        ["exact"]
        .as_str()
        .unwrap()
        .to_string()
}

fn decimal(v: &Value, name: &str) -> f64 {
    v["values"].as_array().unwrap().iter().find(|r| r["name"] == name).unwrap()["decimal"].as_f64().unwrap()
}

#[test]
fn theory_values() {
    assert_eq!(exact(&json(&["theory", "mu", "--n", "3"]), "mu"), "1/5");
    let d = json(&["theory", "density", "--n", "3"]);
    assert_eq!((exact(&d, "density"), exact(&d, "per_level")), ("7/9".into(), "7/3".into()));
    assert_eq!(exact(&json(&["theory", "shape", "--n", "2", "--shape", "BB"]), "mu"), "1/9");
    assert_eq!(exact(&json(&["theory", "p0", "--n", "5"]), "p0"), "5/21");
    assert_eq!(exact(&json(&["theory", "cltvar", "--n", "3"]), "variance"), "56/27");
    let w = json(&["theory", "weakshape", "--n", "4", "--weak", "2,1"]);
    assert_eq!(exact(&w, "gamma"), "2");
    let t = json(&["theory", "table2sling", "--n", "5"]);
    assert_eq!(exact(&t, "weighted_sum"), "1");
}

#[test]
fn theory_rejects_bad_input() {
    assert_eq!(brauer(&["theory", "density", "--n", "4"]).status.code(), Some(2));
    assert_eq!(brauer(&["theory", "shape", "--n", "2", "--shape", "AB"]).status.code(), Some(2));
    assert_eq!(brauer(&["theory", "shape", "--n", "2"]).status.code(), Some(2));
    assert_eq!(brauer(&["theory", "nonsense", "--n", "2"]).status.code(), Some(2));
}

#[test]
fn validate_shape() {
    let v = json(&["validate-shape", "--n", "2", "--word", "ABAB"]);
    assert_eq!(v["accepted"], true);
    assert_eq!(v["weak"], "(1,1)");
    assert_eq!(v["gamma"], "1");
    assert_eq!(decimal(&v, "size"), 4.0);
    let v = json(&["validate-shape", "--n", "2", "--word", "AB"]);
    assert_eq!(v["accepted"], false);
    assert_eq!(brauer(&["validate-shape", "--n", "2", "--word", "AXB"]).status.code(), Some(2));
}

#[test]
fn exact_loop_law_matches_the_convolution() {
    let v = json(&["exact", "--n", "2", "--t", "3", "--stat", "loops"]);
    let law: Vec<String> = (0..=3).map(|k| exact(&v, &format!("P[{k}]"))).collect();
    assert_eq!(law, ["8/27", "4/9", "2/9", "1/27"]);
    let m = json(&["exact", "--n", "2", "--t", "3", "--stat", "loops", "--method", "markov"]);
    assert_eq!((0..=3).map(|k| exact(&m, &format!("P[{k}]"))).collect::<Vec<_>>(), law);
    assert_eq!(exact(&m, "overflow"), "0");
}

#[test]
fn capacity_guards_have_their_own_exit_code() {
    assert_eq!(brauer(&["exact", "--n", "3", "--t", "9"]).status.code(), Some(3));
    assert_eq!(brauer(&["exact", "--n", "6", "--t", "2", "--method", "markov"]).status.code(), Some(3));
    assert_eq!(brauer(&["exact", "--n", "2", "--t", "2", "--stat", "transverse"]).status.code(), Some(2));
}

#[test]
fn simulate_reports_against_theory() {
    let v = json(&["simulate", "--n", "3", "--t", "100000", "--seed", "7", "--trackers", "loops,transverse"]);
    let (est, se) = (decimal(&v, "loops.estimate"), decimal(&v, "loops.std_error"));
    assert!((est - 0.2).abs() < 5.0 * se, "{est} {se}");
    assert_eq!(exact(&v, "transverse.theory"), "7/3");
    assert_eq!(v["config"]["seed"], 7);
    assert_eq!(v["report"]["seed"], 7);
}

#[test]
fn simulate_is_byte_identical_and_round_trips() {
    let args = [
        "simulate",
        "--n",
        "5",
        "--t",
        "20000",
        "--seed",
        "3",
        "--replicas",
        "4",
        "--trackers",
        "loops,transverse,shape:BBBB",
    ];
    let a = brauer(&args);
    let b = brauer(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let seq = brauer(&[&args[..], &["--sequential"]].concat());
    assert_eq!(a.stdout, seq.stdout);
    let dir = std::env::temp_dir().join(format!("brauer-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("out.json");
    std::fs::write(&path, &a.stdout).unwrap();
    let again = brauer(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(a.stdout, again.stdout);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn simulate_validates_its_config() {
    assert_eq!(brauer(&["simulate", "--n", "4", "--t", "10", "--trackers", "transverse"]).status.code(), Some(2));
    assert_eq!(brauer(&["simulate", "--n", "3", "--t", "10", "--trackers", "loops,loops"]).status.code(), Some(2));
    assert_eq!(brauer(&["simulate", "--n", "3", "--t", "10", "--trackers", "wiggles"]).status.code(), Some(2));
}

#[test]
fn csv_output_embeds_the_config() {
    let out = brauer(&["--format", "csv", "theory", "pgf", "--n", "2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# theory {\"n\":2,\"target\":\"pgf\"}"));
    assert_eq!(lines.next(), Some("name,exact,decimal"));
    assert!(text.contains("x^0,2/3,"));
    assert!(text.contains("x^1,1/3,"));
}

#[test]
fn local_laws_are_close() {
    let v = json(&["local-laws", "--n", "3", "--probes", "20000", "--seed", "1"]);
    assert!(decimal(&v, "V.tv") < 0.02);
    assert!(decimal(&v, "E.tv") < 0.02);
    assert_eq!(brauer(&["local-laws", "--n", "2"]).status.code(), Some(2));
}

#[test]
fn report_exit_status_follows_the_checks() {
    let ok = brauer(&["report", "--only", "9,11"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let v: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(v["criteria"].as_array().unwrap().len(), 2);
    // The truncated shape-rate sum cannot reach its tolerance.
    let bad = brauer(&["report", "--only", "8"]);
    assert_eq!(bad.status.code(), Some(4));
    assert_eq!(brauer(&["report", "--only", "13"]).status.code(), Some(2));
}
