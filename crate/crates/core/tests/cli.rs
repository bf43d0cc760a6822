use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn flowdim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowdim")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const INFEASIBLE: &str = r#"{"alphabet":["1","2"],"adjacency":[[1,1],[1,0]],"theta":0.5,
  "roof":{"depth":1,"table":{"1":1.0,"2":1.0}},
  "fu":{"depth":1,"table":{"1":2.302585092994046,"2":2.302585092994046}}}"#;

const MISSING_WORD: &str = r#"{"alphabet":["1","2"],"adjacency":[[1,1],[1,1]],"theta":0.5,
  "roof":{"depth":1,"table":{"1":1.0,"2":1.0}},
  "fu":{"depth":2,"table":{"1,1":1.0,"1,2":1.0,"2,2":1.0}}}"#;

#[test]
fn check_reports_preset() {
    let out = flowdim(&["check", "--preset", "golden_mean_const", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["command"], "check");
    assert_eq!(doc["config_digest"].as_str().unwrap().len(), 64);
    let r = &doc["results"];
    assert_eq!(r["mixing_index"], 2);
    assert_eq!(r["feasible"], true);
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((r["s_star"].as_f64().unwrap() - 2.0 * phi.ln()).abs() < 1e-10);

    let text = flowdim(&["check", "--preset", "full2_ln2ln6"]);
    assert!(String::from_utf8(text.stdout).unwrap().contains("feasible"));
}

#[test]
fn schema_error_names_missing_word() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.json", MISSING_WORD);
    let out = flowdim(&["check", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("missing word \"2,1\""));

    let out = flowdim(&["check", "--config", &cfg, "--json"]);
    assert_eq!(out.status.code(), Some(2));
    let doc = json(&out);
    assert!(doc["results"]["errors"][0]["message"].as_str().unwrap().contains("2,1"));
}

#[test]
fn infeasible_exits_three_with_bowen_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "g.json", INFEASIBLE);
    let out = flowdim(&["solve", "--config", &cfg, "--json"]);
    assert_eq!(out.status.code(), Some(3));
    let doc = json(&out);
    let s = doc["results"]["s_star"].as_f64().unwrap();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((s - phi.ln() / 10f64.ln()).abs() < 1e-10);
    assert!(s < 0.5);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(flowdim(&["solve"]).status.code(), Some(2));
    assert_eq!(flowdim(&["solve", "--preset", "nope"]).status.code(), Some(2));
    // Randomized solving without a seed.
    assert_eq!(flowdim(&["solve", "--preset", "full2_ln2ln6", "--count", "3"]).status.code(), Some(2));
    assert_eq!(flowdim(&["diagnose", "--preset", "full2_ln2ln6"]).status.code(), Some(2));
    assert_eq!(
        flowdim(&["diagnose", "--preset", "full2_ln2ln6", "--seed", "1", "--n-grid", "5:1:1"]).status.code(),
        Some(2)
    );
    assert_eq!(flowdim(&["check", "--config", "/nonexistent/model.json"]).status.code(), Some(2));
}

#[test]
fn solve_count_gives_distinct_points() {
    let out = flowdim(&["solve", "--preset", "full2_ln2ln6", "--count", "3", "--seed", "4", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    let sols = doc["results"]["solutions"].as_array().unwrap();
    assert_eq!(sols.len(), 3);
    for s in sols {
        assert!((s["stats"]["dim"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    }
    for i in 0..3 {
        for j in i + 1..3 {
            assert_ne!(sols[i]["markov"], sols[j]["markov"]);
        }
    }
    assert_eq!(doc["params"]["seed"], 4);
}

#[test]
fn solve_out_then_fluct_exact_only() {
    let dir = tempfile::tempdir().unwrap();
    let solved = dir.path().join("solved.json");
    let s = solved.to_str().unwrap();
    let out = flowdim(&["solve", "--preset", "golden_mean_const", "--out", s]);
    assert_eq!(out.status.code(), Some(0));
    let cfg: Value = serde_json::from_str(&std::fs::read_to_string(&solved).unwrap()).unwrap();
    assert!(cfg["markov"].is_array());

    let out = flowdim(&["fluct", "--config", s, "--samples", "0", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    let r = &doc["results"];
    assert!(r.get("tail").is_none());
    // F^u is constant: the expansion coordinate vanishes identically.
    assert_eq!(r["q"]["q"][1][1], 0.0);
    assert_eq!(r["q"]["q"][0][1], 0.0);
    assert_eq!(r["expansion_coordinate"]["is_degenerate"], true);
    assert_eq!(r["nonsingular"], false);
}

#[test]
fn fluct_needs_markov_block() {
    let out = flowdim(&["fluct", "--preset", "full2_ln2ln6", "--samples", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("markov"));
}

#[test]
fn fluct_reports_tail_block() {
    let out = flowdim(&["fluct", "--preset", "bernoulli_dim3", "--samples", "1000", "--seed", "3", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    let r = &doc["results"];
    // Uniform measure: -G is the constant ln 2, F^u as well.
    assert_eq!(r["entropy_coordinate"]["is_degenerate"], true);
    assert_eq!(r["tail"]["n_grid"], serde_json::json!([1000, 2000]));
    assert_eq!(r["tail"]["samples"], 1000);
}

#[test]
fn diagnose_small_run_is_deterministic() {
    let args = ["diagnose", "--preset", "full2_ln2ln6", "--seed", "5", "--samples", "10000"];
    let a = flowdim(&args);
    let b = flowdim(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let csv = String::from_utf8(a.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], flowdim::ballmass::CSV_HEADER.trim_end());
    assert_eq!(lines.len(), 9);
    assert!(String::from_utf8(a.stderr).unwrap().contains("growth:"));
}

#[test]
fn diagnose_contrast_decays() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    let out = flowdim(&[
        "diagnose",
        "--preset",
        "bernoulli_dim3",
        "--seed",
        "1",
        "--samples",
        "2000",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("growth: decaying"));
    assert!(csv.exists());
}

#[test]
fn recode_round_trips_through_check() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("r.json");
    let out = flowdim(&["recode", "--preset", "golden_mean_const", "--ell", "3", "--out", rec.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["results"]["alphabet_size"], 5);

    let out = flowdim(&["check", "--config", rec.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let r = &json(&out)["results"];
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((r["s_star"].as_f64().unwrap() - 2.0 * phi.ln()).abs() < 1e-10);
}

#[test]
fn json_reports_share_a_shape() {
    for args in [
        vec!["check", "--preset", "full3_tail", "--json"],
        vec!["solve", "--preset", "full3_tail", "--json"],
        vec!["recode", "--preset", "full3_tail", "--ell", "2", "--json"],
    ] {
        let doc = json(&flowdim(&args));
        let mut keys: Vec<&String> = doc.as_object().unwrap().keys().collect();
        keys.sort();
        assert_eq!(keys, ["command", "config_digest", "params", "results"]);
        assert_eq!(doc["params"]["preset"], "full3_tail");
    }
}
