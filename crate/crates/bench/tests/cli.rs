use std::path::Path;
use std::process::{Command, Output};

use fanns::harness::{dominates, load_csv, RunPoint};
use fanns::workload::read_labels;
use fanns::Workload;

fn fanns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fanns"))
        .args(["--threads", "2", "--seed", "3"])
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn fanns")
}

fn ok(args: &[&str]) -> Output {
    let out = fanns(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synthetic(dir: &Path) {
    ok(&["gen", "--synthetic-fixed", "4x3", "--n", "3000", "--dim", "8", "--per-group", "60", "--k-max", "10", "--out", s(dir)]);
}

#[test]
fn synthetic_fixed_has_81_combinations() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path());
    let labels = read_labels(dir.path().join("base.labels")).unwrap();
    let combos: std::collections::BTreeSet<_> = labels.iter().cloned().collect();
    assert_eq!(labels.len(), 3000);
    assert_eq!(combos.len(), 81);
    let w = Workload::load(dir.path()).unwrap();
    assert_eq!(w.scenario, fanns::FilterConstraint::FixedLengthEquality);
    assert!(w.len() > 0 && w.len() <= 60);
}

#[test]
fn search_then_pareto_leaves_no_dominated_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synthetic(d);
    let (base, labels) = (d.join("base.fvecs"), d.join("base.labels"));
    let mut inputs = Vec::new();
    for (alg, params) in [("post-hnsw", "m=8;ef_construction=32"), ("brute-force", ""), ("caps", "")] {
        let out = d.join(format!("{alg}.csv"));
        ok(&[
            "search", "--base", s(&base), "--labels", s(&labels), "--algorithm", alg, "--params", params,
            "--workload", s(d), "--knobs", "1,4,16,64", "--out", s(&out), "--build-log", s(&d.join("build.csv")),
        ]);
        inputs.push(out);
    }
    let rows: Vec<RunPoint> = load_csv(&inputs[1]).unwrap();
    assert!(rows.iter().all(|r| r.recall == 1.0 && r.threads == 2));
    let header = std::fs::read_to_string(&inputs[0]).unwrap();
    assert_eq!(header.lines().next().unwrap(), fanns::harness::RUN_POINT_HEADER);
    let build_log = std::fs::read_to_string(d.join("build.csv")).unwrap();
    assert_eq!(build_log.lines().count(), 4);

    let frontier = d.join("frontier.csv");
    let mut args = vec!["pareto"];
    for i in &inputs {
        args.extend(["--input", s(i)]);
    }
    args.extend(["--out", s(&frontier)]);
    ok(&args);
    let front: Vec<RunPoint> = load_csv(&frontier).unwrap();
    assert!(!front.is_empty());
    for a in &front {
        for b in &front {
            let same_group = a.algorithm == b.algorithm && a.scenario == b.scenario && a.k == b.k;
            assert!(!(same_group && dominates((a.recall, a.qps), (b.recall, b.qps))));
        }
    }
}

#[test]
fn build_and_search_twice_gives_identical_recall() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synthetic(d);
    let mut columns = Vec::new();
    for run in 0..2 {
        let index = d.join(format!("ung{run}.fann"));
        ok(&["build", "--base", s(&d.join("base.fvecs")), "--labels", s(&d.join("base.labels")), "--algorithm", "ung", "--out", s(&index)]);
        let out = d.join(format!("ung{run}.csv"));
        ok(&["search", "--index", s(&index), "--workload", s(d), "--knobs", "5,20", "--out", s(&out)]);
        let rows: Vec<RunPoint> = load_csv(&out).unwrap();
        columns.push(rows.iter().map(|r| r.recall).collect::<Vec<_>>());
    }
    assert_eq!(columns[0], columns[1]);
}

#[test]
fn gen_from_files_and_recompute_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synthetic(d);
    let out = d.join("sel");
    ok(&[
        "gen", "--base", s(&d.join("base.fvecs")), "--labels", s(&d.join("base.labels")), "--scenario", "overlap",
        "--strata", "selectivity", "--percentiles", "50,25", "--pool", "300", "--per-group", "10", "--k-max", "20", "--out", s(&out),
    ]);
    let w = Workload::load(&out).unwrap();
    assert_eq!(w.strata.len(), 2);
    assert_eq!(w.k_max, 20);
    ok(&["gt", "--base", s(&out.join("base.fvecs")), "--labels", s(&out.join("base.labels")), "--workload", s(&out), "--k-max", "10"]);
    let again = Workload::load(&out).unwrap();
    assert_eq!(again.k_max, 10);
    assert_eq!(again.len(), w.len());
    for (a, b) in again.queries.iter().zip(&w.queries) {
        assert_eq!(a.truth.ids[..], b.truth.ids[..10]);
    }
}

#[test]
fn tune_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synthetic(d);
    let report = d.join("tune.json");
    ok(&[
        "tune", "--base", s(&d.join("base.fvecs")), "--labels", s(&d.join("base.labels")), "--algorithm", "post-hnsw",
        "--scenarios", "containment,equality", "--space", "m=8,12;ef_construction=32", "--knobs", "10,40",
        "--sample-floor", "1000", "--queries", "30", "--n-sub", "2", "--out", s(&report),
    ]);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["subspaces"].as_array().unwrap().len(), 2);
    assert_eq!(json["sample_size"], 1000);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.fvecs");
    let out = fanns(&["build", "--base", s(&missing), "--labels", s(&missing), "--algorithm", "ung", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.fvecs"));
    assert_eq!(fanns(&["search", "--bogus"]).status.code(), Some(2));
    assert_eq!(fanns(&["gen", "--synthetic-fixed", "4by3", "--out", s(dir.path())]).status.code(), Some(2));
}

#[test]
fn bad_params_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synthetic(d);
    let out = fanns(&[
        "build", "--base", s(&d.join("base.fvecs")), "--labels", s(&d.join("base.labels")), "--algorithm", "ung",
        "--params", "bogus=1", "--out", s(&d.join("x.fann")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}
