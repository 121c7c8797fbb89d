mod common;

use common::{kglp, kglp_ok, p, pipeline_config, small_workspace, write};
use kglp_core::inference::ScoreMatrix;
use kglp_core::{CandidateQuery, CandidateSet};
use serde_json::{json, Value};

fn perfect_fixture(dir: &std::path::Path) {
    let set = CandidateSet::new(vec![
        CandidateQuery::new(0, 0, vec![1, 2, 3], Some(2)).unwrap(),
        CandidateQuery::new(1, 0, vec![0, 3], Some(0)).unwrap(),
    ]);
    set.save(&dir.join("q.cand")).unwrap();
    let scores = ScoreMatrix::from_rows(vec![vec![0.1, 0.2, 5.0], vec![2.0, -1.0]]).unwrap();
    scores.save(&dir.join("s.f32")).unwrap();
}

#[test]
fn eval_perfect_predictor() {
    let dir = tempfile::tempdir().unwrap();
    perfect_fixture(dir.path());
    let out = kglp_ok(&["eval", "--candidates", p(&dir.path().join("q.cand")), "--scores", p(&dir.path().join("s.f32"))]);
    assert_eq!(out, json!({"mrr": 1.0}));
}

#[test]
fn ensemble_two_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.f32");
    let b = dir.path().join("b.f32");
    let o = dir.path().join("o.f32");
    ScoreMatrix::from_rows(vec![vec![1.0, 3.0]]).unwrap().save(&a).unwrap();
    ScoreMatrix::from_rows(vec![vec![3.0, 1.0]]).unwrap().save(&b).unwrap();
    kglp_ok(&["ensemble", "--scores", &format!("{},{}", p(&a), p(&b)), "--out", p(&o)]);
    assert_eq!(ScoreMatrix::load(&o).unwrap().data(), &[2.0, 2.0]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    perfect_fixture(dir.path());
    let cand = dir.path().join("q.cand");

    assert_eq!(kglp(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(kglp(&["eval", "--scores", "x"]).status.code(), Some(2));
    assert_eq!(kglp(&["--help"]).status.code(), Some(0));

    let bad = dir.path().join("bad.f32");
    ScoreMatrix::from_rows(vec![vec![1.0]]).unwrap().save(&bad).unwrap();
    let out = kglp(&["eval", "--candidates", p(&cand), "--scores", p(&bad)]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["exit_code"], 3);
    assert_eq!(String::from_utf8_lossy(&out.stderr).trim().lines().count(), 1);

    let cfg = dir.path().join("spec.json");
    write(&cfg, &json!({"num_entities": 10, "bogus": 1}));
    let out = kglp(&["prepare", "--spec", p(&cfg), "--out", p(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(3));

    let missing = dir.path().join("missing.f32");
    let out = kglp(&["eval", "--candidates", p(&cand), "--scores", p(&missing)]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn apply_rules_keeps_original_relations() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("t.tsv");
    std::fs::write(&train, "0\t0\t1\n1\t1\t2\n3\t0\t4\n4\t1\t5\n0\t2\t2\n").unwrap();
    let rules = dir.path().join("r.json");
    write(&rules, &json!([{"head": 2, "body": [0, 1], "support": 1, "body_count": 2, "confidence": 1.0}]));
    let out_path = dir.path().join("o.tsv");
    let out = kglp_ok(&["apply-rules", "--train", p(&train), "--rules", p(&rules), "--out", p(&out_path)]);
    assert_eq!(out["added"], 1);
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.lines().any(|l| l == "3\t2\t5"), "{text}");
}

#[test]
fn pipeline_reports_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let train_cfg = small_workspace(dir.path(), 2);
    let cfg = dir.path().join("pipeline.json");
    write(&cfg, &pipeline_config(dir.path(), 2, &train_cfg, 1));
    let out_dir = dir.path().join("out");
    let summary = kglp_ok(&["pipeline", "--config", p(&cfg), "--stages", "3", "--out", p(&out_dir)]);
    assert_eq!(summary["stages"], 4);
    let report: Vec<Value> = serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.len(), 4);
    for (i, stage) in report.iter().enumerate() {
        assert_eq!(stage["stage"], i);
        assert_eq!(stage["single_mrr"].as_array().unwrap().len(), 2);
    }
    assert!(out_dir.join("model_1").is_dir());
    assert!(out_dir.join("test_scores.f32").is_file());
}
