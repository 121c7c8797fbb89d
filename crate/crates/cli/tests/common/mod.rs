#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn kglp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kglp"))
        .args(args)
        .env_remove("KGLP_THREADS")
        .output()
        .expect("spawn kglp")
}

/// Runs `kglp`, asserts success, and parses its JSON summary line.
pub fn kglp_ok(args: &[&str]) -> Value {
    let out = kglp(args);
    assert!(
        out.status.success(),
        "kglp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json summary")
}

pub fn write(path: &Path, value: &Value) {
    std::fs::write(path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Prepares a small synthetic dataset, trains `models` seeded checkpoints on
/// it, and mines rules. Returns the train config used.
pub fn small_workspace(dir: &Path, models: usize) -> Value {
    let spec = dir.join("spec.json");
    write(
        &spec,
        &json!({"num_entities": 150, "num_relations": 4, "num_rule_relations": 1,
                "feature_dim": 8, "num_candidates": 21, "seed": 5}),
    );
    let data = dir.join("data");
    kglp_ok(&["prepare", "--spec", p(&spec), "--out", p(&data)]);
    let train_cfg = json!({"dim": 8, "mlp_hidden": 16, "batch_size": 128, "neg_samples": 10,
                           "lr_dense": 1e-3, "epochs": 2});
    for i in 0..models {
        let mut cfg = train_cfg.clone();
        cfg["seed"] = json!(i);
        let cfg_path = dir.join(format!("train_{i}.json"));
        write(&cfg_path, &cfg);
        kglp_ok(&[
            "train",
            "--train", p(&data.join("train.tsv")),
            "--entity-feat", p(&data.join("entity_feat.f32")),
            "--rel-feat", p(&data.join("relation_feat.f32")),
            "--valid", p(&data.join("valid.cand")),
            "--config", p(&cfg_path),
            "--out", p(&dir.join(format!("model_{i}"))),
        ]);
    }
    kglp_ok(&["mine", "--train", p(&data.join("train.tsv")), "--out", p(&dir.join("rules.json"))]);
    train_cfg
}

/// Pipeline config over the workspace built by [`small_workspace`].
pub fn pipeline_config(dir: &Path, models: usize, train_cfg: &Value, stages: usize) -> Value {
    let data = dir.join("data");
    json!({
        "finetune": train_cfg,
        "distill": {"steps": 5, "batch_size": 32, "stages": stages},
        "models": (0..models).map(|i| dir.join(format!("model_{i}"))).collect::<Vec<_>>(),
        "rules": dir.join("rules.json"),
        "train": data.join("train.tsv"),
        "entity_features": data.join("entity_feat.f32"),
        "relation_features": data.join("relation_feat.f32"),
        "valid": data.join("valid.cand"),
        "test": data.join("test.cand"),
    })
}
