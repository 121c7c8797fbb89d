use std::fs;

use kglp_core::model::{load_checkpoint, EncoderVariant, Features};
use kglp_core::synthetic::{generate_synthetic, SyntheticDataset, SyntheticSpec};
use kglp_core::training::{train, train_to_dir, TrainConfig, UpdateMode};

fn small() -> SyntheticDataset {
    generate_synthetic(&SyntheticSpec {
        num_entities: 200,
        num_relations: 4,
        num_rule_relations: 1,
        feature_dim: 8,
        tail_noise: 0.0,
        num_candidates: 21,
        seed: 3,
        ..Default::default()
    })
    .unwrap()
}

fn config() -> TrainConfig {
    TrainConfig {
        dim: 16,
        mlp_hidden: 32,
        batch_size: 64,
        neg_samples: 20,
        lr_dense: 1e-3,
        epochs: 6,
        ..Default::default()
    }
}

#[test]
fn zero_epochs_logs_initial_evaluation() {
    let d = small();
    let f = Features { entity: &d.entity_features, relation: &d.relation_features };
    let out = train(&d.train, f, &TrainConfig { epochs: 0, ..config() }, &d.valid).unwrap();
    assert_eq!(out.metrics.len(), 1);
    assert_eq!(out.metrics[0].step, 0);
    assert_eq!(out.metrics[0].loss, None);
}

#[test]
fn loss_falls_and_model_learns() {
    let d = small();
    let f = Features { entity: &d.entity_features, relation: &d.relation_features };
    let out = train(&d.train, f, &config(), &d.valid).unwrap();
    let losses: Vec<f64> = out.metrics.iter().filter_map(|m| m.loss).collect();
    assert_eq!(losses.len(), 6);
    assert!(losses[5] < losses[0], "{losses:?}");
    assert!(out.best_mrr > 0.5, "mrr {}", out.best_mrr);
    assert!(out.metrics.iter().all(|m| m.valid_mrr <= out.best_mrr));
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let d = small();
    let f = Features { entity: &d.entity_features, relation: &d.relation_features };
    let cfg = TrainConfig { epochs: 2, variant: EncoderVariant::ConcatMlp, ..config() };
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for dir in &dirs {
        train_to_dir(&d.train, f, &cfg, &d.valid, dir.path()).unwrap();
    }
    let mut names: Vec<_> = fs::read_dir(dirs[0].path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 3);
    for name in names {
        let a = fs::read(dirs[0].path().join(&name)).unwrap();
        let b = fs::read(dirs[1].path().join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs");
    }
    let (model, meta) = load_checkpoint(dirs[0].path()).unwrap();
    assert_eq!(model.config.num_relations, 2 * d.train.num_relations());
    assert_eq!(meta.model, model.config);
}

#[test]
fn hogwild_trains() {
    let d = small();
    let f = Features { entity: &d.entity_features, relation: &d.relation_features };
    let cfg = TrainConfig { mode: UpdateMode::Hogwild, workers: 2, ..config() };
    let out = train(&d.train, f, &cfg, &d.valid).unwrap();
    assert_eq!(out.metrics.len(), 6);
    assert!(out.best_mrr > 0.4, "mrr {}", out.best_mrr);
}

#[test]
fn rejects_mismatched_features() {
    let d = small();
    let other = generate_synthetic(&SyntheticSpec { num_entities: 50, num_candidates: 11, seed: 1, ..Default::default() }).unwrap();
    let f = Features { entity: &other.entity_features, relation: &d.relation_features };
    assert!(train(&d.train, f, &config(), &d.valid).is_err());
}

#[test]
fn rule_free_loss_falls_by_epoch_five() {
    let d = generate_synthetic(&SyntheticSpec {
        num_entities: 200,
        num_relations: 4,
        num_rule_relations: 0,
        feature_dim: 8,
        num_candidates: 21,
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let f = Features { entity: &d.entity_features, relation: &d.relation_features };
    let out = train(&d.train, f, &config(), &d.valid).unwrap();
    let losses: Vec<f64> = out.metrics.iter().filter_map(|m| m.loss).collect();
    assert!(losses[5] < losses[0], "{losses:?}");
}

#[test]
fn small_graph_reaches_high_mrr() {
    let d = generate_synthetic(&SyntheticSpec {
        num_entities: 200,
        num_relations: 8,
        num_rule_relations: 0,
        feature_dim: 16,
        latent_dim: 4,
        feature_noise: 0.0,
        tails_per_head: 3,
        tail_noise: 0.0,
        seed: 0,
        ..Default::default()
    })
    .unwrap();
    let f = Features { entity: &d.entity_features, relation: &d.relation_features };
    let cfg = TrainConfig {
        dim: 16,
        mlp_hidden: 32,
        batch_size: 32,
        neg_samples: 50,
        lr_shallow: 0.01,
        lr_dense: 3e-3,
        epochs: 50,
        ..Default::default()
    };
    let out = train(&d.train, f, &cfg, &d.valid).unwrap();
    assert!(out.best_mrr >= 0.90, "mrr {}", out.best_mrr);
}
