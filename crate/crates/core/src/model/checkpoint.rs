//! Checkpoint directories: one raw `f32le` file (plus sidecar) per tensor and
//! a `model.json` describing the layout.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoder::{EncoderParams, Fusion};
use super::linear::Linear;
use super::params::{ModelConfig, ModelParams, ShallowTable};
use crate::error::{Error, Result};
use crate::io;

pub const CHECKPOINT_FORMAT: &str = "kglp-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format: String,
    pub model: ModelConfig,
    pub entity_alpha: f32,
    pub relation_alpha: f32,
    /// Whether inverse relations `r + R` were added before training.
    pub inverse_relations: bool,
    /// The configuration of the run that produced these parameters.
    pub train_config: serde_json::Value,
}

fn save_linear(dir: &Path, name: &str, l: &Linear<f32>) -> Result<()> {
    io::write_matrix(&dir.join(format!("{name}_weight.f32")), l.out_dim, l.in_dim, &l.weight)?;
    io::write_matrix(&dir.join(format!("{name}_bias.f32")), 1, l.out_dim, &l.bias)
}

fn load_linear(dir: &Path, name: &str, in_dim: usize, out_dim: usize) -> Result<Linear<f32>> {
    let weight = load_shaped(dir, &format!("{name}_weight.f32"), out_dim, in_dim)?;
    let bias = load_shaped(dir, &format!("{name}_bias.f32"), 1, out_dim)?;
    Ok(Linear {
        in_dim,
        out_dim,
        weight,
        bias,
    })
}

fn load_shaped(dir: &Path, file: &str, rows: usize, cols: usize) -> Result<Vec<f32>> {
    let path = dir.join(file);
    let (r, c, data) = io::read_matrix(&path)?;
    if (r, c) != (rows, cols) {
        return Err(Error::Dimension(format!(
            "{} is {r}x{c}, model.json implies {rows}x{cols}",
            path.display()
        )));
    }
    Ok(data)
}

fn save_encoder(dir: &Path, prefix: &str, enc: &EncoderParams<f32>) -> Result<()> {
    match &enc.fusion {
        Fusion::Concat { linear } => save_linear(dir, &format!("{prefix}_concat"), linear),
        Fusion::Mlp { proj, hidden, out } => {
            save_linear(dir, &format!("{prefix}_proj"), proj)?;
            save_linear(dir, &format!("{prefix}_hidden"), hidden)?;
            save_linear(dir, &format!("{prefix}_out"), out)
        }
    }
}

fn load_encoder(
    dir: &Path,
    prefix: &str,
    cfg: &ModelConfig,
    feature_dim: usize,
    alpha: f32,
) -> Result<EncoderParams<f32>> {
    let d = cfg.dim;
    let fusion = if cfg.variant.uses_mlp() {
        Fusion::Mlp {
            proj: load_linear(dir, &format!("{prefix}_proj"), feature_dim, d)?,
            hidden: load_linear(dir, &format!("{prefix}_hidden"), 2 * d, cfg.hidden)?,
            out: load_linear(dir, &format!("{prefix}_out"), cfg.hidden, d)?,
        }
    } else {
        Fusion::Concat {
            linear: load_linear(dir, &format!("{prefix}_concat"), feature_dim + d, d)?,
        }
    };
    Ok(EncoderParams {
        variant: cfg.variant,
        fusion,
        alpha,
    })
}

/// Writes `model` into `dir`, creating it if needed.
pub fn save_checkpoint(
    dir: &Path,
    model: &ModelParams<f32>,
    inverse_relations: bool,
    train_config: serde_json::Value,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let c = &model.config;
    io::write_matrix(
        &dir.join("entity_shallow.f32"),
        c.num_entities,
        c.dim,
        &model.entity_shallow.data,
    )?;
    io::write_matrix(
        &dir.join("relation_shallow.f32"),
        c.num_relations,
        c.dim,
        &model.relation_shallow.data,
    )?;
    save_encoder(dir, "entity", &model.entity_encoder)?;
    save_encoder(dir, "relation", &model.relation_encoder)?;
    let meta = CheckpointMeta {
        format: CHECKPOINT_FORMAT.to_owned(),
        model: c.clone(),
        entity_alpha: model.entity_encoder.alpha,
        relation_alpha: model.relation_encoder.alpha,
        inverse_relations,
        train_config,
    };
    io::write_json(&dir.join("model.json"), &meta)
}

pub fn load_checkpoint(dir: &Path) -> Result<(ModelParams<f32>, CheckpointMeta)> {
    let meta: CheckpointMeta = io::read_json(&dir.join("model.json"))?;
    if meta.format != CHECKPOINT_FORMAT {
        return Err(Error::Sidecar {
            path: dir.join("model.json"),
            message: format!("unknown checkpoint format {:?}", meta.format),
        });
    }
    let c = &meta.model;
    c.validate()?;
    let entity_shallow = ShallowTable {
        rows: c.num_entities,
        dim: c.dim,
        data: load_shaped(dir, "entity_shallow.f32", c.num_entities, c.dim)?,
    };
    let relation_shallow = ShallowTable {
        rows: c.num_relations,
        dim: c.dim,
        data: load_shaped(dir, "relation_shallow.f32", c.num_relations, c.dim)?,
    };
    let entity_encoder = load_encoder(dir, "entity", c, c.entity_feature_dim, meta.entity_alpha)?;
    let relation_encoder =
        load_encoder(dir, "relation", c, c.relation_feature_dim, meta.relation_alpha)?;
    let model = ModelParams {
        config: c.clone(),
        entity_encoder,
        relation_encoder,
        entity_shallow,
        relation_shallow,
    };
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DecoderKind, EncoderVariant};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_every_variant() {
        for variant in EncoderVariant::ALL {
            let cfg = ModelConfig {
                variant,
                decoder: DecoderKind::ComplEx,
                dim: 4,
                hidden: 3,
                entity_feature_dim: 5,
                relation_feature_dim: 2,
                num_entities: 6,
                num_relations: 4,
                relation_feature_rows: 2,
            };
            let mut model = ModelParams::<f32>::init(cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            model.entity_encoder.alpha = 0.25;
            let dir = tempfile::tempdir().unwrap();
            save_checkpoint(dir.path(), &model, true, serde_json::json!({"seed": 1})).unwrap();
            let (back, meta) = load_checkpoint(dir.path()).unwrap();
            assert_eq!(back, model);
            assert!(meta.inverse_relations);
            assert_eq!(meta.train_config["seed"], 1);
        }
    }

    #[test]
    fn shape_mismatch_detected() {
        let cfg = ModelConfig {
            variant: EncoderVariant::ConcatMlp,
            decoder: DecoderKind::DistMult,
            dim: 2,
            hidden: 2,
            entity_feature_dim: 1,
            relation_feature_dim: 1,
            num_entities: 3,
            num_relations: 1,
            relation_feature_rows: 1,
        };
        let model = ModelParams::<f32>::init(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &model, false, serde_json::Value::Null).unwrap();
        io::write_matrix(&dir.path().join("entity_shallow.f32"), 2, 2, &[0.0; 4]).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Dimension(_))));
    }
}
