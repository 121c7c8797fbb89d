//! Negative-sampling training in the tail-only regime.
//!
//! Each positive `(h, r, t)` becomes a query `(h, r, ?)` whose class set is the
//! true tail plus `neg_samples` uniform negatives; the loss is softmax
//! cross-entropy over decoder scores. With inverse relations enabled, head
//! prediction is served by the `(t, r + R, ?)` queries of the mirrored triples.

mod hogwild;
pub mod optim;
pub mod sampling;

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSet;
use crate::error::{Error, Result};
use crate::graph::{Triple, TripleStore};
use crate::inference::{mrr, predict, TieBreak};
use crate::model::{
    forward_parts, save_checkpoint, DecoderKind, EncoderParams, EncoderVariant, Features,
    Gradients, ModelConfig, ModelParams, Real, ShallowLookup,
};
pub use optim::{apply_update, LearningRates, OptimizerState};
pub use sampling::sample_negatives;

/// How parameter updates are applied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// One batch at a time, fully deterministic for a given seed.
    #[default]
    SingleWriter,
    /// `workers` threads update shallow rows lock-free; dense tensors are
    /// updated under a lock. Not reproducible.
    Hogwild,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub mlp_hidden: usize,
    pub lr_shallow: f64,
    pub lr_dense: f64,
    pub batch_size: usize,
    pub neg_samples: usize,
    pub workers: usize,
    pub epochs: usize,
    pub seed: u64,
    pub variant: EncoderVariant,
    pub decoder: DecoderKind,
    /// Evaluate every this many optimizer steps; 0 evaluates at epoch ends.
    pub eval_every: usize,
    pub inverse_relations: bool,
    pub mode: UpdateMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 300,
            mlp_hidden: 3000,
            lr_shallow: 0.1,
            lr_dense: 1e-4,
            batch_size: 800,
            neg_samples: 100,
            workers: 4,
            epochs: 10,
            seed: 0,
            variant: EncoderVariant::ConcatMlpResidual,
            decoder: DecoderKind::ComplEx,
            eval_every: 0,
            inverse_relations: true,
            mode: UpdateMode::SingleWriter,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidArgument(m.to_owned()));
        if self.dim == 0 || !self.dim.is_multiple_of(2) {
            return fail("dim must be positive and even");
        }
        if self.variant.uses_mlp() && self.mlp_hidden == 0 {
            return fail("mlp_hidden must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.neg_samples == 0 {
            return fail("neg_samples must be at least 1");
        }
        if self.workers == 0 {
            return fail("workers must be at least 1");
        }
        for (name, lr) in [("lr_shallow", self.lr_shallow), ("lr_dense", self.lr_dense)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    pub fn rates(&self) -> LearningRates {
        LearningRates {
            shallow: self.lr_shallow,
            dense: self.lr_dense,
        }
    }

    /// Model shape for a store with `num_relations` original relations.
    pub fn model_config(
        &self,
        num_entities: usize,
        num_relations: usize,
        features: Features<'_>,
    ) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            decoder: self.decoder,
            dim: self.dim,
            hidden: if self.variant.uses_mlp() { self.mlp_hidden } else { 0 },
            entity_feature_dim: features.entity.cols(),
            relation_feature_dim: features.relation.cols(),
            num_entities,
            num_relations: if self.inverse_relations { 2 * num_relations } else { num_relations },
            relation_feature_rows: num_relations,
        }
    }
}

/// `(log-sum-exp(s) - s[0], softmax(s))` in `f64`, class 0 being the truth.
pub fn softmax_cross_entropy<T: Real>(scores: &[T]) -> (f64, Vec<f64>) {
    let m = scores.iter().map(|s| s.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scores.iter().map(|s| (s.as_f64() - m).exp()).sum();
    let lse = m + sum.ln();
    let probs = scores.iter().map(|s| (s.as_f64() - lse).exp()).collect();
    (lse - scores[0].as_f64(), probs)
}

pub(crate) fn batch_loss<T: Real, S: ShallowLookup<T>>(
    config: &ModelConfig,
    entity_encoder: &EncoderParams<T>,
    relation_encoder: &EncoderParams<T>,
    entity_shallow: &S,
    relation_shallow: &S,
    features: Features<'_>,
    batch: &[Triple],
    negatives: &[Vec<u32>],
) -> (f64, Gradients<T>) {
    let candidates: Vec<Vec<u32>> = batch
        .iter()
        .zip(negatives)
        .map(|(t, neg)| std::iter::once(t.tail).chain(neg.iter().copied()).collect())
        .collect();
    let encoded = forward_parts(
        config,
        entity_encoder,
        relation_encoder,
        entity_shallow,
        relation_shallow,
        features,
        batch.iter().zip(&candidates).map(|(t, c)| (t.head, t.rel, c.as_slice())),
    );
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let dscores: Vec<Vec<T>> = batch
        .iter()
        .zip(&candidates)
        .map(|(t, c)| {
            let (l, probs) = softmax_cross_entropy(&encoded.scores(t.head, t.rel, c));
            loss += l;
            probs
                .iter()
                .enumerate()
                .map(|(j, p)| T::from_f64((p - if j == 0 { 1.0 } else { 0.0 }) * scale))
                .collect()
        })
        .collect();
    let grads = encoded.backward(
        entity_encoder,
        relation_encoder,
        batch
            .iter()
            .zip(&candidates)
            .zip(&dscores)
            .map(|((t, c), d)| (t.head, t.rel, c.as_slice(), d.as_slice())),
    );
    (loss * scale, grads)
}

/// Mean sampled-softmax cross-entropy over `batch` and its gradients.
pub fn loss_and_grads<T: Real>(
    model: &ModelParams<T>,
    features: Features<'_>,
    batch: &[Triple],
    negatives: &[Vec<u32>],
) -> Result<(f64, Gradients<T>)> {
    model.check_features(features)?;
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty training batch".into()));
    }
    if negatives.len() != batch.len() {
        return Err(Error::Dimension(format!(
            "{} negative lists for {} positives",
            negatives.len(),
            batch.len()
        )));
    }
    let c = &model.config;
    for t in batch {
        let bad_entity = [t.head, t.tail]
            .into_iter()
            .chain(negatives.iter().flatten().copied())
            .find(|&e| e as usize >= c.num_entities);
        if let Some(e) = bad_entity {
            return Err(Error::InvalidId {
                kind: "entity",
                id: e as u64,
                count: c.num_entities,
            });
        }
        if t.rel as usize >= c.num_relations {
            return Err(Error::InvalidId {
                kind: "relation",
                id: t.rel as u64,
                count: c.num_relations,
            });
        }
    }
    Ok(batch_loss(
        c,
        &model.entity_encoder,
        &model.relation_encoder,
        &model.entity_shallow,
        &model.relation_shallow,
        features,
        batch,
        negatives,
    ))
}

/// Mini-batch loop state, reusable for training and finetuning.
pub struct Trainer<'a> {
    pub config: TrainConfig,
    features: Features<'a>,
    model: ModelParams<f32>,
    state: OptimizerState<f32>,
    rng: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    /// Fresh optimizer state over `model`; batch order and negatives are
    /// drawn from a stream seeded by `config.seed`.
    pub fn new(model: ModelParams<f32>, features: Features<'a>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        model.check_features(features)?;
        let state = OptimizerState::new(&model);
        Ok(Trainer {
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x005e_ed0f_7a1e),
            config,
            features,
            model,
            state,
        })
    }

    pub fn model(&self) -> &ModelParams<f32> {
        &self.model
    }

    pub fn into_model(self) -> ModelParams<f32> {
        self.model
    }

    /// Optimizer steps taken so far.
    pub fn steps(&self) -> u64 {
        self.state.step
    }

    /// One optimizer step on `batch`; returns its loss.
    pub fn step(&mut self, batch: &[Triple], negatives: &[Vec<u32>]) -> Result<f64> {
        let (loss, grads) = loss_and_grads(&self.model, self.features, batch, negatives)?;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!(
                "loss {loss} at step {}",
                self.state.step + 1
            )));
        }
        apply_update(&mut self.state, &mut self.model, &grads, self.config.rates())
            .map_err(|e| Error::Diverged(e.to_string()))?;
        Ok(loss)
    }

    /// One shuffled pass over `triples`. `after_step` sees the step count and
    /// the batch loss after every optimizer step (single-writer mode only).
    pub fn run_epoch(
        &mut self,
        triples: &[Triple],
        mut after_step: impl FnMut(&Self, u64, f64) -> Result<()>,
    ) -> Result<Vec<f64>> {
        let mut order = triples.to_vec();
        order.shuffle(&mut self.rng);
        let batches: Vec<(&[Triple], u64)> = order
            .chunks(self.config.batch_size)
            .map(|b| (b, self.rng.random::<u64>()))
            .collect();
        let (n, num_entities) = (self.config.neg_samples, self.model.config.num_entities);
        let negatives = |batch: &[Triple], seed: u64| {
            sample_negatives(&mut ChaCha8Rng::seed_from_u64(seed), batch, n, num_entities)
        };
        match self.config.mode {
            UpdateMode::SingleWriter => {
                let mut losses = Vec::with_capacity(batches.len());
                for (batch, seed) in batches {
                    let neg = negatives(batch, seed)?;
                    let loss = self.step(batch, &neg)?;
                    losses.push(loss);
                    after_step(self, self.state.step, loss)?;
                }
                Ok(losses)
            }
            UpdateMode::Hogwild => {
                let prepared = batches
                    .into_iter()
                    .map(|(b, seed)| Ok((b, negatives(b, seed)?)))
                    .collect::<Result<Vec<_>>>()?;
                hogwild::run_epoch(
                    &mut self.model,
                    &mut self.state,
                    self.features,
                    &prepared,
                    self.config.rates(),
                    self.config.workers,
                )
            }
        }
    }
}

/// One validation record of the metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub step: u64,
    /// Mean batch loss since the previous entry; `None` if no step ran.
    pub loss: Option<f64>,
    pub valid_mrr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation MRR.
    pub model: ModelParams<f32>,
    pub best_mrr: f64,
    pub metrics: Vec<MetricEntry>,
}

/// Trains a fresh model on `store` (original relations only; inverses are
/// added here when configured) and keeps the best-validation parameters.
pub fn train(
    store: &TripleStore,
    features: Features<'_>,
    config: &TrainConfig,
    valid: &CandidateSet,
) -> Result<TrainOutcome> {
    config.validate()?;
    if valid.is_empty() || !valid.has_truth() {
        return Err(Error::InvalidArgument(
            "validation set must be non-empty with truth indices".into(),
        ));
    }
    if features.entity.rows() != store.num_entities() {
        return Err(Error::Dimension(format!(
            "entity features have {} rows, store has {} entities",
            features.entity.rows(),
            store.num_entities()
        )));
    }
    if features.relation.rows() != store.num_relations() {
        return Err(Error::Dimension(format!(
            "relation features have {} rows, store has {} relations",
            features.relation.rows(),
            store.num_relations()
        )));
    }
    valid.validate(store.num_entities(), store.num_relations())?;
    let training_store = if config.inverse_relations {
        store.add_inverse_relations()
    } else {
        store.clone()
    };
    let model_config = config.model_config(store.num_entities(), store.num_relations(), features);
    let model = ModelParams::init(model_config, &mut ChaCha8Rng::seed_from_u64(config.seed))?;
    let mut trainer = Trainer::new(model, features, config.clone())?;

    let evaluate = |model: &ModelParams<f32>| -> Result<f64> {
        mrr(&predict(model, features, valid)?, valid, TieBreak::Optimistic)
    };
    let mut metrics = Vec::new();
    let mut best: Option<(f64, ModelParams<f32>)> = None;
    let mut pending: Vec<f64> = Vec::new();
    let mut record = |model: &ModelParams<f32>, step: u64, pending: &mut Vec<f64>| -> Result<()> {
        let valid_mrr = evaluate(model)?;
        let loss = (!pending.is_empty()).then(|| pending.iter().sum::<f64>() / pending.len() as f64);
        pending.clear();
        metrics.push(MetricEntry { step, loss, valid_mrr });
        if best.as_ref().is_none_or(|(b, _)| valid_mrr > *b) {
            best = Some((valid_mrr, model.clone()));
        }
        Ok(())
    };

    let every = config.eval_every as u64;
    let mut last_eval = None;
    for _ in 0..config.epochs {
        let losses = trainer.run_epoch(training_store.triples(), |t, step, loss| {
            pending.push(loss);
            if every > 0 && step % every == 0 {
                record(t.model(), step, &mut pending)?;
                last_eval = Some(step);
            }
            Ok(())
        })?;
        if config.mode == UpdateMode::Hogwild {
            pending.extend(losses);
        }
        if every == 0 || config.mode == UpdateMode::Hogwild {
            record(trainer.model(), trainer.steps(), &mut pending)?;
            last_eval = Some(trainer.steps());
        }
    }
    if last_eval != Some(trainer.steps()) {
        record(trainer.model(), trainer.steps(), &mut pending)?;
    }
    let (best_mrr, model) = best.expect("at least one evaluation");
    Ok(TrainOutcome {
        model,
        best_mrr,
        metrics,
    })
}

/// Runs [`train`] and writes the best checkpoint plus `metrics.jsonl` into `out`.
pub fn train_to_dir(
    store: &TripleStore,
    features: Features<'_>,
    config: &TrainConfig,
    valid: &CandidateSet,
    out: &Path,
) -> Result<TrainOutcome> {
    let outcome = train(store, features, config, valid)?;
    save_checkpoint(out, &outcome.model, config.inverse_relations, serde_json::to_value(config)?)?;
    write_metrics(&out.join("metrics.jsonl"), &outcome.metrics)?;
    Ok(outcome)
}

pub fn write_metrics(path: &Path, metrics: &[MetricEntry]) -> Result<()> {
    let mut buf = Vec::new();
    for m in metrics {
        serde_json::to_writer(&mut buf, m)?;
        buf.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}
