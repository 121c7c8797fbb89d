use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scores::ScoreMatrix;
use crate::candidates::CandidateSet;
use crate::error::{Error, Result};
use crate::model::{Features, ModelParams};
use crate::training::{apply_update, LearningRates, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub temperature: f64,
    /// Optimizer steps per distillation run.
    pub steps: usize,
    /// Queries per step.
    pub batch_size: usize,
    pub lr_shallow: f64,
    pub lr_dense: f64,
    /// Ensemble-then-distill rounds after stage 0 in the pipeline.
    pub stages: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            temperature: 1.0,
            steps: 100,
            batch_size: 256,
            lr_shallow: 0.1,
            lr_dense: 1e-4,
            stages: 3,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("distillation batch_size must be at least 1".into()));
        }
        for (name, lr) in [("lr_shallow", self.lr_shallow), ("lr_dense", self.lr_dense)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

fn log_softmax(logits: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let m = logits.clone().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.clone().map(|v| (v - m).exp()).sum::<f64>().ln();
    logits.map(|v| v - lse).collect()
}

/// `KL(softmax(teacher / τ) || softmax(student / τ))` and its gradient with
/// respect to the student logits, `(p_student - p_teacher) / τ`.
pub fn distill_loss(student: &[f32], teacher: &[f32], temperature: f64) -> (f64, Vec<f64>) {
    let ls = log_softmax(student.iter().map(|&v| v as f64 / temperature));
    let lt = log_softmax(teacher.iter().map(|&v| v as f64 / temperature));
    let mut loss = 0.0;
    let grad = ls
        .iter()
        .zip(&lt)
        .map(|(s, t)| {
            let pt = t.exp();
            if pt > 0.0 {
                loss += pt * (t - s);
            }
            (s.exp() - pt) / temperature
        })
        .collect();
    (loss.max(0.0), grad)
}

#[derive(Debug, Clone)]
pub struct DistillOutcome {
    pub model: ModelParams<f32>,
    /// Mean loss of every step, before its update.
    pub losses: Vec<f64>,
}

/// Trains `student` to match the teacher's per-query candidate distribution.
/// Queries are visited in shuffled passes of `batch_size`; truth labels are
/// not used.
pub fn distill(
    student: ModelParams<f32>,
    teacher: &ScoreMatrix,
    candidates: &CandidateSet,
    features: Features<'_>,
    config: &DistillConfig,
) -> Result<DistillOutcome> {
    config.validate()?;
    teacher.check_aligned(candidates)?;
    student.check_features(features)?;
    candidates.validate(student.config.num_entities, student.config.num_relations)?;
    let mut model = student;
    let mut losses = Vec::with_capacity(config.steps);
    if candidates.is_empty() {
        return Ok(DistillOutcome { model, losses });
    }
    let rates = LearningRates {
        shallow: config.lr_shallow,
        dense: config.lr_dense,
    };
    let mut state = OptimizerState::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    let mut cursor = order.len();
    let batch_size = config.batch_size.min(order.len());
    for step in 0..config.steps {
        let mut batch = Vec::with_capacity(batch_size);
        while batch.len() < batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let queries: Vec<_> = batch.iter().map(|&q| &candidates.queries[q]).collect();
        let encoded = model.forward(
            features,
            queries.iter().map(|q| (q.head, q.rel, q.candidates.as_slice())),
        );
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let dscores: Vec<Vec<f32>> = batch
            .iter()
            .zip(&queries)
            .map(|(&qi, q)| {
                let s = encoded.scores(q.head, q.rel, &q.candidates);
                let (l, g) = distill_loss(&s, teacher.row(qi), config.temperature);
                loss += l;
                g.into_iter().map(|v| (v * scale) as f32).collect()
            })
            .collect();
        loss *= scale;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("distillation loss {loss} at step {}", step + 1)));
        }
        let grads = encoded.backward(
            &model.entity_encoder,
            &model.relation_encoder,
            queries
                .iter()
                .zip(&dscores)
                .map(|(q, d)| (q.head, q.rel, q.candidates.as_slice(), d.as_slice())),
        );
        drop(encoded);
        apply_update(&mut state, &mut model, &grads, rates).map_err(|e| Error::Diverged(e.to_string()))?;
        losses.push(loss);
    }
    Ok(DistillOutcome { model, losses })
}
