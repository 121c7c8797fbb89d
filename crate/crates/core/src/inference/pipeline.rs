use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distill::{distill, DistillConfig};
use super::ensemble::ensemble_average;
use super::metrics::{mrr, TieBreak};
use super::scores::{predict, ScoreMatrix};
use crate::candidates::CandidateSet;
use crate::error::{Error, Result};
use crate::graph::{Triple, TripleStore};
use crate::model::{Features, ModelParams};
use crate::rules::{augment, RuleSet};
use crate::training::{TrainConfig, Trainer};

/// Settings of the staged inference loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    /// Optimizer settings for the stage-0 finetune; `epochs` is ignored.
    pub finetune: TrainConfig,
    /// Passes over the rule-generated triples during the stage-0 finetune.
    pub finetune_epochs: usize,
    pub rule_threshold: f64,
    pub distill: DistillConfig,
    pub tie_break: TieBreak,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            finetune: TrainConfig::default(),
            finetune_epochs: 1,
            rule_threshold: 0.95,
            distill: DistillConfig::default(),
            tie_break: TieBreak::Optimistic,
        }
    }
}

/// Per-stage evaluation, one row of the stage table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub single_mrr: Vec<f64>,
    pub single_mrr_mean: f64,
    pub single_mrr_best: f64,
    pub ensemble_mrr: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub reports: Vec<StageReport>,
    /// Triples added by rule augmentation, inverse mirrors excluded.
    pub rule_triples: usize,
    /// Final-stage ensemble over the evaluation candidates.
    pub eval_scores: ScoreMatrix,
    /// Final-stage ensemble over the test candidates.
    pub test_scores: ScoreMatrix,
    pub models: Vec<ModelParams<f32>>,
}

/// Rule-generated triples a model can train on, with inverse mirrors when the
/// model has inverse relations. `base` counts the original relations.
pub fn finetune_triples(added: &[Triple], base: u32, model_relations: usize) -> Vec<Triple> {
    let with_inverse = model_relations as u32 >= 2 * base;
    let mut out = BTreeSet::new();
    for t in added {
        if with_inverse {
            out.insert(*t);
            let mirror = if t.rel < base { t.rel + base } else { t.rel - base };
            out.insert(Triple::new(t.tail, mirror, t.head));
        } else if t.rel < base {
            out.insert(*t);
        }
    }
    out.into_iter().collect()
}

struct Evaluated {
    report: StageReport,
    eval_scores: ScoreMatrix,
    test_scores: ScoreMatrix,
}

fn evaluate(
    stage: usize,
    models: &[ModelParams<f32>],
    features: Features<'_>,
    eval: &CandidateSet,
    test: &CandidateSet,
    tie: TieBreak,
) -> Result<Evaluated> {
    let both = eval.concat(test);
    let predictions: Vec<ScoreMatrix> = models.iter().map(|m| predict(m, features, &both)).collect::<Result<_>>()?;
    let split = |m: &ScoreMatrix| -> Result<(ScoreMatrix, ScoreMatrix)> {
        let rows: Vec<Vec<f32>> = m.rows().map(<[f32]>::to_vec).collect();
        let (e, t) = rows.split_at(eval.len());
        Ok((ScoreMatrix::from_rows(e.to_vec())?, ScoreMatrix::from_rows(t.to_vec())?))
    };
    let mut single_eval = Vec::with_capacity(models.len());
    for p in &predictions {
        single_eval.push(split(p)?.0);
    }
    let single_mrr: Vec<f64> = single_eval.iter().map(|s| mrr(s, eval, tie)).collect::<Result<_>>()?;
    let ensemble = ensemble_average(&predictions)?;
    let (eval_scores, test_scores) = split(&ensemble)?;
    let ensemble_mrr = mrr(&eval_scores, eval, tie)?;
    Ok(Evaluated {
        report: StageReport {
            stage,
            single_mrr_mean: single_mrr.iter().sum::<f64>() / single_mrr.len() as f64,
            single_mrr_best: single_mrr.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            single_mrr,
            ensemble_mrr,
        },
        eval_scores,
        test_scores,
    })
}

/// Stage 0 augments the inverse-augmented training store with `rules`,
/// finetunes every model on the new triples, and ensembles the predictions.
/// Each later stage distills the previous ensemble (over evaluation and test
/// candidates) into every model and ensembles again. MRR is measured on
/// `eval`, which must carry truth indices.
pub fn run_pipeline(
    models: Vec<ModelParams<f32>>,
    rules: &RuleSet,
    store: &TripleStore,
    features: Features<'_>,
    eval: &CandidateSet,
    test: &CandidateSet,
    options: &PipelineOptions,
) -> Result<PipelineOutput> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("pipeline needs at least one model".into()));
    }
    if eval.is_empty() || !eval.has_truth() {
        return Err(Error::InvalidArgument(
            "evaluation candidates must be non-empty with truth indices".into(),
        ));
    }
    options.distill.validate()?;
    let base = store.num_relations() as u32;
    let inverse = store.add_inverse_relations();
    let (augmented, _) = augment(&inverse, rules, options.rule_threshold)?;
    let added: Vec<Triple> = augmented.triples()[inverse.len()..].to_vec();
    let rule_triples = finetune_triples(&added, base, 2 * base as usize)
        .iter()
        .filter(|t| t.rel < base)
        .count();

    let mut models = models
        .into_iter()
        .enumerate()
        .map(|(i, model)| {
            let triples = finetune_triples(&added, base, model.config.num_relations);
            if triples.is_empty() || options.finetune_epochs == 0 {
                return Ok(model);
            }
            let config = TrainConfig {
                seed: options.finetune.seed.wrapping_add(i as u64),
                ..options.finetune.clone()
            };
            let mut trainer = Trainer::new(model, features, config)?;
            for _ in 0..options.finetune_epochs {
                trainer.run_epoch(&triples, |_, _, _| Ok(()))?;
            }
            Ok(trainer.into_model())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut current = evaluate(0, &models, features, eval, test, options.tie_break)?;
    let mut reports = vec![current.report.clone()];
    let both = eval.concat(test);
    for stage in 1..=options.distill.stages {
        let teacher = ScoreMatrix::from_rows(
            current
                .eval_scores
                .rows()
                .chain(current.test_scores.rows())
                .map(<[f32]>::to_vec)
                .collect(),
        )?;
        models = models
            .into_par_iter()
            .enumerate()
            .map(|(i, model)| {
                let config = DistillConfig {
                    seed: options
                        .distill
                        .seed
                        .wrapping_add((stage as u64) << 32)
                        .wrapping_add(i as u64),
                    ..options.distill.clone()
                };
                distill(model, &teacher, &both, features, &config).map(|o| o.model)
            })
            .collect::<Result<Vec<_>>>()?;
        current = evaluate(stage, &models, features, eval, test, options.tie_break)?;
        reports.push(current.report.clone());
    }
    Ok(PipelineOutput {
        reports,
        rule_triples,
        eval_scores: current.eval_scores,
        test_scores: current.test_scores,
        models,
    })
}
