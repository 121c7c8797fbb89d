//! Candidate scoring, ensembling, distillation and evaluation.

mod distill;
mod ensemble;
mod metrics;
mod pipeline;
mod scores;

pub use distill::{distill, distill_loss, DistillConfig, DistillOutcome};
pub use ensemble::ensemble_average;
pub use metrics::{mrr, rank_of, TieBreak};
pub use pipeline::{finetune_triples, run_pipeline, PipelineOptions, PipelineOutput, StageReport};
pub use scores::{predict, ScoreMatrix};
