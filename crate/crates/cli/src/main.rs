//! `kglp`: command-line front end for the link prediction pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use kglp_core::inference::{
    distill, ensemble_average, mrr, predict, run_pipeline, DistillConfig, PipelineOptions, ScoreMatrix, TieBreak,
};
use kglp_core::io::{load_triples, read_json, save_triples, write_json};
use kglp_core::model::{load_checkpoint, save_checkpoint, Features, ModelParams};
use kglp_core::rules::{augment, merge_rulesets, mine_rules, RuleSet};
use kglp_core::synthetic::{generate_synthetic, SyntheticSpec};
use kglp_core::training::{train_to_dir, TrainConfig, UpdateMode};
use kglp_core::{CandidateSet, FeatureMatrix, Triple};

const EXIT_USAGE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "kglp", version, about = "Knowledge graph link prediction: train, mine rules, ensemble, distill")]
struct Cli {
    /// Force single-writer updates everywhere so reruns are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic rule-governed benchmark directory.
    Prepare(PrepareArgs),
    /// Train one model and keep the best validation checkpoint.
    Train(TrainArgs),
    /// Mine chain rules from subgraph slices and merge them.
    Mine(MineArgs),
    /// Add the triples predicted by high-confidence rules.
    ApplyRules(ApplyRulesArgs),
    /// Score candidates with a model, or evaluate a score file, and print MRR.
    Eval(EvalArgs),
    /// Average several score files.
    Ensemble(EnsembleArgs),
    /// Distill teacher scores into a model.
    Distill(DistillArgs),
    /// Rule augmentation, finetuning, then repeated ensembling and distillation.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct FeatureArgs {
    #[arg(long)]
    entity_feat: PathBuf,
    #[arg(long)]
    rel_feat: PathBuf,
}

impl FeatureArgs {
    fn load(&self) -> Result<(FeatureMatrix, FeatureMatrix)> {
        Ok((FeatureMatrix::load(&self.entity_feat)?, FeatureMatrix::load(&self.rel_feat)?))
    }
}

#[derive(Args)]
struct PrepareArgs {
    /// JSON synthetic spec; defaults apply to missing keys.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the spec seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long)]
    valid: PathBuf,
    /// JSON training config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MineArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long, default_value_t = 1)]
    subgraphs: usize,
    /// Triples per subgraph slice; defaults to the whole graph.
    #[arg(long)]
    slice_len: Option<usize>,
    #[arg(long, default_value_t = 2)]
    min_support: usize,
    #[arg(long, default_value_t = 0.0)]
    min_conf: f64,
    /// Mine on the graph as given instead of adding inverse relations first.
    #[arg(long)]
    no_inverse: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ApplyRulesArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    candidates: PathBuf,
    /// Score file to evaluate.
    #[arg(long, conflicts_with = "model")]
    scores: Option<PathBuf>,
    /// Checkpoint directory to score the candidates with.
    #[arg(long, requires_all = ["entity_feat", "rel_feat"])]
    model: Option<PathBuf>,
    #[arg(long)]
    entity_feat: Option<PathBuf>,
    #[arg(long)]
    rel_feat: Option<PathBuf>,
    /// Where to write the model's scores.
    #[arg(long, requires = "model")]
    scores_out: Option<PathBuf>,
    #[arg(long, default_value = "optimistic")]
    tie_break: TieBreak,
}

#[derive(Args)]
struct EnsembleArgs {
    /// Comma-separated score files.
    #[arg(long, value_delimiter = ',', required = true)]
    scores: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DistillArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    teacher: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
    /// JSON distillation config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON pipeline config; flags below override its paths.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated checkpoint directories.
    #[arg(long, value_delimiter = ',')]
    models: Vec<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    stages: Option<usize>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    entity_feat: Option<PathBuf>,
    #[arg(long)]
    rel_feat: Option<PathBuf>,
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Everything `pipeline` needs, as one JSON document.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PipelineConfig {
    finetune: TrainConfig,
    finetune_epochs: Option<usize>,
    rule_threshold: Option<f64>,
    distill: DistillConfig,
    tie_break: TieBreak,
    models: Vec<PathBuf>,
    rules: Option<PathBuf>,
    train: Option<PathBuf>,
    entity_features: Option<PathBuf>,
    relation_features: Option<PathBuf>,
    valid: Option<PathBuf>,
    test: Option<PathBuf>,
}

fn read_config<T: Default + serde::de::DeserializeOwned>(path: Option<&Path>) -> Result<T> {
    Ok(match path {
        Some(p) => read_json(p)?,
        None => T::default(),
    })
}

fn print_json(value: serde_json::Value) {
    println!("{value}");
}

/// Sizes the global pool from `KGLP_THREADS`, else from `workers`.
fn init_pool(workers: Option<usize>) -> Result<()> {
    let threads = match std::env::var("KGLP_THREADS") {
        Ok(v) => Some(
            v.parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| kglp_core::Error::InvalidArgument(format!("KGLP_THREADS={v:?} is not a positive integer")))?,
        ),
        Err(_) => workers,
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    Ok(())
}

fn cmd_prepare(args: &PrepareArgs) -> Result<()> {
    init_pool(None)?;
    let mut spec: SyntheticSpec = read_config(args.spec.as_deref())?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let data = generate_synthetic(&spec)?;
    data.save(&args.out)?;
    print_json(json!({
        "triples": data.full.len(),
        "train": data.train.len(),
        "valid": data.valid.len(),
        "test": data.test.len(),
    }));
    Ok(())
}

fn cmd_train(args: &TrainArgs, deterministic: bool) -> Result<()> {
    let mut config: TrainConfig = read_config(args.config.as_deref())?;
    if deterministic {
        config.mode = UpdateMode::SingleWriter;
    }
    init_pool(Some(config.workers))?;
    let store = load_triples(&args.train)?;
    let (ef, rf) = args.features.load()?;
    let valid = CandidateSet::load(&args.valid)?;
    let features = Features { entity: &ef, relation: &rf };
    let outcome = train_to_dir(&store, features, &config, &valid, &args.out)?;
    print_json(json!({
        "best_mrr": outcome.best_mrr,
        "evaluations": outcome.metrics.len(),
        "steps": outcome.metrics.last().map(|m| m.step).unwrap_or(0),
    }));
    Ok(())
}

fn cmd_mine(args: &MineArgs) -> Result<()> {
    init_pool(None)?;
    if !(0.0..=1.0).contains(&args.min_conf) {
        bail!(kglp_core::Error::InvalidArgument(format!("min-conf {} outside [0, 1]", args.min_conf)));
    }
    let store = load_triples(&args.train)?;
    let slice_len = args.slice_len.unwrap_or(store.len());
    let sets: Vec<RuleSet> = if store.is_empty() {
        Vec::new()
    } else {
        store
            .sample_subgraphs(args.subgraphs, slice_len)?
            .iter()
            .map(|s| {
                let s = if args.no_inverse { s.clone() } else { s.add_inverse_relations() };
                mine_rules(&s, args.min_support, args.min_conf)
            })
            .collect()
    };
    let merged = merge_rulesets(&sets);
    merged.save(&args.out)?;
    print_json(json!({
        "subgraph_rules": sets.iter().map(RuleSet::len).collect::<Vec<_>>(),
        "rules": merged.len(),
    }));
    Ok(())
}

/// Maps triples over inverse ids `r + R` back to `(h, r, t)` form.
fn fold_inverse(triples: impl IntoIterator<Item = Triple>, base: u32) -> Vec<Triple> {
    triples
        .into_iter()
        .map(|t| if t.rel < base { t } else { Triple::new(t.tail, t.rel - base, t.head) })
        .collect()
}

fn cmd_apply_rules(args: &ApplyRulesArgs) -> Result<()> {
    init_pool(None)?;
    let store = load_triples(&args.train)?;
    let rules = RuleSet::load(&args.rules)?;
    let base = store.num_relations() as u32;
    let inverse = store.add_inverse_relations();
    let (augmented, _) = augment(&inverse, &rules, args.threshold)?;
    let new = fold_inverse(augmented.triples()[inverse.len()..].iter().copied(), base);
    let out = store.with_triples(new)?;
    save_triples(&args.out, &out)?;
    print_json(json!({"added": out.len() - store.len(), "triples": out.len()}));
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    init_pool(None)?;
    let candidates = CandidateSet::load(&args.candidates)?;
    let scores = match (&args.scores, &args.model) {
        (Some(path), None) => ScoreMatrix::load(path)?,
        (None, Some(dir)) => {
            let (model, _) = load_checkpoint(dir)?;
            let ef = FeatureMatrix::load(args.entity_feat.as_ref().expect("required by clap"))?;
            let rf = FeatureMatrix::load(args.rel_feat.as_ref().expect("required by clap"))?;
            let scores = predict(&model, Features { entity: &ef, relation: &rf }, &candidates)?;
            if let Some(out) = &args.scores_out {
                scores.save(out)?;
            }
            scores
        }
        _ => bail!(kglp_core::Error::InvalidArgument("pass exactly one of --scores or --model".into())),
    };
    if candidates.has_truth() && !candidates.is_empty() {
        print_json(json!({"mrr": mrr(&scores, &candidates, args.tie_break)?}));
    } else {
        scores.check_aligned(&candidates)?;
        print_json(json!({"mrr": null, "queries": candidates.len()}));
    }
    Ok(())
}

fn cmd_ensemble(args: &EnsembleArgs) -> Result<()> {
    let matrices = args.scores.iter().map(|p| ScoreMatrix::load(p)).collect::<kglp_core::Result<Vec<_>>>()?;
    let out = ensemble_average(&matrices)?;
    out.save(&args.out)?;
    print_json(json!({"models": matrices.len(), "queries": out.n_queries()}));
    Ok(())
}

fn cmd_distill(args: &DistillArgs) -> Result<()> {
    init_pool(None)?;
    let config: DistillConfig = read_config(args.config.as_deref())?;
    let (model, meta) = load_checkpoint(&args.model)?;
    let teacher = ScoreMatrix::load(&args.teacher)?;
    let candidates = CandidateSet::load(&args.candidates)?;
    let (ef, rf) = args.features.load()?;
    let outcome = distill(model, &teacher, &candidates, Features { entity: &ef, relation: &rf }, &config)?;
    save_checkpoint(&args.out, &outcome.model, meta.inverse_relations, meta.train_config)?;
    print_json(json!({
        "steps": outcome.losses.len(),
        "final_loss": outcome.losses.last(),
    }));
    Ok(())
}

fn required(path: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.ok_or_else(|| {
        kglp_core::Error::InvalidArgument(format!("missing {what}: pass the flag or set it in the pipeline config")).into()
    })
}

fn cmd_pipeline(args: &PipelineArgs, deterministic: bool) -> Result<()> {
    let mut config: PipelineConfig = read_config(args.config.as_deref())?;
    if deterministic {
        config.finetune.mode = UpdateMode::SingleWriter;
    }
    init_pool(Some(config.finetune.workers))?;
    let defaults = PipelineOptions::default();
    let mut options = PipelineOptions {
        finetune: config.finetune.clone(),
        finetune_epochs: config.finetune_epochs.unwrap_or(defaults.finetune_epochs),
        rule_threshold: config.rule_threshold.unwrap_or(defaults.rule_threshold),
        distill: config.distill.clone(),
        tie_break: config.tie_break,
    };
    if let Some(stages) = args.stages {
        options.distill.stages = stages;
    }
    let model_dirs = if args.models.is_empty() { config.models.clone() } else { args.models.clone() };
    if model_dirs.is_empty() {
        bail!(kglp_core::Error::InvalidArgument("no models given".into()));
    }
    let store = load_triples(&required(args.train.clone().or(config.train.clone()), "--train")?)?;
    let ef = FeatureMatrix::load(&required(args.entity_feat.clone().or(config.entity_features.clone()), "--entity-feat")?)?;
    let rf = FeatureMatrix::load(&required(args.rel_feat.clone().or(config.relation_features.clone()), "--rel-feat")?)?;
    let valid = CandidateSet::load(&required(args.valid.clone().or(config.valid.clone()), "--valid")?)?;
    let test = match args.test.clone().or(config.test.clone()) {
        Some(p) => CandidateSet::load(&p)?,
        None => CandidateSet::default(),
    };
    let rules = match args.rules.clone().or(config.rules.clone()) {
        Some(p) => RuleSet::load(&p)?,
        None => RuleSet::default(),
    };
    let mut models: Vec<ModelParams<f32>> = Vec::new();
    let mut metas = Vec::new();
    for dir in &model_dirs {
        let (m, meta) = load_checkpoint(dir)?;
        models.push(m);
        metas.push(meta);
    }
    let features = Features { entity: &ef, relation: &rf };
    let output = run_pipeline(models, &rules, &store, features, &valid, &test, &options)?;

    let out = &args.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("report.json"), &output.reports)?;
    output.eval_scores.save(&out.join("valid_scores.f32"))?;
    output.test_scores.save(&out.join("test_scores.f32"))?;
    for (i, (model, meta)) in output.models.iter().zip(metas).enumerate() {
        save_checkpoint(&out.join(format!("model_{i}")), model, meta.inverse_relations, meta.train_config)?;
    }
    let last = output.reports.last().expect("stage 0 always reported");
    print_json(json!({
        "stages": output.reports.len(),
        "rule_triples": output.rule_triples,
        "single_mrr_mean": last.single_mrr_mean,
        "ensemble_mrr": last.ensemble_mrr,
    }));
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a, cli.deterministic),
        Command::Mine(a) => cmd_mine(a),
        Command::ApplyRules(a) => cmd_apply_rules(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ensemble(a) => cmd_ensemble(a),
        Command::Distill(a) => cmd_distill(a),
        Command::Pipeline(a) => cmd_pipeline(a, cli.deterministic),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<kglp_core::Error>() {
        Some(e) if e.is_validation() => EXIT_VALIDATION,
        Some(_) => EXIT_RUNTIME,
        None if err.downcast_ref::<serde_json::Error>().is_some() => EXIT_VALIDATION,
        None => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("{}", json!({"error": format!("{err:#}"), "exit_code": code}));
            ExitCode::from(code)
        }
    }
}
