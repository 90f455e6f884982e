//! The pipeline commands behind the binary.
//!
//! File layout: `preprocess` writes `train.json`, `test.json` and
//! `stats.tsv` into `data_dir`; `train` writes `<stage>.json` and
//! `<stage>.history.tsv` into `checkpoint_dir`; `evaluate` writes its report
//! to `out`, or `checkpoint_dir/report.tsv` when `out` is unset.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use arnn_core::batch::MiniBatch;
use arnn_core::data::{holdout_validation, preprocess as run_preprocess, Attributes, FieldSchema};
use arnn_core::eval::{evaluate_system, top_k, EvalReport, Inference, ItemKnnIndex};
use arnn_core::model::{ArnnModel, GruSessionModel, ModelConfig, PnnEncoder, SessionRecommender};
use arnn_core::nn::Mode;
use arnn_core::synth::{category_name, generate, item_name};
use arnn_core::train::{run_stage, Adagrad, Stage, StageError, StageOutcome, TrainPlan};
use arnn_core::Graph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{RunConfig, System};
use crate::error::{AppError, Result};
use crate::ingest::{read_events, write_events, EventLog};
use crate::report::{history_tsv, report_table, report_tsv, stats_block};
use crate::store::{
    file_hash, load_checkpoint, load_dataset, save_checkpoint, save_dataset, Checkpoint,
    Hyperparameters,
};

pub const TRAIN_FILE: &str = "train.json";
pub const TEST_FILE: &str = "test.json";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| AppError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| AppError::io(path, e))
}

fn say(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| AppError::io("<stdout>", e))
}

/// Writes a synthetic log (`events.tsv`) and its successor table
/// (`truth.tsv`) into `out`.
pub fn synth(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let dir = cfg
        .out
        .as_deref()
        .ok_or_else(|| AppError::Config("synth needs --out DIR".into()))?;
    let data = generate(&cfg.synth)?;
    create_dir(dir)?;
    let log = EventLog {
        fields: data.field_names.clone(),
        events: data.events.clone(),
    };
    write_events(&dir.join("events.tsv"), &log, cfg.dialect)?;
    let mut truth = String::from("item\tgoverning_field\tcategory\tnext_item\n");
    for (i, succ) in data.successors.iter().enumerate() {
        for (v, &next) in succ.iter().enumerate() {
            truth.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                item_name(i),
                data.field_names[data.governing_field(i)],
                category_name(v),
                item_name(next)
            ));
        }
    }
    write_file(&dir.join("truth.tsv"), &truth)?;
    let d = &data.declared;
    say(
        out,
        &format!(
            "users {}\titems {}\tsessions {}\ttransactions {}\tcontext fields {}\n",
            d.users, d.items, d.sessions, d.transactions, d.context_fields
        ),
    )
}

/// Sessionizes, samples and splits a raw log.
pub fn preprocess(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let input = cfg
        .input
        .as_deref()
        .ok_or_else(|| AppError::Config("preprocess needs an input log".into()))?;
    let mut log = read_events(input, cfg.dialect)?;
    log.events.sort_by_key(|e| e.timestamp);
    let pre = run_preprocess(log.events, &log.fields, &cfg.preprocess)?;
    create_dir(&cfg.data_dir)?;
    save_dataset(&cfg.data_dir.join(TRAIN_FILE), &pre.train)?;
    save_dataset(&cfg.data_dir.join(TEST_FILE), &pre.test)?;
    let block = stats_block(&pre.stats);
    write_file(&cfg.data_dir.join("stats.tsv"), &stats_tsv(&block))?;
    say(out, &block)
}

fn stats_tsv(block: &str) -> String {
    block
        .lines()
        .map(|l| {
            let (name, value) = l.split_at(16);
            format!("{}\t{}\n", name.trim(), value.trim())
        })
        .collect()
}

fn stage_seed(seed: u64, stage: Stage) -> u64 {
    let salt = match stage {
        Stage::GruPretrain => 1,
        Stage::PnnPretrain => 2,
        Stage::Merge => 3,
    };
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt)
}

pub fn checkpoint_path(cfg: &RunConfig, stage: Stage) -> PathBuf {
    cfg.checkpoint_dir.join(format!("{}.json", stage.name()))
}

/// Trains one stage and writes its checkpoint and history.
pub fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<PathBuf> {
    let stage = cfg
        .stage
        .ok_or_else(|| AppError::Config("train needs --stage gru|pnn|merge".into()))?;
    let parent_paths = [
        checkpoint_path(cfg, Stage::GruPretrain),
        checkpoint_path(cfg, Stage::PnnPretrain),
    ];
    if stage == Stage::Merge {
        for p in &parent_paths {
            if !p.is_file() {
                return Err(AppError::Prerequisite(format!(
                    "merge training needs {}",
                    p.display()
                )));
            }
        }
    }
    let data = load_dataset(&cfg.data_dir.join(TRAIN_FILE))?;
    let (train_set, validation) = holdout_validation(&data, cfg.validation_fraction)?;
    let schema = &data.schema;
    let learning_rate = cfg.learning_rate(stage);
    let plan = TrainPlan {
        stage,
        epochs: cfg.epochs,
        batch_lanes: cfg.batch_lanes,
        seed: cfg.seed,
        optimizer: Adagrad::new(learning_rate, cfg.weight_decay),
        patience: cfg.patience,
        eval_k: cfg.k,
    };
    let parents = match stage {
        Stage::Merge => Some((
            load_checkpoint(&parent_paths[0], Some(schema))?,
            load_checkpoint(&parent_paths[1], Some(schema))?,
        )),
        _ => None,
    };
    // Pretrained sizes come from the parents, not from the current profile.
    let model_config = match &parents {
        Some((g, p)) => ModelConfig {
            gru_hidden: g.hyperparameters.model.gru_hidden,
            gru_dropout: g.hyperparameters.model.gru_dropout,
            pnn_embedding: p.hyperparameters.model.pnn_embedding,
            pnn_hidden: p.hyperparameters.model.pnn_hidden,
            merge_hidden: cfg.model.merge_hidden,
        },
        None => cfg.model.clone(),
    };
    let hp = |best_epoch| Hyperparameters {
        profile: cfg.profile.name().into(),
        model: model_config.clone(),
        stage: stage.name().into(),
        seed: cfg.seed,
        epochs: cfg.epochs,
        best_epoch,
        batch_lanes: cfg.batch_lanes,
        learning_rate,
        weight_decay: cfg.weight_decay,
        patience: cfg.patience,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg.seed, stage));
    let m = &cfg.model;
    let path = checkpoint_path(cfg, stage);
    match stage {
        Stage::GruPretrain => {
            let model =
                GruSessionModel::new(&mut rng, schema.num_items(), m.gru_hidden, m.gru_dropout);
            let result = run_stage(&plan, model, &train_set, &validation);
            finish(cfg, stage, &path, result, out, |o| {
                Checkpoint::from_gru(&o.model, schema, hp(o.best_epoch))
            })
        }
        Stage::PnnPretrain => {
            let model = PnnEncoder::new(&mut rng, schema, m.pnn_embedding, m.pnn_hidden);
            let result = run_stage(&plan, model, &train_set, &validation);
            finish(cfg, stage, &path, result, out, |o| {
                Checkpoint::from_pnn(&o.model, schema, hp(o.best_epoch))
            })
        }
        Stage::Merge => {
            let (gru, pnn) = parents.expect("merge parents loaded");
            let (gru, pnn) = (gru.gru()?, pnn.pnn()?);
            let mut lineage = BTreeMap::new();
            for (block, p) in [("gru", &parent_paths[0]), ("pnn", &parent_paths[1])] {
                let name = p.file_name().map(|n| n.to_string_lossy().into_owned());
                lineage.insert(block.to_string(), (name.unwrap_or_default(), file_hash(p)?));
            }
            let model = ArnnModel::from_pretrained(&mut rng, pnn, gru, m.merge_hidden)?;
            let result = run_stage(&plan, model, &train_set, &validation);
            finish(cfg, stage, &path, result, out, |o| {
                let mut c = Checkpoint::from_arnn(&o.model, schema, hp(o.best_epoch));
                c.parents = lineage.clone();
                c
            })
        }
    }
}

fn finish<M>(
    cfg: &RunConfig,
    stage: Stage,
    path: &Path,
    result: std::result::Result<StageOutcome<M>, StageError<M>>,
    out: &mut dyn Write,
    to_checkpoint: impl Fn(&StageOutcome<M>) -> Checkpoint,
) -> Result<PathBuf> {
    let (outcome, diverged) = match result {
        Ok(o) => (o, None),
        Err(StageError::Diverged { epoch, outcome }) => (*outcome, Some(epoch)),
        Err(StageError::Failed(e)) => return Err(e.into()),
    };
    create_dir(&cfg.checkpoint_dir)?;
    save_checkpoint(path, &to_checkpoint(&outcome))?;
    let history = history_tsv(outcome.initial, &outcome.history, cfg.k);
    let history_path = cfg
        .checkpoint_dir
        .join(format!("{}.history.tsv", stage.name()));
    write_file(&history_path, &history)?;
    if let Some(epoch) = diverged {
        return Err(AppError::Diverged {
            epoch,
            checkpoint: path.to_path_buf(),
        });
    }
    say(out, &history)?;
    say(
        out,
        &format!(
            "best epoch {}; checkpoint {}\n",
            outcome.best_epoch,
            path.display()
        ),
    )?;
    Ok(path.to_path_buf())
}

/// Evaluates the configured systems on the test split.
pub fn evaluate(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<EvalReport>> {
    let train_set = load_dataset(&cfg.data_dir.join(TRAIN_FILE))?;
    let test_path = cfg.data_dir.join(TEST_FILE);
    let test = load_dataset(&test_path)?;
    if test.schema != train_set.schema {
        return Err(arnn_core::Error::Load(format!(
            "{}: schema differs from the training split",
            test_path.display()
        ))
        .into());
    }
    let schema = &test.schema;
    let load = |stage| load_checkpoint(&checkpoint_path(cfg, stage), Some(schema));
    let mut scorers = Vec::new();
    for &system in &cfg.systems {
        let scorer = match system {
            System::ItemKnn => Scorer::Knn(Box::new(ItemKnnIndex::build(
                &train_set,
                cfg.knn_lambda,
                cfg.knn_neighbors,
            )?)),
            System::Gru => Scorer::Gru(Box::new(load(Stage::GruPretrain)?.gru()?)),
            System::Pnn => Scorer::Pnn(Box::new(load(Stage::PnnPretrain)?.pnn()?)),
            System::Arnn => Scorer::Arnn(Box::new(load(Stage::Merge)?.arnn()?)),
        };
        scorers.push(scorer);
    }
    let mut reports = Vec::new();
    for scorer in &mut scorers {
        let lanes = cfg.batch_lanes;
        let report = match scorer {
            Scorer::Knn(m) => evaluate_system("Item-KNN", m.as_mut(), &test, cfg.k, lanes)?,
            Scorer::Gru(m) => {
                evaluate_system("GRU4REC", &mut Inference(m.as_mut()), &test, cfg.k, lanes)?
            }
            Scorer::Pnn(m) => {
                evaluate_system("PNN", &mut Inference(m.as_mut()), &test, cfg.k, lanes)?
            }
            Scorer::Arnn(m) => {
                evaluate_system("ARNN", &mut Inference(m.as_mut()), &test, cfg.k, lanes)?
            }
        };
        reports.push(report);
    }
    let path = cfg
        .out
        .clone()
        .unwrap_or_else(|| cfg.checkpoint_dir.join("report.tsv"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_file(&path, &report_tsv(&reports))?;
    say(out, &report_table(&reports))?;
    Ok(reports)
}

enum Scorer {
    Knn(Box<ItemKnnIndex>),
    Gru(Box<GruSessionModel>),
    Pnn(Box<PnnEncoder>),
    Arnn(Box<ArnnModel>),
}

/// One observed step of a session prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixStep {
    pub item: String,
    pub context: Attributes,
}

/// Parses `field=v1|v2;field=v3`. An empty string is the empty context.
pub fn parse_context(text: &str, intra: char) -> Result<Attributes> {
    let mut out = Attributes::new();
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (field, values) = part.split_once('=').ok_or_else(|| {
            AppError::Config(format!("context entry {part:?} is not field=value"))
        })?;
        let values = values
            .split(intra)
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(String::from)
            .collect();
        out.insert(field.trim().to_string(), values);
    }
    Ok(out)
}

/// Parses `item` or `item@context`. Steps without their own context take
/// `default`.
pub fn parse_step(text: &str, default: &Attributes, intra: char) -> Result<PrefixStep> {
    let (item, context) = match text.split_once('@') {
        Some((item, ctx)) => (item, parse_context(ctx, intra)?),
        None => (text, default.clone()),
    };
    if item.is_empty() {
        return Err(AppError::Config(format!("empty item in step {text:?}")));
    }
    Ok(PrefixStep {
        item: item.to_string(),
        context,
    })
}

/// Streams a prefix through a checkpointed model and returns the top `k`
/// items with their scores, best first.
pub fn recommend(checkpoint: &Path, prefix: &[PrefixStep], k: usize) -> Result<Vec<(String, f64)>> {
    if prefix.is_empty() {
        return Err(AppError::Config("recommend needs at least one item".into()));
    }
    let c = load_checkpoint(checkpoint, None)?;
    let schema = &c.schema;
    let unknown: Vec<String> = prefix
        .iter()
        .filter(|s| schema.item_index(&s.item).is_none())
        .map(|s| s.item.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(AppError::Vocabulary(unknown));
    }
    let scores = match c.kind {
        crate::store::ModelKind::Gru => score_prefix(&mut c.gru()?, schema, prefix)?,
        crate::store::ModelKind::Pnn => score_prefix(&mut c.pnn()?, schema, prefix)?,
        crate::store::ModelKind::Arnn => score_prefix(&mut c.arnn()?, schema, prefix)?,
    };
    let k = k.min(scores.len());
    Ok(top_k(&scores, k)
        .into_iter()
        .map(|i| (schema.items()[i].clone(), scores[i]))
        .collect())
}

fn score_prefix<M: SessionRecommender>(
    model: &mut M,
    schema: &FieldSchema,
    prefix: &[PrefixStep],
) -> Result<Vec<f64>> {
    model.reset_state(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut last = Vec::new();
    for (t, step) in prefix.iter().enumerate() {
        let batch = MiniBatch {
            prev_items: vec![schema.item_index(&step.item).expect("checked")],
            target_items: vec![0],
            contexts: vec![schema.encode_context(&step.context)?],
            session_boundary: vec![t == 0],
            active: vec![true],
        };
        let mut g = Graph::new();
        let logits = model.forward(&mut g, &batch, &[0], Mode::Inference, &mut rng)?;
        last = g.value(logits).row(0).to_vec();
    }
    Ok(last)
}

/// Recommendation lines as printed by the binary.
pub fn render_recommendations(recs: &[(String, f64)]) -> String {
    recs.iter()
        .enumerate()
        .map(|(r, (item, score))| format!("{}\t{}\t{:.6}\n", r + 1, item, score))
        .collect()
}

/// Trains all three stages in order.
pub fn train_all(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    for stage in [Stage::GruPretrain, Stage::PnnPretrain, Stage::Merge] {
        let cfg = RunConfig {
            stage: Some(stage),
            ..cfg.clone()
        };
        train(&cfg, out)?;
    }
    Ok(())
}
