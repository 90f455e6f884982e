use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Adagrad;
use crate::batch::{negatives_for, SessionBatcher, SessionOrder};
use crate::data::SessionDataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate_system, Inference};
use crate::graph::{Graph, Top1Lane};
use crate::model::SessionRecommender;
use crate::nn::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    GruPretrain,
    PnnPretrain,
    Merge,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::GruPretrain => "gru",
            Stage::PnnPretrain => "pnn",
            Stage::Merge => "merge",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainPlan {
    pub stage: Stage,
    pub epochs: usize,
    pub batch_lanes: usize,
    pub seed: u64,
    pub optimizer: Adagrad,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Cut-off of the validation metrics.
    pub eval_k: usize,
}

impl TrainPlan {
    pub fn new(stage: Stage, seed: u64) -> Self {
        let lr = match stage {
            Stage::Merge => 0.01,
            _ => 0.05,
        };
        Self {
            stage,
            epochs: 10,
            batch_lanes: 50,
            seed,
            optimizer: Adagrad::new(lr, 1e-6),
            patience: 3,
            eval_k: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_recall: f64,
    pub val_mrr: f64,
}

#[derive(Debug, Clone)]
pub struct StageOutcome<M> {
    /// Best model by validation (recall, then MRR).
    pub model: M,
    pub best_epoch: usize,
    /// Validation recall and MRR before any update.
    pub initial: (f64, f64),
    pub history: Vec<EpochRecord>,
}

#[derive(Debug)]
pub enum StageError<M> {
    /// The loss or a gradient went non-finite. Carries the last good state.
    Diverged {
        epoch: usize,
        outcome: alloc::boxed::Box<StageOutcome<M>>,
    },
    Failed(Error),
}

impl<M> From<Error> for StageError<M> {
    fn from(e: Error) -> Self {
        StageError::Failed(e)
    }
}

/// Validation Recall@k and MRR@k.
pub fn validate<M: SessionRecommender>(
    model: &mut M,
    validation: &SessionDataset,
    k: usize,
    lanes: usize,
) -> Result<(f64, f64)> {
    let report = evaluate_system("validation", &mut Inference(model), validation, k, lanes)?;
    Ok((report.recall, report.mrr))
}

/// One pass over `data`. Returns the mean batch loss, or `None` when no
/// batch had any negatives.
///
/// Recurrent state is carried across batches but never back-propagated
/// through: each batch builds a fresh graph from the stored hidden values.
pub fn train_epoch<M: SessionRecommender>(
    model: &mut M,
    data: &SessionDataset,
    plan: &TrainPlan,
    epoch: usize,
) -> Result<Option<f64>> {
    let mut batcher = SessionBatcher::new(
        data,
        plan.batch_lanes,
        SessionOrder::Shuffled {
            seed: plan.seed,
            epoch: epoch as u64,
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(epoch as u64);
    model.reset_state(plan.batch_lanes);
    let mut total = 0.0;
    let mut batches = 0usize;
    while let Some(batch) = batcher.next_batch() {
        let rows = batch.active_lanes();
        let mut lanes = Vec::with_capacity(rows.len());
        for (k, &r) in rows.iter().enumerate() {
            let negatives = negatives_for(&batch, r)?;
            if !negatives.is_empty() {
                lanes.push(Top1Lane {
                    row: k,
                    target: batch.target_items[r],
                    negatives,
                });
            }
        }
        let mut g = Graph::new();
        if lanes.is_empty() {
            // Nothing to learn from; still advance the lanes' state.
            model.forward(&mut g, &batch, &rows, Mode::Inference, &mut rng)?;
            continue;
        }
        let logits = model.forward(&mut g, &batch, &rows, Mode::Train, &mut rng)?;
        let loss = g.top1(logits, lanes)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite(alloc::format!("loss at epoch {epoch}")));
        }
        let grads = g.backward(loss)?;
        drop(g);
        let mut params = model.params_mut();
        for (_, p) in params.iter_mut() {
            p.accumulate(&grads);
        }
        plan.optimizer.step(&mut params)?;
        total += value;
        batches += 1;
    }
    Ok((batches > 0).then(|| total / batches as f64))
}

fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 > b.1)
}

/// Trains `model` for up to `plan.epochs` epochs, evaluating on
/// `validation` after each and keeping the best state.
pub fn run_stage<M: SessionRecommender + Clone>(
    plan: &TrainPlan,
    mut model: M,
    train: &SessionDataset,
    validation: &SessionDataset,
) -> core::result::Result<StageOutcome<M>, StageError<M>> {
    let lanes = plan.batch_lanes;
    let initial = validate(&mut model, validation, plan.eval_k, lanes)?;
    let mut outcome = StageOutcome {
        model: model.clone(),
        best_epoch: 0,
        initial,
        history: Vec::new(),
    };
    let mut best = initial;
    let mut stale = 0;
    for epoch in 1..=plan.epochs {
        let loss = match train_epoch(&mut model, train, plan, epoch) {
            Ok(loss) => loss,
            Err(Error::NonFinite(_)) => {
                return Err(StageError::Diverged {
                    epoch,
                    outcome: alloc::boxed::Box::new(outcome),
                })
            }
            Err(e) => return Err(e.into()),
        };
        let metrics = validate(&mut model, validation, plan.eval_k, lanes)?;
        outcome.history.push(EpochRecord {
            epoch,
            train_loss: loss.unwrap_or(f64::NAN),
            val_recall: metrics.0,
            val_mrr: metrics.1,
        });
        if better(metrics, best) {
            best = metrics;
            outcome.model = model.clone();
            outcome.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if plan.patience > 0 && stale >= plan.patience {
                break;
            }
        }
    }
    Ok(outcome)
}
