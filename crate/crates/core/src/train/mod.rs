//! TOP1 loss, Adagrad, and the staged training protocol.

mod adagrad;
mod stage;
pub mod top1;

pub use adagrad::Adagrad;
pub use stage::{
    run_stage, train_epoch, validate, EpochRecord, Stage, StageError, StageOutcome, TrainPlan,
};
pub use top1::{top1_grad, top1_loss};
