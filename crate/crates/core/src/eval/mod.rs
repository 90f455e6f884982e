//! Ranking metrics, the Item-KNN baseline and full test-set evaluation.

mod itemknn;
mod metrics;

pub use itemknn::ItemKnnIndex;
pub use metrics::{mrr_at_k, rank_of, recall_at_k, top_k};

use alloc::string::String;
use alloc::vec::Vec;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::batch::{MiniBatch, SessionBatcher, SessionOrder};
use crate::data::SessionDataset;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::SessionRecommender;
use crate::nn::Mode;
use crate::tensor::Tensor;

/// Scores the whole vocabulary for some lanes of a batch.
pub trait NextItemScorer {
    fn num_items(&self) -> usize;
    fn reset(&mut self, lanes: usize);
    /// `rows.len() × num_items` scores. Implementations must not read
    /// `batch.target_items`.
    fn score(&mut self, batch: &MiniBatch, rows: &[usize], rng: &mut dyn RngCore)
        -> Result<Tensor>;
}

/// Runs a neural model in inference mode as a [`NextItemScorer`].
pub struct Inference<'a, M: ?Sized>(pub &'a mut M);

impl<M: SessionRecommender + ?Sized> NextItemScorer for Inference<'_, M> {
    fn num_items(&self) -> usize {
        self.0.num_items()
    }

    fn reset(&mut self, lanes: usize) {
        self.0.reset_state(lanes);
    }

    fn score(
        &mut self,
        batch: &MiniBatch,
        rows: &[usize],
        rng: &mut dyn RngCore,
    ) -> Result<Tensor> {
        let mut g = Graph::new();
        let logits = self.0.forward(&mut g, batch, rows, Mode::Inference, rng)?;
        Ok(g.value(logits).clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub system: String,
    pub k: usize,
    pub recall: f64,
    pub mrr: f64,
    pub n_recs: usize,
    pub n_hits: usize,
}

/// Top-k lists and targets for every prediction step of `test`.
///
/// Sessions are walked left to right in parallel lanes; the first step of a
/// session only primes state. Scorers see a copy of the batch with targets
/// blanked, so predictions depend on the observed prefix alone.
pub fn rank_test_set(
    scorer: &mut dyn NextItemScorer,
    test: &SessionDataset,
    k: usize,
    lanes: usize,
) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
    if k == 0 {
        return Err(Error::Evaluation("k must be positive"));
    }
    if test.schema.num_items() != scorer.num_items() {
        return Err(Error::Load(alloc::format!(
            "scorer covers {} items, dataset {}",
            scorer.num_items(),
            test.schema.num_items()
        )));
    }
    let lanes = lanes.max(1);
    let mut batcher = SessionBatcher::with_lanes(test, lanes, SessionOrder::Sequential);
    scorer.reset(lanes);
    // Scorers in inference mode draw nothing; the generator only satisfies
    // the trait signature.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut lists = Vec::new();
    let mut targets = Vec::new();
    while let Some(batch) = batcher.next_batch() {
        let rows = batch.active_lanes();
        let blind = MiniBatch {
            target_items: alloc::vec![0; batch.lanes()],
            ..batch.clone()
        };
        let scores = scorer.score(&blind, &rows, &mut rng)?;
        for (k_row, &r) in rows.iter().enumerate() {
            lists.push(top_k(scores.row(k_row), k));
            targets.push(batch.target_items[r]);
        }
    }
    Ok((lists, targets))
}

pub fn evaluate_system(
    system: &str,
    scorer: &mut dyn NextItemScorer,
    test: &SessionDataset,
    k: usize,
    lanes: usize,
) -> Result<EvalReport> {
    let (lists, targets) = rank_test_set(scorer, test, k, lanes)?;
    let recall = recall_at_k(&lists, &targets, k)?;
    let mrr = mrr_at_k(&lists, &targets, k)?;
    let n_hits = lists
        .iter()
        .zip(&targets)
        .filter(|(l, &t)| rank_of(l, t, k).is_some())
        .count();
    Ok(EvalReport {
        system: system.into(),
        k,
        recall,
        mrr,
        n_recs: lists.len(),
        n_hits,
    })
}
