//! Item-to-item nearest neighbours by cosine similarity of session incidence.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::RngCore;

use crate::batch::MiniBatch;
use crate::data::SessionDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::NextItemScorer;

/// For every item, its most similar items under
/// `sim(i, j) = |S_i ∩ S_j| / (sqrt|S_i|·sqrt|S_j| + λ)` where `S_i` is the
/// set of training sessions containing `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemKnnIndex {
    neighbors: Vec<Vec<(usize, f64)>>,
    pub lambda: f64,
    pub max_neighbors: usize,
}

impl ItemKnnIndex {
    pub fn build(train: &SessionDataset, lambda: f64, max_neighbors: usize) -> Result<Self> {
        if train.sessions.is_empty() {
            return Err(Error::EmptyInput("item-knn needs training sessions"));
        }
        let n = train.schema.num_items();
        let mut support = alloc::vec![0u64; n];
        let mut co: Vec<BTreeMap<usize, u64>> = alloc::vec![BTreeMap::new(); n];
        for s in &train.sessions {
            let mut items: Vec<usize> = s.steps.iter().map(|st| st.item).collect();
            items.sort_unstable();
            items.dedup();
            for (a, &i) in items.iter().enumerate() {
                support[i] += 1;
                for &j in &items[a + 1..] {
                    *co[i].entry(j).or_default() += 1;
                    *co[j].entry(i).or_default() += 1;
                }
            }
        }
        let neighbors = co
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let mut sims: Vec<(usize, f64)> = row
                    .into_iter()
                    .map(|(j, both)| {
                        let denom =
                            libm::sqrt(support[i] as f64) * libm::sqrt(support[j] as f64) + lambda;
                        (j, both as f64 / denom)
                    })
                    .collect();
                sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                sims.truncate(max_neighbors);
                sims
            })
            .collect();
        Ok(Self {
            neighbors,
            lambda,
            max_neighbors,
        })
    }

    pub fn num_items(&self) -> usize {
        self.neighbors.len()
    }

    /// Neighbours of `item`, most similar first.
    pub fn neighbors(&self, item: usize) -> &[(usize, f64)] {
        &self.neighbors[item]
    }

    /// Stored similarity, zero when `j` is not among `i`'s neighbours.
    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        self.neighbors[i]
            .iter()
            .find(|(k, _)| *k == j)
            .map_or(0.0, |(_, s)| *s)
    }

    /// Scores for every item given the previous item.
    pub fn scores(&self, prev: usize) -> Result<Vec<f64>> {
        let n = self.num_items();
        if prev >= n {
            return Err(Error::Vocabulary {
                index: prev,
                size: n,
            });
        }
        let mut out = alloc::vec![0.0; n];
        for &(j, s) in &self.neighbors[prev] {
            out[j] = s;
        }
        Ok(out)
    }
}

impl NextItemScorer for ItemKnnIndex {
    fn num_items(&self) -> usize {
        ItemKnnIndex::num_items(self)
    }

    fn reset(&mut self, _lanes: usize) {}

    fn score(
        &mut self,
        batch: &MiniBatch,
        rows: &[usize],
        _rng: &mut dyn RngCore,
    ) -> Result<Tensor> {
        let mut data = Vec::with_capacity(rows.len() * self.num_items());
        for &r in rows {
            data.extend(self.scores(batch.prev_items[r])?);
        }
        Tensor::new(alloc::vec![rows.len(), self.num_items()], data)
    }
}
