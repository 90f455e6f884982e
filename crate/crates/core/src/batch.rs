//! Session-parallel mini-batches.
//!
//! Each of the `B` lanes walks one session a step at a time. When a lane's
//! session runs out, the next unstarted session is loaded into it and the
//! lane is flagged as a session boundary so recurrent state is reset. The
//! targets of the other lanes serve as the negatives of each lane.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::SessionDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniBatch {
    pub prev_items: Vec<usize>,
    pub target_items: Vec<usize>,
    pub contexts: Vec<Vec<usize>>,
    pub session_boundary: Vec<bool>,
    pub active: Vec<bool>,
}

impl MiniBatch {
    pub fn lanes(&self) -> usize {
        self.active.len()
    }

    pub fn active_lanes(&self) -> Vec<usize> {
        (0..self.lanes()).filter(|&l| self.active[l]).collect()
    }
}

/// Negatives of `lane`: the targets of the other active lanes, without
/// repeats and without the lane's own target.
pub fn negatives_for(batch: &MiniBatch, lane: usize) -> Result<Vec<usize>> {
    if lane >= batch.lanes() || !batch.active[lane] {
        return Err(Error::InactiveLane(lane));
    }
    let own = batch.target_items[lane];
    let mut out: Vec<usize> = Vec::new();
    for j in 0..batch.lanes() {
        let t = batch.target_items[j];
        if j != lane && batch.active[j] && t != own && !out.contains(&t) {
            out.push(t);
        }
    }
    Ok(out)
}

/// Order in which sessions are handed to lanes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionOrder {
    /// Dataset order, used for evaluation.
    Sequential,
    /// Dataset order shuffled by `seed` and `epoch`.
    Shuffled { seed: u64, epoch: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Lane {
    session: usize,
    /// Index of the previous-item step inside the session.
    position: usize,
    fresh: bool,
}

#[derive(Debug)]
pub struct SessionBatcher<'a> {
    data: &'a SessionDataset,
    order: Vec<usize>,
    next_session: usize,
    lanes: Vec<Option<Lane>>,
}

impl<'a> SessionBatcher<'a> {
    pub fn new(data: &'a SessionDataset, batch_lanes: usize, order: SessionOrder) -> Result<Self> {
        if batch_lanes < 2 {
            return Err(Error::Config(alloc::format!(
                "batch_lanes must be at least 2, got {batch_lanes}"
            )));
        }
        Ok(Self::with_lanes(data, batch_lanes, order))
    }

    /// Like [`new`](Self::new) but allows a single lane. Evaluation uses this;
    /// training needs at least two lanes for negatives.
    pub fn with_lanes(data: &'a SessionDataset, batch_lanes: usize, order: SessionOrder) -> Self {
        let mut idx: Vec<usize> = (0..data.sessions.len()).collect();
        if let SessionOrder::Shuffled { seed, epoch } = order {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(epoch);
            idx.shuffle(&mut rng);
        }
        let mut batcher = Self {
            data,
            order: idx,
            next_session: 0,
            lanes: alloc::vec![None; batch_lanes.max(1)],
        };
        for l in 0..batcher.lanes.len() {
            batcher.lanes[l] = batcher.load_next();
        }
        batcher
    }

    fn load_next(&mut self) -> Option<Lane> {
        while self.next_session < self.order.len() {
            let session = self.order[self.next_session];
            self.next_session += 1;
            if self.data.sessions[session].len() >= 2 {
                return Some(Lane {
                    session,
                    position: 0,
                    fresh: true,
                });
            }
        }
        None
    }

    pub fn batch_lanes(&self) -> usize {
        self.lanes.len()
    }

    /// Dataset index of the session currently in `lane`, if any.
    pub fn session_in(&self, lane: usize) -> Option<usize> {
        self.lanes[lane].map(|l| l.session)
    }

    /// Emits the next batch, or `None` once every lane is exhausted.
    pub fn next_batch(&mut self) -> Option<MiniBatch> {
        // Refill lanes whose session finished on the previous step.
        for l in 0..self.lanes.len() {
            if let Some(lane) = self.lanes[l] {
                if lane.position + 1 >= self.data.sessions[lane.session].len() {
                    self.lanes[l] = self.load_next();
                }
            }
        }
        if self.lanes.iter().all(Option::is_none) {
            return None;
        }
        let b = self.lanes.len();
        let mut batch = MiniBatch {
            prev_items: alloc::vec![0; b],
            target_items: alloc::vec![0; b],
            contexts: alloc::vec![Vec::new(); b],
            session_boundary: alloc::vec![false; b],
            active: alloc::vec![false; b],
        };
        for (l, slot) in self.lanes.iter_mut().enumerate() {
            let Some(lane) = slot else { continue };
            let steps = &self.data.sessions[lane.session].steps;
            batch.prev_items[l] = steps[lane.position].item;
            batch.target_items[l] = steps[lane.position + 1].item;
            batch.contexts[l] = steps[lane.position].context.clone();
            batch.session_boundary[l] = lane.fresh;
            batch.active[l] = true;
            lane.fresh = false;
            lane.position += 1;
        }
        Some(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FieldSchema, Session, Step};
    use alloc::vec;

    fn dataset(sessions: &[&[usize]]) -> SessionDataset {
        let n = sessions.iter().flat_map(|s| s.iter()).max().unwrap() + 1;
        let schema =
            FieldSchema::new(vec![], (0..n).map(|i| alloc::format!("i{i}")).collect()).unwrap();
        SessionDataset::new(
            sessions
                .iter()
                .enumerate()
                .map(|(k, items)| Session {
                    steps: items
                        .iter()
                        .map(|&item| Step {
                            context: vec![],
                            item,
                        })
                        .collect(),
                    start_time: k as u64,
                })
                .collect(),
            schema,
        )
        .unwrap()
    }

    #[test]
    fn lane_walk() {
        // sessions [a,b,c] and [d,e]
        let ds = dataset(&[&[0, 1, 2], &[3, 4]]);
        let mut it = SessionBatcher::new(&ds, 2, SessionOrder::Sequential).unwrap();
        let b1 = it.next_batch().unwrap();
        assert_eq!(b1.prev_items, [0, 3]);
        assert_eq!(b1.target_items, [1, 4]);
        assert_eq!(b1.session_boundary, [true, true]);
        assert_eq!(negatives_for(&b1, 0).unwrap(), [4]);
        let b2 = it.next_batch().unwrap();
        assert_eq!(b2.prev_items[0], 1);
        assert_eq!(b2.target_items[0], 2);
        assert_eq!(b2.active, [true, false]);
        assert_eq!(b2.session_boundary, [false, false]);
        assert!(it.next_batch().is_none());
    }

    #[test]
    fn refill_marks_boundary() {
        let ds = dataset(&[&[0, 1], &[2, 3, 4], &[5, 6]]);
        let mut it = SessionBatcher::new(&ds, 2, SessionOrder::Sequential).unwrap();
        it.next_batch().unwrap();
        let b2 = it.next_batch().unwrap();
        assert_eq!(b2.prev_items, [5, 3]);
        assert_eq!(b2.session_boundary, [true, false]);
    }

    #[test]
    fn negatives_collisions() {
        let batch = MiniBatch {
            prev_items: vec![0, 0, 0],
            target_items: vec![1, 4, 1],
            contexts: vec![vec![]; 3],
            session_boundary: vec![false; 3],
            active: vec![true; 3],
        };
        assert_eq!(negatives_for(&batch, 0).unwrap(), [4]);
        let batch2 = MiniBatch {
            target_items: vec![1, 4, 5],
            ..batch.clone()
        };
        assert_eq!(negatives_for(&batch2, 1).unwrap(), [1, 5]);
        let both = MiniBatch {
            prev_items: vec![0, 0],
            target_items: vec![2, 2],
            contexts: vec![vec![]; 2],
            session_boundary: vec![false; 2],
            active: vec![true; 2],
        };
        assert!(negatives_for(&both, 0).unwrap().is_empty());
        let inactive = MiniBatch {
            active: vec![true, false],
            ..both
        };
        assert_eq!(negatives_for(&inactive, 1), Err(Error::InactiveLane(1)));
    }

    #[test]
    fn single_lane_rejected_for_training() {
        let ds = dataset(&[&[0, 1]]);
        assert!(matches!(
            SessionBatcher::new(&ds, 1, SessionOrder::Sequential),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn every_pair_once_per_epoch() {
        let ds = dataset(&[&[0, 1, 2, 3], &[4, 5], &[6, 7, 8], &[9, 0], &[1, 2, 3]]);
        for seed in 0..5 {
            let mut it =
                SessionBatcher::new(&ds, 3, SessionOrder::Shuffled { seed, epoch: 1 }).unwrap();
            let mut pairs = Vec::new();
            while let Some(b) = it.next_batch() {
                for l in b.active_lanes() {
                    pairs.push((b.prev_items[l], b.target_items[l]));
                    assert!(negatives_for(&b, l).unwrap().len() <= 2);
                }
            }
            let mut expected: Vec<(usize, usize)> = ds
                .sessions
                .iter()
                .flat_map(|s| s.steps.windows(2).map(|w| (w[0].item, w[1].item)))
                .collect();
            pairs.sort_unstable();
            expected.sort_unstable();
            assert_eq!(pairs, expected);
        }
    }

    #[test]
    fn seeded_streams_repeat() {
        let ds = dataset(&[&[0, 1, 2], &[3, 4], &[5, 6, 7, 8], &[1, 3]]);
        let collect = |epoch| {
            let mut it =
                SessionBatcher::new(&ds, 2, SessionOrder::Shuffled { seed: 9, epoch }).unwrap();
            let mut v = Vec::new();
            while let Some(b) = it.next_batch() {
                v.push(b);
            }
            v
        };
        assert_eq!(collect(1), collect(1));
    }
}
