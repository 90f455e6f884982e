//! Recall@K and MRR@K over ranked recommendation lists.

use alloc::vec::Vec;

use crate::error::{Error, Result};

fn check(lists: &[Vec<usize>], targets: &[usize], k: usize) -> Result<()> {
    if lists.is_empty() {
        return Err(Error::Evaluation("no recommendation attempts"));
    }
    if lists.len() != targets.len() {
        return Err(Error::Evaluation("lists and targets differ in length"));
    }
    if k == 0 {
        return Err(Error::Evaluation("k must be positive"));
    }
    if lists.iter().any(|l| l.len() > k) {
        return Err(Error::Evaluation("a ranked list is longer than k"));
    }
    Ok(())
}

/// 1-based rank of `target` within the first `k` entries of `list`.
pub fn rank_of(list: &[usize], target: usize, k: usize) -> Option<usize> {
    list.iter()
        .take(k)
        .position(|&i| i == target)
        .map(|p| p + 1)
}

/// Fraction of attempts whose target appears in the top-`k` list.
pub fn recall_at_k(lists: &[Vec<usize>], targets: &[usize], k: usize) -> Result<f64> {
    check(lists, targets, k)?;
    let hits = lists
        .iter()
        .zip(targets)
        .filter(|(l, &t)| rank_of(l, t, k).is_some())
        .count();
    Ok(hits as f64 / lists.len() as f64)
}

/// Mean of `1/rank` over attempts, counting misses as zero.
pub fn mrr_at_k(lists: &[Vec<usize>], targets: &[usize], k: usize) -> Result<f64> {
    check(lists, targets, k)?;
    let total: f64 = lists
        .iter()
        .zip(targets)
        .filter_map(|(l, &t)| rank_of(l, t, k))
        .map(|r| 1.0 / r as f64)
        .sum();
    Ok(total / lists.len() as f64)
}

/// Indices of the `k` highest scores, best first. Equal scores are ordered
/// by ascending index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn one_hit_of_two() {
        let lists = vec![vec![0, 5, 6], vec![2, 5, 6]];
        assert_eq!(recall_at_k(&lists, &[0, 1], 3).unwrap(), 0.5);
    }

    #[test]
    fn ranks_one_two_miss() {
        let lists = vec![vec![7, 1], vec![1, 7], vec![1, 2]];
        let mrr = mrr_at_k(&lists, &[7, 7, 7], 2).unwrap();
        assert!((mrr - 0.5).abs() < 1e-15);
    }

    #[test]
    fn all_rank_one() {
        let lists = vec![vec![3], vec![4]];
        assert_eq!(recall_at_k(&lists, &[3, 4], 1).unwrap(), 1.0);
        assert_eq!(mrr_at_k(&lists, &[3, 4], 1).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        assert!(recall_at_k(&[], &[], 5).is_err());
        assert!(mrr_at_k(&[vec![1, 2, 3]], &[1], 2).is_err());
    }

    #[test]
    fn top_k_ties_by_index() {
        assert_eq!(top_k(&[0.5, 1.0, 0.5, 1.0], 3), vec![1, 3, 0]);
        assert_eq!(top_k(&[0.1, 0.2], 5), vec![1, 0]);
        assert!(top_k(&[0.1], 0).is_empty());
    }
}
