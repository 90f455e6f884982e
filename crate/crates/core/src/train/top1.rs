//! TOP1 ranking loss over raw (pre-softmax) scores.
//!
//! For a positive score `r_i` and negatives `r_j`:
//! `TOP1 = 1/N Σ_j σ(r_j − r_i) + σ(r_j²)`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::sigmoid;

pub fn top1_loss(target: f64, negatives: &[f64]) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::UndefinedLoss);
    }
    let total: f64 = negatives
        .iter()
        .map(|&n| sigmoid(n - target) + sigmoid(n * n))
        .sum();
    Ok(total / negatives.len() as f64)
}

/// Partial derivatives of [`top1_loss`] with respect to the target score and
/// each negative score.
pub fn top1_grad(target: f64, negatives: &[f64]) -> Result<(f64, Vec<f64>)> {
    if negatives.is_empty() {
        return Err(Error::UndefinedLoss);
    }
    let scale = 1.0 / negatives.len() as f64;
    let mut dtarget = 0.0;
    let dnegs = negatives
        .iter()
        .map(|&n| {
            let s = sigmoid(n - target);
            let ds = s * (1.0 - s);
            let q = sigmoid(n * n);
            dtarget -= ds * scale;
            (ds + q * (1.0 - q) * 2.0 * n) * scale
        })
        .collect();
    Ok((dtarget, dnegs))
}
