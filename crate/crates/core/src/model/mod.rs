//! The three networks and the traits they share.

mod arnn;
mod gru;
mod pnn;

pub use arnn::ArnnModel;
pub use gru::GruSessionModel;
pub use pnn::PnnEncoder;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::batch::MiniBatch;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::nn::Mode;
use crate::param::Parameter;
use crate::tensor::Tensor;

/// Layer sizes of the three networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub gru_hidden: usize,
    pub gru_dropout: f64,
    pub pnn_embedding: usize,
    pub pnn_hidden: usize,
    pub merge_hidden: usize,
}

/// Named hyperparameter profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Rich user context (12 categorical fields in the job-search log).
    Xing,
    /// Sparse user context (user id, age, gender).
    Tmall,
    /// Desk-scale synthetic data.
    Synth,
}

impl Profile {
    pub fn model_config(self) -> ModelConfig {
        match self {
            Profile::Xing => ModelConfig {
                gru_hidden: 100,
                gru_dropout: 0.2,
                pnn_embedding: 10,
                pnn_hidden: 100,
                merge_hidden: 100,
            },
            Profile::Tmall => ModelConfig {
                gru_hidden: 1000,
                gru_dropout: 0.0,
                pnn_embedding: 10,
                pnn_hidden: 300,
                merge_hidden: 1000,
            },
            Profile::Synth => ModelConfig {
                gru_hidden: 48,
                gru_dropout: 0.0,
                pnn_embedding: 10,
                pnn_hidden: 128,
                merge_hidden: 64,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Xing => "xing",
            Profile::Tmall => "tmall",
            Profile::Synth => "synth",
        }
    }
}

impl core::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xing" => Ok(Profile::Xing),
            "tmall" => Ok(Profile::Tmall),
            "synth" => Ok(Profile::Synth),
            other => Err(Error::Config(format!("unknown profile {other}"))),
        }
    }
}

/// Anything that scores the full item vocabulary for the active lanes of a
/// session-parallel batch.
pub trait SessionRecommender {
    fn num_items(&self) -> usize;

    /// Clears per-lane recurrent state and sizes it for `lanes` lanes.
    fn reset_state(&mut self, lanes: usize);

    /// Records the forward pass for `rows` (lane indices) and returns logits
    /// of shape `rows.len() × num_items`. Recurrent state of those lanes is
    /// advanced.
    fn forward(
        &mut self,
        g: &mut Graph,
        batch: &MiniBatch,
        rows: &[usize],
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<Var>;

    /// Every parameter with its checkpoint name. Frozen ones included.
    fn params_mut(&mut self) -> Vec<(String, &mut Parameter)>;
}

/// A recurrent session body whose hidden state can feed the merge layer.
pub trait SessionEncoder: Clone {
    fn hidden_size(&self) -> usize;

    fn num_items(&self) -> usize;

    fn reset_state(&mut self, lanes: usize);

    /// Advances the given lanes by one item and returns their new hidden
    /// states. Lanes flagged in `boundaries` start from a zero state.
    fn encode(
        &mut self,
        g: &mut Graph,
        prev_items: &[usize],
        boundaries: &[bool],
        rows: &[usize],
    ) -> Result<Var>;

    fn named_params(&self) -> Vec<(String, &Parameter)>;

    fn named_params_mut(&mut self) -> Vec<(String, &mut Parameter)>;

    /// Parameters plus any non-trainable state, by checkpoint name.
    fn export(&self) -> Vec<(String, Tensor)>;

    fn import(&mut self, tensors: &BTreeMap<String, Tensor>) -> Result<()>;
}

/// Copies every named tensor from `tensors` into the matching parameter.
pub(crate) fn import_params(
    params: Vec<(String, &mut Parameter)>,
    tensors: &BTreeMap<String, Tensor>,
) -> Result<()> {
    for (name, p) in params {
        let t = lookup(tensors, &name)?;
        if t.shape() != p.shape() {
            return Err(Error::Load(format!(
                "{name}: expected shape {:?}, found {:?}",
                p.shape(),
                t.shape()
            )));
        }
        *p.value_mut() = t.clone();
        p.zero_grad();
    }
    Ok(())
}

pub(crate) fn lookup<'a>(tensors: &'a BTreeMap<String, Tensor>, name: &str) -> Result<&'a Tensor> {
    tensors
        .get(name)
        .ok_or_else(|| Error::Load(format!("missing tensor {name}")))
}

pub(crate) fn import_vec(
    tensors: &BTreeMap<String, Tensor>,
    name: &str,
    dst: &mut [f64],
) -> Result<()> {
    let t = lookup(tensors, name)?;
    if t.len() != dst.len() {
        return Err(Error::Load(format!(
            "{name}: expected {} values, found {}",
            dst.len(),
            t.len()
        )));
    }
    dst.copy_from_slice(t.data());
    Ok(())
}

pub(crate) fn export_params(params: Vec<(String, &Parameter)>) -> Vec<(String, Tensor)> {
    params
        .into_iter()
        .map(|(n, p)| (n, p.value().clone()))
        .collect()
}

/// Inverted dropout mask for a `rows × cols` activation.
pub(crate) fn dropout_mask(rng: &mut dyn RngCore, rows: usize, cols: usize, rate: f64) -> Tensor {
    use rand::Rng;
    let keep = 1.0 - rate;
    let data = (0..rows * cols)
        .map(|_| {
            if rng.gen::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
        .collect();
    Tensor::new(alloc::vec![rows, cols], data).expect("rows*cols values")
}
