use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::{export_params, import_params, import_vec, SessionRecommender};
use crate::batch::MiniBatch;
use crate::data::FieldSchema;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::nn::{glorot_uniform, BatchNorm, Linear, Mode};
use crate::param::Parameter;
use crate::tensor::Tensor;

/// Product-based context encoder.
///
/// Every context field and the previous item get one embedding each
/// (multi-valued fields average their active categories). The linear signal
/// is the concatenation of the `F` embeddings, the product signal holds the
/// `F(F−1)/2` pairwise inner products, and
/// `c = batchnorm(relu(fc([linear; product])))`.
#[derive(Debug, Clone)]
pub struct PnnEncoder {
    pub field_embeddings: Vec<Parameter>,
    pub item_embedding: Parameter,
    pub fc: Linear,
    pub bn: BatchNorm,
    /// Item-score head, used in pretraining and as a standalone baseline.
    pub score: Linear,
    field_names: Vec<String>,
    offsets: Vec<usize>,
}

impl PnnEncoder {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        schema: &FieldSchema,
        embedding: usize,
        hidden: usize,
    ) -> Self {
        let field_embeddings = schema
            .field_sizes()
            .into_iter()
            .map(|n| Parameter::new(glorot_uniform(rng, n, embedding)))
            .collect();
        let num_items = schema.num_items();
        let fields = schema.fields().len() + 1;
        Self {
            field_embeddings,
            item_embedding: Parameter::new(glorot_uniform(rng, num_items, embedding)),
            fc: Linear::new(rng, fc_input_len(fields, embedding), hidden),
            bn: BatchNorm::new(hidden),
            score: Linear::new(rng, hidden, num_items),
            field_names: schema.fields().iter().map(|f| f.name.clone()).collect(),
            offsets: schema.offsets().to_vec(),
        }
    }

    /// Field count including the previous-item field.
    pub fn num_fields(&self) -> usize {
        self.field_embeddings.len() + 1
    }

    pub fn embedding_dim(&self) -> usize {
        self.item_embedding.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.fc.output_dim()
    }

    pub fn num_items(&self) -> usize {
        self.item_embedding.shape()[0]
    }

    fn context_bags(&self, contexts: &[&[usize]]) -> Result<Vec<Vec<Vec<usize>>>> {
        let n_fields = self.field_embeddings.len();
        let mut per_field = alloc::vec![Vec::with_capacity(contexts.len()); n_fields];
        for ctx in contexts {
            let mut bags = alloc::vec![Vec::new(); n_fields];
            for &p in ctx.iter() {
                let f = self.offsets.partition_point(|&o| o <= p).checked_sub(1);
                let f = f.ok_or_else(|| Error::Encoding(format!("bad context position {p}")))?;
                bags[f].push(p - self.offsets[f]);
            }
            for (f, bag) in bags.into_iter().enumerate() {
                if bag.is_empty() {
                    return Err(Error::Encoding(format!(
                        "field {} has no active category",
                        self.field_names[f]
                    )));
                }
                per_field[f].push(bag);
            }
        }
        Ok(per_field)
    }

    /// Product-layer input `[linear; product]` for the given lanes.
    pub fn interaction_input(
        &self,
        g: &mut Graph,
        contexts: &[&[usize]],
        prev_items: &[usize],
    ) -> Result<Var> {
        let mut parts = Vec::with_capacity(self.num_fields());
        for (table, bags) in self
            .field_embeddings
            .iter()
            .zip(self.context_bags(contexts)?)
        {
            let t = g.param(table);
            parts.push(g.embedding_bag(t, bags)?);
        }
        let items = g.param(&self.item_embedding);
        let bags = prev_items.iter().map(|&i| alloc::vec![i]).collect();
        parts.push(g.embedding_bag(items, bags)?);
        let linear = g.concat(&parts)?;
        let product = g.pairwise_inner(linear, self.num_fields(), self.embedding_dim())?;
        g.concat(&[linear, product])
    }

    /// Contextual preference `c` for the given lanes.
    pub fn encode(
        &mut self,
        g: &mut Graph,
        contexts: &[&[usize]],
        prev_items: &[usize],
        mode: Mode,
    ) -> Result<Var> {
        let input = self.interaction_input(g, contexts, prev_items)?;
        let hidden = self.fc.forward(g, input)?;
        let hidden = g.relu(hidden);
        self.bn.forward(g, hidden, mode)
    }

    pub fn scores(&self, g: &mut Graph, c: Var) -> Result<Var> {
        self.score.forward(g, c)
    }

    pub fn named_params(&self) -> Vec<(String, &Parameter)> {
        let mut out: Vec<(String, &Parameter)> = self
            .field_names
            .iter()
            .zip(&self.field_embeddings)
            .map(|(n, p)| (format!("pnn.field.{n}"), p))
            .collect();
        out.push(("pnn.item_embedding".into(), &self.item_embedding));
        self.fc.named_params("pnn.fc", &mut out);
        self.bn.named_params("pnn.bn", &mut out);
        self.score.named_params("pnn.score", &mut out);
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut out: Vec<(String, &mut Parameter)> = self
            .field_names
            .iter()
            .zip(self.field_embeddings.iter_mut())
            .map(|(n, p)| (format!("pnn.field.{n}"), p))
            .collect();
        out.push(("pnn.item_embedding".into(), &mut self.item_embedding));
        self.fc.named_params_mut("pnn.fc", &mut out);
        self.bn.named_params_mut("pnn.bn", &mut out);
        self.score.named_params_mut("pnn.score", &mut out);
        out
    }

    pub fn export(&self) -> Vec<(String, Tensor)> {
        let mut out = export_params(self.named_params());
        out.push((
            "pnn.bn.running_mean".into(),
            Tensor::vector(self.bn.running_mean.clone()),
        ));
        out.push((
            "pnn.bn.running_var".into(),
            Tensor::vector(self.bn.running_var.clone()),
        ));
        out
    }

    pub fn import(&mut self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        import_params(self.named_params_mut(), tensors)?;
        import_vec(tensors, "pnn.bn.running_mean", &mut self.bn.running_mean)?;
        import_vec(tensors, "pnn.bn.running_var", &mut self.bn.running_var)
    }
}

/// `F·E + F(F−1)/2`.
pub fn fc_input_len(fields: usize, embedding: usize) -> usize {
    fields * embedding + product_len(fields)
}

/// `F(F−1)/2`.
pub fn product_len(fields: usize) -> usize {
    fields * fields.saturating_sub(1) / 2
}

impl SessionRecommender for PnnEncoder {
    fn num_items(&self) -> usize {
        PnnEncoder::num_items(self)
    }

    fn reset_state(&mut self, _lanes: usize) {}

    fn forward(
        &mut self,
        g: &mut Graph,
        batch: &MiniBatch,
        rows: &[usize],
        mode: Mode,
        _rng: &mut dyn RngCore,
    ) -> Result<Var> {
        let contexts: Vec<&[usize]> = rows.iter().map(|&r| batch.contexts[r].as_slice()).collect();
        let prev: Vec<usize> = rows.iter().map(|&r| batch.prev_items[r]).collect();
        let c = self.encode(g, &contexts, &prev, mode)?;
        self.scores(g, c)
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        self.named_params_mut()
    }
}
