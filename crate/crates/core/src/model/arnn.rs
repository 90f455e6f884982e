use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::{
    export_params, import_params, import_vec, GruSessionModel, PnnEncoder, SessionEncoder,
    SessionRecommender,
};
use crate::batch::MiniBatch;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::nn::{BatchNorm, Linear, Mode};
use crate::param::Parameter;
use crate::tensor::Tensor;

/// Frozen context encoder and session body joined by a trainable merge layer:
/// `logits = out(batchnorm(relu(merge([c; h]))))`.
///
/// Only the merge layers and the encoder's batch-norm scale/shift train.
#[derive(Debug, Clone)]
pub struct ArnnModel<S = GruSessionModel> {
    pub pnn: PnnEncoder,
    pub session: S,
    pub merge: Linear,
    pub merge_bn: BatchNorm,
    pub out: Linear,
}

impl<S: SessionEncoder> ArnnModel<S> {
    /// Wraps pretrained networks, dropping their score heads from use and
    /// freezing everything except the context encoder's batch norm.
    pub fn from_pretrained<R: Rng + ?Sized>(
        rng: &mut R,
        mut pnn: PnnEncoder,
        mut session: S,
        merge_hidden: usize,
    ) -> Result<Self> {
        if pnn.num_items() != session.num_items() {
            return Err(Error::Load(alloc::format!(
                "item vocabularies differ: context encoder {} vs session model {}",
                pnn.num_items(),
                session.num_items()
            )));
        }
        for (name, p) in pnn.named_params_mut() {
            p.frozen = !(name == "pnn.bn.gamma" || name == "pnn.bn.beta");
        }
        for (_, p) in session.named_params_mut() {
            p.frozen = true;
        }
        let input = pnn.output_dim() + session.hidden_size();
        let items = pnn.num_items();
        Ok(Self {
            merge: Linear::new(rng, input, merge_hidden),
            merge_bn: BatchNorm::new(merge_hidden),
            out: Linear::new(rng, merge_hidden, items),
            pnn,
            session,
        })
    }

    pub fn merge_input_len(&self) -> usize {
        self.merge.input_dim()
    }

    fn merge_params(&self) -> Vec<(String, &Parameter)> {
        let mut out = Vec::new();
        self.merge.named_params("merge.fc", &mut out);
        self.merge_bn.named_params("merge.bn", &mut out);
        self.out.named_params("merge.out", &mut out);
        out
    }

    fn merge_params_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut out = Vec::new();
        merge_params_mut(&mut self.merge, &mut self.merge_bn, &mut self.out, &mut out);
        out
    }

    /// Tensors of the merge block only.
    pub fn export_merge(&self) -> Vec<(String, Tensor)> {
        let mut out = export_params(self.merge_params());
        out.push((
            "merge.bn.running_mean".into(),
            Tensor::vector(self.merge_bn.running_mean.clone()),
        ));
        out.push((
            "merge.bn.running_var".into(),
            Tensor::vector(self.merge_bn.running_var.clone()),
        ));
        out
    }

    pub fn export(&self) -> Vec<(String, Tensor)> {
        let mut out = self.session.export();
        out.extend(self.pnn.export());
        out.extend(self.export_merge());
        out
    }

    pub fn import(&mut self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        self.session.import(tensors)?;
        self.pnn.import(tensors)?;
        import_params(self.merge_params_mut(), tensors)?;
        import_vec(
            tensors,
            "merge.bn.running_mean",
            &mut self.merge_bn.running_mean,
        )?;
        import_vec(
            tensors,
            "merge.bn.running_var",
            &mut self.merge_bn.running_var,
        )
    }
}

impl<S: SessionEncoder> SessionRecommender for ArnnModel<S> {
    fn num_items(&self) -> usize {
        self.pnn.num_items()
    }

    fn reset_state(&mut self, lanes: usize) {
        self.session.reset_state(lanes);
    }

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
        // The encoder's batch norm keeps training with the merge layer.
        let c = self.pnn.encode(g, &contexts, &prev, mode)?;
        let h = self
            .session
            .encode(g, &batch.prev_items, &batch.session_boundary, rows)?;
        let joined = g.concat(&[c, h])?;
        let m = self.merge.forward(g, joined)?;
        let m = g.relu(m);
        let m = self.merge_bn.forward(g, m, mode)?;
        self.out.forward(g, m)
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut out = self.session.named_params_mut();
        out.extend(self.pnn.named_params_mut());
        merge_params_mut(&mut self.merge, &mut self.merge_bn, &mut self.out, &mut out);
        out
    }
}

fn merge_params_mut<'a>(
    merge: &'a mut Linear,
    merge_bn: &'a mut BatchNorm,
    out_proj: &'a mut Linear,
    out: &mut Vec<(String, &'a mut Parameter)>,
) {
    merge.named_params_mut("merge.fc", out);
    merge_bn.named_params_mut("merge.bn", out);
    out_proj.named_params_mut("merge.out", out);
}
