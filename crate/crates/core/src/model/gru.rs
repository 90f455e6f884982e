use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::{dropout_mask, export_params, import_params, SessionEncoder, SessionRecommender};
use crate::batch::MiniBatch;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::nn::{glorot_uniform, Linear, Mode};
use crate::param::Parameter;
use crate::tensor::Tensor;

/// Gated recurrent unit over learned item embeddings with an output
/// projection to item scores.
///
/// ```text
/// z  = σ(x·W_z + h·U_z + b_z)
/// r  = σ(x·W_r + h·U_r + b_r)
/// n  = tanh(x·W_n + (r ⊙ h)·U_n + b_n)
/// h' = (1 − z) ⊙ h + z ⊙ n
/// ```
#[derive(Debug, Clone)]
pub struct GruSessionModel {
    pub item_embedding: Parameter,
    pub w_z: Parameter,
    pub u_z: Parameter,
    pub b_z: Parameter,
    pub w_r: Parameter,
    pub u_r: Parameter,
    pub b_r: Parameter,
    pub w_n: Parameter,
    pub u_n: Parameter,
    pub b_n: Parameter,
    pub output: Linear,
    pub dropout: f64,
    hidden: Tensor,
}

impl GruSessionModel {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        num_items: usize,
        hidden: usize,
        dropout: f64,
    ) -> Self {
        let mut square = || Parameter::new(glorot_uniform(rng, hidden, hidden));
        let (w_z, u_z, w_r, u_r, w_n, u_n) =
            (square(), square(), square(), square(), square(), square());
        let bias = || Parameter::new(Tensor::zeros(&[hidden]));
        Self {
            item_embedding: Parameter::new(glorot_uniform(rng, num_items, hidden)),
            w_z,
            u_z,
            b_z: bias(),
            w_r,
            u_r,
            b_r: bias(),
            w_n,
            u_n,
            b_n: bias(),
            output: Linear::new(rng, hidden, num_items),
            dropout,
            hidden: Tensor::zeros(&[0, hidden]),
        }
    }

    /// Current per-lane hidden state (`lanes × H`).
    pub fn hidden(&self) -> &Tensor {
        &self.hidden
    }

    /// Advances `rows` and returns their new hidden states.
    pub fn step(
        &mut self,
        g: &mut Graph,
        prev_items: &[usize],
        boundaries: &[bool],
        rows: &[usize],
    ) -> Result<Var> {
        let h = self.hidden_size();
        let v = SessionEncoder::num_items(self);
        let bags = rows
            .iter()
            .map(|&r| {
                let item = prev_items[r];
                if item >= v {
                    return Err(Error::Vocabulary {
                        index: item,
                        size: v,
                    });
                }
                Ok(alloc::vec![item])
            })
            .collect::<Result<Vec<_>>>()?;
        let mut h_prev = self.hidden.select_rows(rows);
        for (k, &r) in rows.iter().enumerate() {
            if boundaries[r] {
                h_prev.row_mut(k).fill(0.0);
            }
        }
        let emb = g.param(&self.item_embedding);
        let x = g.embedding_bag(emb, bags)?;
        let hp = g.constant(h_prev);

        let gate = |g: &mut Graph, w: &Parameter, u: &Parameter, b: &Parameter, hin: Var| {
            let (w, u, b) = (g.param(w), g.param(u), g.param(b));
            let xs = g.affine(x, w, Some(b))?;
            let hs = g.affine(hin, u, None)?;
            g.add(xs, hs)
        };
        let z = gate(g, &self.w_z, &self.u_z, &self.b_z, hp)?;
        let z = g.sigmoid(z);
        let r = gate(g, &self.w_r, &self.u_r, &self.b_r, hp)?;
        let r = g.sigmoid(r);
        let rh = g.mul(r, hp)?;
        let n = gate(g, &self.w_n, &self.u_n, &self.b_n, rh)?;
        let n = g.tanh(n);
        // h' = h + z ⊙ (n − h)
        let diff = g.sub(n, hp)?;
        let upd = g.mul(z, diff)?;
        let h_new = g.add(hp, upd)?;

        let out = g.value(h_new);
        debug_assert_eq!(out.cols(), h);
        for (k, &r) in rows.iter().enumerate() {
            self.hidden.row_mut(r).copy_from_slice(out.row(k));
        }
        Ok(h_new)
    }

    /// Item logits from hidden states.
    pub fn scores(&self, g: &mut Graph, hidden: Var) -> Result<Var> {
        self.output.forward(g, hidden)
    }
}

impl SessionEncoder for GruSessionModel {
    fn hidden_size(&self) -> usize {
        self.w_z.shape()[1]
    }

    fn num_items(&self) -> usize {
        self.item_embedding.shape()[0]
    }

    fn reset_state(&mut self, lanes: usize) {
        self.hidden = Tensor::zeros(&[lanes, self.hidden_size()]);
    }

    fn encode(
        &mut self,
        g: &mut Graph,
        prev_items: &[usize],
        boundaries: &[bool],
        rows: &[usize],
    ) -> Result<Var> {
        self.step(g, prev_items, boundaries, rows)
    }

    fn named_params(&self) -> Vec<(String, &Parameter)> {
        let mut out = alloc::vec![
            ("gru.item_embedding".into(), &self.item_embedding),
            ("gru.w_z".into(), &self.w_z),
            ("gru.u_z".into(), &self.u_z),
            ("gru.b_z".into(), &self.b_z),
            ("gru.w_r".into(), &self.w_r),
            ("gru.u_r".into(), &self.u_r),
            ("gru.b_r".into(), &self.b_r),
            ("gru.w_n".into(), &self.w_n),
            ("gru.u_n".into(), &self.u_n),
            ("gru.b_n".into(), &self.b_n),
        ];
        self.output.named_params("gru.output", &mut out);
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut out = alloc::vec![
            ("gru.item_embedding".into(), &mut self.item_embedding),
            ("gru.w_z".into(), &mut self.w_z),
            ("gru.u_z".into(), &mut self.u_z),
            ("gru.b_z".into(), &mut self.b_z),
            ("gru.w_r".into(), &mut self.w_r),
            ("gru.u_r".into(), &mut self.u_r),
            ("gru.b_r".into(), &mut self.b_r),
            ("gru.w_n".into(), &mut self.w_n),
            ("gru.u_n".into(), &mut self.u_n),
            ("gru.b_n".into(), &mut self.b_n),
        ];
        self.output.named_params_mut("gru.output", &mut out);
        out
    }

    fn export(&self) -> Vec<(String, Tensor)> {
        export_params(self.named_params())
    }

    fn import(&mut self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        import_params(self.named_params_mut(), tensors)
    }
}

impl SessionRecommender for GruSessionModel {
    fn num_items(&self) -> usize {
        SessionEncoder::num_items(self)
    }

    fn reset_state(&mut self, lanes: usize) {
        SessionEncoder::reset_state(self, lanes);
    }

    fn forward(
        &mut self,
        g: &mut Graph,
        batch: &MiniBatch,
        rows: &[usize],
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<Var> {
        let mut h = self.step(g, &batch.prev_items, &batch.session_boundary, rows)?;
        if mode == Mode::Train && self.dropout > 0.0 {
            let mask = dropout_mask(rng, rows.len(), self.hidden_size(), self.dropout);
            h = g.mul_const(h, mask)?;
        }
        self.scores(g, h)
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        self.named_params_mut()
    }
}
