//! Layer building blocks shared by the three networks.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::Result;
use crate::graph::{Graph, Normalization, Var};
use crate::param::Parameter;
use crate::tensor::Tensor;

/// Whether a forward pass trains (batch statistics, dropout) or infers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Uniform in ±sqrt(6/(rows+cols)).
pub fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let bound = libm::sqrt(6.0 / (rows + cols) as f64);
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("rows*cols values")
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, input: usize, output: usize) -> Self {
        Self {
            weight: Parameter::new(glorot_uniform(rng, input, output)),
            bias: Parameter::new(Tensor::zeros(&[output])),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(&self.weight);
        let b = g.param(&self.bias);
        g.affine(x, w, Some(b))
    }

    pub fn named_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        out.push((alloc::format!("{prefix}.weight"), &self.weight));
        out.push((alloc::format!("{prefix}.bias"), &self.bias));
    }

    pub fn named_params_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Parameter)>,
    ) {
        out.push((alloc::format!("{prefix}.weight"), &mut self.weight));
        out.push((alloc::format!("{prefix}.bias"), &mut self.bias));
    }
}

/// Batch normalization with learned scale/shift and running statistics.
///
/// Running statistics follow `running = (1 − momentum)·running + momentum·batch`
/// with the unbiased batch variance.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Parameter::new(Tensor::filled(&[dim], 1.0)),
            beta: Parameter::new(Tensor::zeros(&[dim])),
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            eps: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn dim(&self) -> usize {
        self.running_mean.len()
    }

    pub fn forward(&mut self, g: &mut Graph, x: Var, mode: Mode) -> Result<Var> {
        let gamma = g.param(&self.gamma);
        let beta = g.param(&self.beta);
        match mode {
            Mode::Train => {
                let rows = g.value(x).rows();
                let (y, stats) =
                    g.batch_norm(x, gamma, beta, Normalization::Batch { eps: self.eps })?;
                if let Some((mean, var)) = stats {
                    let unbias = rows as f64 / (rows as f64 - 1.0);
                    let m = self.momentum;
                    for (r, b) in self.running_mean.iter_mut().zip(&mean) {
                        *r = (1.0 - m) * *r + m * b;
                    }
                    for (r, b) in self.running_var.iter_mut().zip(&var) {
                        *r = (1.0 - m) * *r + m * b * unbias;
                    }
                }
                Ok(y)
            }
            Mode::Inference => {
                let (y, _) = g.batch_norm(
                    x,
                    gamma,
                    beta,
                    Normalization::Fixed {
                        mean: &self.running_mean,
                        var: &self.running_var,
                        eps: self.eps,
                    },
                )?;
                Ok(y)
            }
        }
    }

    pub fn named_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        out.push((alloc::format!("{prefix}.gamma"), &self.gamma));
        out.push((alloc::format!("{prefix}.beta"), &self.beta));
    }

    pub fn named_params_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Parameter)>,
    ) {
        out.push((alloc::format!("{prefix}.gamma"), &mut self.gamma));
        out.push((alloc::format!("{prefix}.beta"), &mut self.beta));
    }
}
