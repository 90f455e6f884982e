//! Helpers shared by the integration and acceptance suites.
#![allow(dead_code)]

pub mod oracles;

use arnn_core::batch::MiniBatch;
use arnn_core::data::{Field, FieldSchema};
use arnn_core::graph::Top1Lane;
use arnn_core::model::{ArnnModel, GruSessionModel, PnnEncoder, SessionRecommender};
use arnn_core::nn::Mode;
use arnn_core::{Graph, Parameter, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Checks every parameter entry of a graph builder. `build` maps parameter
/// leaves to an output whose weighted sum is the loss.
pub fn check_op(
    params: &mut [Parameter],
    build: &dyn Fn(&mut Graph, &[Var]) -> Var,
    seed: u64,
) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loss_of = |params: &[Parameter], weights: &Option<Tensor>| -> (Graph, Var, Tensor) {
        let mut g = Graph::new();
        let leaves: Vec<Var> = params.iter().map(|p| g.param(p)).collect();
        let out = build(&mut g, &leaves);
        let shape = g.value(out).shape().to_vec();
        let w = weights.clone().unwrap_or_else(|| Tensor::zeros(&shape));
        let weighted = g.mul_const(out, w.clone()).unwrap();
        let loss = g.sum(weighted);
        (g, loss, w)
    };
    let (_, _, shape_probe) = loss_of(params, &None);
    let weights = Some(random(&mut rng, shape_probe.shape()));
    let (g, loss, _) = loss_of(params, &weights);
    let grads = g.backward(loss).unwrap();
    drop(g);
    for p in params.iter_mut() {
        p.zero_grad();
        p.accumulate(&grads);
    }
    for i in 0..params.len() {
        for e in 0..params[i].value().len() {
            let base = params[i].value().data()[e];
            params[i].value_mut().data_mut()[e] = base + H;
            let (g, l, _) = loss_of(params, &weights);
            let up = g.value(l).item();
            params[i].value_mut().data_mut()[e] = base - H;
            let (g, l, _) = loss_of(params, &weights);
            let down = g.value(l).item();
            params[i].value_mut().data_mut()[e] = base;
            let numeric = (up - down) / (2.0 * H);
            let analytic = params[i].grad.data()[e];
            if rel_err(analytic, numeric) > TOL {
                return Err(format!(
                    "param {i} entry {e}: analytic {analytic} numeric {numeric}"
                ));
            }
        }
    }
    Ok(())
}

pub fn schema(fields: &[usize], items: usize) -> FieldSchema {
    let fields = fields
        .iter()
        .enumerate()
        .map(|(f, &n)| Field {
            name: format!("f{f}"),
            categories: (0..n).map(|c| format!("c{c}")).collect(),
        })
        .collect();
    FieldSchema::new(fields, (0..items).map(|i| format!("i{i}")).collect()).unwrap()
}

pub fn random_batch(rng: &mut ChaCha8Rng, schema: &FieldSchema, lanes: usize) -> MiniBatch {
    let v = schema.num_items();
    MiniBatch {
        prev_items: (0..lanes).map(|_| rng.gen_range(0..v)).collect(),
        target_items: (0..lanes).map(|_| rng.gen_range(0..v)).collect(),
        contexts: (0..lanes)
            .map(|_| {
                schema
                    .fields()
                    .iter()
                    .zip(schema.offsets())
                    .flat_map(|(f, &o)| {
                        let n = f.categories.len();
                        let picks = rng.gen_range(1..=2);
                        let mut ps: Vec<usize> =
                            (0..picks).map(|_| o + rng.gen_range(0..n)).collect();
                        ps.sort_unstable();
                        ps.dedup();
                        ps
                    })
                    .collect()
            })
            .collect(),
        session_boundary: (0..lanes).map(|_| rng.gen_bool(0.3)).collect(),
        active: vec![true; lanes],
    }
}

/// Finite-difference check of a whole model's forward pass in train mode.
/// The model is primed by one step so recurrent state is non-trivial.
pub fn check_model<M: SessionRecommender + Clone>(
    model: &M,
    batch: &MiniBatch,
    seed: u64,
) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<usize> = (0..batch.lanes()).collect();
    let weights = random(&mut rng, &[rows.len(), model.num_items()]);
    let loss = |m: &mut M| -> (Graph, Var) {
        let mut g = Graph::new();
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let logits = m
            .forward(&mut g, batch, &rows, Mode::Train, &mut r)
            .unwrap();
        let w = g.mul_const(logits, weights.clone()).unwrap();
        let l = g.sum(w);
        (g, l)
    };
    let mut m = model.clone();
    let (g, l) = loss(&mut m);
    let grads = g.backward(l).unwrap();
    drop(g);
    let analytic: Vec<(String, Tensor)> = m
        .params_mut()
        .into_iter()
        .map(|(n, p)| {
            p.zero_grad();
            p.accumulate(&grads);
            (n, p.grad.clone())
        })
        .collect();
    for (pi, (name, grad)) in analytic.iter().enumerate() {
        for e in 0..grad.len() {
            let eval = |delta: f64| {
                let mut m = model.clone();
                m.params_mut()[pi].1.value_mut().data_mut()[e] += delta;
                let (g, l) = loss(&mut m);
                g.value(l).item()
            };
            let numeric = (eval(H) - eval(-H)) / (2.0 * H);
            if rel_err(grad.data()[e], numeric) > TOL {
                return Err(format!(
                    "{name}[{e}]: analytic {} numeric {numeric}",
                    grad.data()[e]
                ));
            }
        }
    }
    Ok(())
}

pub fn prime<M: SessionRecommender>(
    model: &mut M,
    rng: &mut ChaCha8Rng,
    schema: &FieldSchema,
    lanes: usize,
) {
    model.reset_state(lanes);
    let warm = random_batch(rng, schema, lanes);
    let mut g = Graph::new();
    let rows: Vec<usize> = (0..lanes).collect();
    model
        .forward(&mut g, &warm, &rows, Mode::Inference, rng)
        .unwrap();
}

/// GRU step with H=3 over 4 items, primed so the hidden state is non-zero.
pub fn gru_instance(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = schema(&[2], 4);
    let mut gru = GruSessionModel::new(&mut rng, 4, 3, 0.0);
    prime(&mut gru, &mut rng, &schema, 3);
    let batch = random_batch(&mut rng, &schema, 3);
    check_model(&gru, &batch, seed)
}

/// PNN with E=3, three context fields plus the item field (F=4), D_c=5.
pub fn pnn_instance(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = schema(&[2, 3, 4], 5);
    let pnn = PnnEncoder::new(&mut rng, &schema, 3, 5);
    assert_eq!(pnn.num_fields(), 4);
    let batch = random_batch(&mut rng, &schema, 3);
    check_model(&pnn, &batch, seed)
}

/// Merge network over a PNN and a primed GRU.
pub fn merge_instance(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = schema(&[2, 3], 4);
    let pnn = PnnEncoder::new(&mut rng, &schema, 3, 4);
    let gru = GruSessionModel::new(&mut rng, 4, 3, 0.0);
    let mut arnn =
        ArnnModel::from_pretrained(&mut rng, pnn, gru, 4).expect("matching vocabularies");
    prime(&mut arnn, &mut rng, &schema, 3);
    let batch = random_batch(&mut rng, &schema, 3);
    check_model(&arnn, &batch, seed)
}

/// TOP1 over a random `b × n` logit matrix with random negative sets.
pub fn top1_instance(b: usize, n: usize, seed: u64) -> Result<(), String> {
    let n = n.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lanes: Vec<Top1Lane> = (0..b)
        .map(|row| {
            let target = rng.gen_range(0..n);
            let negatives = (0..n)
                .filter(|&c| c != target && rng.gen_bool(0.6))
                .collect::<Vec<_>>();
            let negatives = if negatives.is_empty() {
                vec![(target + 1) % n]
            } else {
                negatives
            };
            Top1Lane {
                row,
                target,
                negatives,
            }
        })
        .collect();
    let mut ps = vec![Parameter::new(random(&mut rng, &[b, n]))];
    check_op(&mut ps, &|g, v| g.top1(v[0], lanes.clone()).unwrap(), seed)
}
