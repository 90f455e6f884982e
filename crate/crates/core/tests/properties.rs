//! Randomized properties of the numeric core, the models, evaluation and the
//! data pipeline.

mod support;

use arnn_core::data::holdout_validation;
use arnn_core::eval::{rank_test_set, Inference};
use arnn_core::graph::{sigmoid, Normalization};
use arnn_core::model::{ArnnModel, GruSessionModel, PnnEncoder, SessionEncoder};
use arnn_core::nn::Mode;
use arnn_core::synth::{generate, SynthConfig};
use arnn_core::train::{run_stage, Stage, TrainPlan};
use arnn_core::{softmax, Graph, Parameter, Tensor};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracles;
use support::{random, random_batch, schema};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..6, cols in 1usize..12, scale in 0.1f64..60.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = random(&mut rng, &[rows, cols]);
        x.data_mut().iter_mut().for_each(|v| *v *= scale);
        let y = softmax(&x);
        for r in 0..rows {
            let s: f64 = y.row(r).iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-9, "row {} sums to {}", r, s);
            prop_assert!(y.row(r).iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn batch_norm_standardizes(rows in 8usize..64, cols in 1usize..6, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = random(&mut rng, &[rows, cols]);
        x.data_mut().iter_mut().for_each(|v| *v *= 10.0);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let gamma = g.constant(Tensor::filled(&[cols], 1.0));
        let beta = g.constant(Tensor::zeros(&[cols]));
        let (y, _) = g.batch_norm(xv, gamma, beta, Normalization::Batch { eps: 1e-5 }).unwrap();
        let y = g.value(y);
        for c in 0..cols {
            let col: Vec<f64> = (0..rows).map(|r| x.get(r, c)).collect();
            let m = col.iter().sum::<f64>() / rows as f64;
            let var_in = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / rows as f64;
            prop_assume!(var_in >= 1.0);
            let out: Vec<f64> = (0..rows).map(|r| y.get(r, c)).collect();
            let mean = out.iter().sum::<f64>() / rows as f64;
            let var = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64;
            prop_assert!(mean.abs() <= 1e-6, "column {} mean {}", c, mean);
            prop_assert!((var - 1.0).abs() <= 1e-4, "column {} variance {}", c, var);
        }
    }

    #[test]
    fn pairwise_products_match_dot_products(b in 1usize..5, fields in 2usize..6, dim in 1usize..5, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[b, fields * dim]);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let p = g.pairwise_inner(xv, fields, dim).unwrap();
        let p = g.value(p).clone();
        let dot = |r: usize, f: usize, h: usize| -> f64 {
            (0..dim).map(|d| x.get(r, f * dim + d) * x.get(r, h * dim + d)).sum()
        };
        for r in 0..b {
            let mut col = 0;
            for f in 0..fields {
                for h in f + 1..fields {
                    prop_assert!((p.get(r, col) - dot(r, f, h)).abs() <= 1e-12);
                    prop_assert_eq!(dot(r, f, h).to_bits(), dot(r, h, f).to_bits());
                    col += 1;
                }
            }
            prop_assert_eq!(col, p.cols());
        }
    }
}

/// GRU step on a single scalar unit against a hand-written recurrence.
#[test]
fn gru_matches_scalar_oracle() {
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gru = GruSessionModel::new(&mut rng, 3, 1, 0.0);
        let mut set = |p: &mut Parameter| {
            let v = rng.gen_range(-1.5..1.5);
            p.value_mut().data_mut().iter_mut().for_each(|x| *x = v);
        };
        for p in [
            &mut gru.w_z,
            &mut gru.u_z,
            &mut gru.b_z,
            &mut gru.w_r,
            &mut gru.u_r,
            &mut gru.b_r,
            &mut gru.w_n,
            &mut gru.u_n,
            &mut gru.b_n,
        ] {
            set(p);
        }
        let s = |p: &Parameter| p.value().data()[0];
        let items = [
            rng.gen_range(0..3),
            rng.gen_range(0..3),
            rng.gen_range(0..3),
        ];
        gru.reset_state(1);
        let mut h = 0.0f64;
        for (t, &item) in items.iter().enumerate() {
            let x = gru.item_embedding.value().get(item, 0);
            let z = sigmoid(x * s(&gru.w_z) + h * s(&gru.u_z) + s(&gru.b_z));
            let r = sigmoid(x * s(&gru.w_r) + h * s(&gru.u_r) + s(&gru.b_r));
            let n = (x * s(&gru.w_n) + (r * h) * s(&gru.u_n) + s(&gru.b_n)).tanh();
            h = (1.0 - z) * h + z * n;
            let mut g = Graph::new();
            let out = gru.step(&mut g, &[item], &[t == 0], &[0]).unwrap();
            let got = g.value(out).get(0, 0);
            assert!(
                (got - h).abs() <= 1e-10,
                "seed {seed} step {t}: {got} vs {h}"
            );
        }
    }
}

/// Advancing some lanes leaves the others untouched, and a lane's state
/// does not depend on which other lanes run with it.
#[test]
fn hidden_state_is_per_lane() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gru = GruSessionModel::new(&mut rng, 5, 4, 0.0);
        let mut solo = gru.clone();
        gru.reset_state(3);
        solo.reset_state(3);
        let items: Vec<usize> = (0..3).map(|_| rng.gen_range(0..5)).collect();
        let mut g = Graph::new();
        gru.step(&mut g, &items, &[true; 3], &[0, 1, 2]).unwrap();
        let before = gru.hidden().clone();
        let next: Vec<usize> = (0..3).map(|_| rng.gen_range(0..5)).collect();
        gru.step(&mut g, &next, &[false; 3], &[1]).unwrap();
        assert_eq!(gru.hidden().row(0), before.row(0));
        assert_eq!(gru.hidden().row(2), before.row(2));
        solo.step(&mut g, &items, &[true; 3], &[1]).unwrap();
        solo.step(&mut g, &next, &[false; 3], &[1]).unwrap();
        assert_eq!(solo.hidden().row(1), gru.hidden().row(1));
    }
}

fn small_synth(
    sessions: usize,
) -> (
    arnn_core::data::SessionDataset,
    arnn_core::data::SessionDataset,
) {
    let data = generate(&SynthConfig {
        sessions,
        ..SynthConfig::default()
    })
    .unwrap();
    let config = arnn_core::data::PreprocessConfig {
        item_coverage: 1.0,
        category_coverage: 1.0,
        ..Default::default()
    };
    let pre = arnn_core::data::preprocess(data.events, &data.field_names, &config).unwrap();
    (pre.train, pre.test)
}

/// Merge training leaves the session network bit-identical and changes only
/// the batch-norm tensors of the context encoder.
#[test]
fn merge_training_respects_freeze() {
    let (train, _) = small_synth(300);
    let (fit, val) = holdout_validation(&train, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v = train.schema.num_items();
    let gru = GruSessionModel::new(&mut rng, v, 8, 0.0);
    let pnn = PnnEncoder::new(&mut rng, &train.schema, 4, 8);
    let arnn = ArnnModel::from_pretrained(&mut rng, pnn.clone(), gru.clone(), 8).unwrap();
    let mut plan = TrainPlan::new(Stage::Merge, 1);
    plan.epochs = 2;
    let out = run_stage(&plan, arnn, &fit, &val).unwrap();
    let bits = |ts: Vec<(String, Tensor)>| -> Vec<(String, Vec<u64>)> {
        ts.into_iter()
            .map(|(n, t)| (n, t.data().iter().map(|x| x.to_bits()).collect()))
            .collect()
    };
    assert_eq!(bits(out.model.session.export()), bits(gru.export()));
    let after = bits(out.model.pnn.export());
    let before = bits(pnn.export());
    let mut changed_bn = false;
    for ((name, a), (_, b)) in after.iter().zip(&before) {
        if name.starts_with("pnn.bn.") {
            changed_bn |= a != b;
        } else {
            assert_eq!(a, b, "{name} changed");
        }
    }
    assert!(changed_bn);
}

/// Rewriting what follows a step never changes the predictions made up to
/// and including it.
#[test]
fn predictions_depend_on_prefix_only() {
    let (_, test) = small_synth(400);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let v = test.schema.num_items();
    let gru = GruSessionModel::new(&mut rng, v, 6, 0.0);
    let pnn = PnnEncoder::new(&mut rng, &test.schema, 3, 6);
    let mut arnn = ArnnModel::from_pretrained(&mut rng, pnn, gru, 6).unwrap();
    let (lists, _) = rank_test_set(&mut Inference(&mut arnn), &test, 10, 1).unwrap();
    let mut altered = test.clone();
    let mut keep = Vec::new();
    for s in &mut altered.sessions {
        let cut = rng.gen_range(1..s.len());
        let mut tail: Vec<usize> = s.steps[cut..].iter().map(|st| st.item).collect();
        tail.shuffle(&mut rng);
        for (st, item) in s.steps[cut..].iter_mut().zip(tail) {
            st.item = if rng.gen_bool(0.5) {
                item
            } else {
                rng.gen_range(0..v)
            };
        }
        // Predictions for targets 1..=cut see only steps before `cut`.
        keep.push(cut);
    }
    let (again, _) = rank_test_set(&mut Inference(&mut arnn), &altered, 10, 1).unwrap();
    let mut pos = 0;
    for (s, cut) in test.sessions.iter().zip(keep) {
        for j in 1..s.len() {
            if j <= cut {
                assert_eq!(lists[pos], again[pos], "target {j} with prefix cut {cut}");
            }
            pos += 1;
        }
    }
    assert_eq!(pos, lists.len());
}

/// Same seed, same training trajectory.
#[test]
fn training_is_deterministic() {
    let (train, _) = small_synth(200);
    let (fit, val) = holdout_validation(&train, 0.1).unwrap();
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gru = GruSessionModel::new(&mut rng, fit.schema.num_items(), 6, 0.2);
        let mut plan = TrainPlan::new(Stage::GruPretrain, 9);
        plan.epochs = 2;
        let out = run_stage(&plan, gru, &fit, &val).unwrap();
        (out.history, out.model.export())
    };
    let (h1, m1) = run();
    let (h2, m2) = run();
    assert_eq!(h1, h2);
    assert_eq!(m1, m2);
}

#[test]
fn metrics_equal_brute_force() {
    oracles::metric_oracle(1000).unwrap();
}

#[test]
fn itemknn_equals_dense_cosine() {
    oracles::itemknn_oracle(40).unwrap();
}

#[test]
fn coverage_is_monotone() {
    oracles::coverage_monotone(300).unwrap();
}

#[test]
fn one_hot_round_trip() {
    oracles::one_hot_roundtrip(300).unwrap();
}

#[test]
fn session_gap_boundary() {
    oracles::gap_boundary(300).unwrap();
}

#[test]
fn cold_test_items_removed() {
    oracles::cold_items_removed(300).unwrap();
}

#[test]
fn generator_counts_survive_preprocessing() {
    oracles::generator_bookkeeping(2000).unwrap();
}

#[test]
fn inference_ignores_mode_free_rng() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = schema(&[2], 4);
    let mut pnn = PnnEncoder::new(&mut rng, &s, 3, 4);
    let batch = random_batch(&mut rng, &s, 3);
    let rows = [0, 1, 2];
    let mut run = |seed| {
        let mut g = Graph::new();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let out = arnn_core::model::SessionRecommender::forward(
            &mut pnn,
            &mut g,
            &batch,
            &rows,
            Mode::Inference,
            &mut r,
        )
        .unwrap();
        g.value(out).clone()
    };
    assert_eq!(run(1), run(2));
}
