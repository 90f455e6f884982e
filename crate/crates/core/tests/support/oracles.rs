//! Independent brute-force oracles over randomized inputs. Each returns the
//! first counterexample found.

use std::collections::BTreeSet;

use arnn_core::data::{
    encode_sessions, mark_sessions, preprocess, sample_items_by_coverage, split_train_test,
    Attributes, Field, FieldSchema, PreprocessConfig, RawEvent, RawSession, Session,
    SessionDataset, Step,
};
use arnn_core::eval::{mrr_at_k, recall_at_k, ItemKnnIndex};
use arnn_core::synth::{generate, SynthConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn event(user: &str, item: &str, t: u64) -> RawEvent {
    RawEvent {
        user_id: user.into(),
        item_id: item.into(),
        timestamp: t,
        attributes: Attributes::new(),
    }
}

/// Recall and MRR equal a direct recount, and MRR never exceeds recall.
pub fn metric_oracle(cases: u64) -> Result<(), String> {
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let v = rng.gen_range(2..40);
        let k = rng.gen_range(1..=v.min(10));
        let n = rng.gen_range(1..30);
        let universe: Vec<usize> = (0..v).collect();
        let mut lists = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..n {
            let len = rng.gen_range(0..=k);
            lists.push(
                universe
                    .choose_multiple(&mut rng, len)
                    .copied()
                    .collect::<Vec<_>>(),
            );
            targets.push(rng.gen_range(0..v));
        }
        let mut hits = 0usize;
        let mut rr = 0.0;
        for (list, &t) in lists.iter().zip(&targets) {
            for (pos, &item) in list.iter().enumerate() {
                if item == t {
                    hits += 1;
                    rr += 1.0 / (pos + 1) as f64;
                }
            }
        }
        let want_recall = hits as f64 / n as f64;
        let want_mrr = rr / n as f64;
        let recall = recall_at_k(&lists, &targets, k).map_err(|e| e.to_string())?;
        let mrr = mrr_at_k(&lists, &targets, k).map_err(|e| e.to_string())?;
        if recall != want_recall || mrr != want_mrr || mrr > recall {
            return Err(format!(
                "case {case}: recall {recall} vs {want_recall}, mrr {mrr} vs {want_mrr}"
            ));
        }
    }
    Ok(())
}

/// A dataset with one trivial context field over `items` named items.
pub fn plain_dataset(sessions: Vec<Vec<usize>>, items: usize) -> SessionDataset {
    let schema = FieldSchema::new(
        vec![Field {
            name: "f".into(),
            categories: vec!["a".into()],
        }],
        (0..items).map(|i| format!("i{i}")).collect(),
    )
    .expect("valid schema");
    let sessions = sessions
        .into_iter()
        .enumerate()
        .map(|(s, items)| Session {
            steps: items
                .into_iter()
                .map(|item| Step {
                    context: vec![0],
                    item,
                })
                .collect(),
            start_time: s as u64,
        })
        .collect();
    SessionDataset::new(sessions, schema).expect("valid dataset")
}

/// With λ = 0 and no neighbour cap the index equals dense cosine similarity
/// of binary session-incidence vectors.
pub fn itemknn_oracle(cases: u64) -> Result<(), String> {
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
        let items = rng.gen_range(2..=50);
        let n_sessions = rng.gen_range(5..40);
        let sessions: Vec<Vec<usize>> = (0..n_sessions)
            .map(|_| {
                (0..rng.gen_range(2..8))
                    .map(|_| rng.gen_range(0..items))
                    .collect()
            })
            .collect();
        let mut incidence = vec![vec![0.0f64; n_sessions]; items];
        for (s, sess) in sessions.iter().enumerate() {
            for &i in sess {
                incidence[i][s] = 1.0;
            }
        }
        let ds = plain_dataset(sessions, items);
        let index = ItemKnnIndex::build(&ds, 0.0, usize::MAX).map_err(|e| e.to_string())?;
        for i in 0..items {
            for j in 0..items {
                let dot: f64 = incidence[i]
                    .iter()
                    .zip(&incidence[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let ni: f64 = incidence[i].iter().map(|a| a * a).sum::<f64>().sqrt();
                let nj: f64 = incidence[j].iter().map(|a| a * a).sum::<f64>().sqrt();
                let want = if i == j || dot == 0.0 {
                    0.0
                } else {
                    dot / (ni * nj)
                };
                let got = index.similarity(i, j);
                if (got - want).abs() > 1e-12 {
                    return Err(format!("case {case}: sim({i},{j}) = {got}, dense {want}"));
                }
            }
        }
    }
    Ok(())
}

/// Raising coverage never drops an item.
pub fn coverage_monotone(cases: u64) -> Result<(), String> {
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + case);
        let items = rng.gen_range(1..30);
        let events: Vec<RawEvent> = (0..rng.gen_range(1..200))
            .map(|t| {
                // Skewed popularity: low indices are drawn more often.
                let i = rng.gen_range(0..items) * rng.gen_range(0..=1);
                event("u", &format!("i{i}"), t)
            })
            .collect();
        let mut a: f64 = rng.gen_range(0.01..=1.0);
        let mut b: f64 = rng.gen_range(0.01..=1.0);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        let small = sample_items_by_coverage(&events, a).map_err(|e| e.to_string())?;
        let large = sample_items_by_coverage(&events, b).map_err(|e| e.to_string())?;
        let large_set: BTreeSet<&String> = large.iter().collect();
        if !small.iter().all(|i| large_set.contains(i)) || large[..small.len()] != small[..] {
            return Err(format!(
                "case {case}: coverage {a} kept {small:?}, {b} kept {large:?}"
            ));
        }
        let full = sample_items_by_coverage(&events, 1.0).map_err(|e| e.to_string())?;
        let distinct: BTreeSet<&str> = events.iter().map(|e| e.item_id.as_str()).collect();
        if full.len() != distinct.len() {
            return Err(format!(
                "case {case}: full coverage kept {} of {}",
                full.len(),
                distinct.len()
            ));
        }
    }
    Ok(())
}

/// Decoding an encoded context gives back the same categories per field.
pub fn one_hot_roundtrip(cases: u64) -> Result<(), String> {
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + case);
        let fields: Vec<Field> = (0..rng.gen_range(1..6))
            .map(|f| Field {
                name: format!("f{f}"),
                categories: (0..rng.gen_range(1..6)).map(|c| format!("c{c}")).collect(),
            })
            .collect();
        let schema =
            FieldSchema::new(fields.clone(), vec!["i".into()]).map_err(|e| e.to_string())?;
        let mut attrs = Attributes::new();
        for f in &fields {
            let n = rng.gen_range(1..=f.categories.len());
            let mut picks: Vec<String> =
                f.categories.choose_multiple(&mut rng, n).cloned().collect();
            picks.sort_by_key(|c| f.categories.iter().position(|x| x == c));
            attrs.insert(f.name.clone(), picks);
        }
        let positions = schema.encode_context(&attrs).map_err(|e| e.to_string())?;
        let back = schema
            .decode_context(&positions)
            .map_err(|e| e.to_string())?;
        if back != attrs {
            return Err(format!("case {case}: {attrs:?} came back as {back:?}"));
        }
        let again = schema.encode_context(&back).map_err(|e| e.to_string())?;
        if again != positions {
            return Err(format!("case {case}: re-encoding changed positions"));
        }
    }
    Ok(())
}

/// Sessions break exactly where a user's gap exceeds the threshold; a gap
/// equal to the threshold keeps the session together.
pub fn gap_boundary(cases: u64) -> Result<(), String> {
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + case);
        let threshold = rng.gen_range(1..100u64);
        let mut events = Vec::new();
        let mut expected: Vec<(String, Vec<u64>)> = Vec::new();
        for u in 0..rng.gen_range(1..5) {
            let user = format!("u{u}");
            let mut t = rng.gen_range(0..50u64);
            let mut current = vec![t];
            events.push(event(&user, "i", t));
            for _ in 0..rng.gen_range(0..12) {
                let gap = match rng.gen_range(0..3) {
                    0 => threshold,
                    1 => threshold + 1,
                    _ => rng.gen_range(0..2 * threshold),
                };
                t += gap;
                if gap > threshold {
                    expected.push((user.clone(), std::mem::take(&mut current)));
                }
                current.push(t);
                events.push(event(&user, "i", t));
            }
            expected.push((user, current));
        }
        events.sort_by_key(|e| e.timestamp);
        let mut expected: Vec<(String, Vec<u64>)> = expected
            .into_iter()
            .filter(|(_, ts)| ts.len() >= 2)
            .collect();
        expected.sort_by_key(|(_, ts)| ts[0]);
        let got = mark_sessions(&events, threshold).map_err(|e| e.to_string())?;
        let mut got: Vec<(String, Vec<u64>)> = got
            .into_iter()
            .map(|s| (s.user_id, s.events.iter().map(|e| e.timestamp).collect()))
            .collect();
        // Sessions of different users starting together may come in either order.
        got.sort();
        expected.sort();
        if got != expected {
            return Err(format!(
                "case {case}: threshold {threshold}: {got:?} vs {expected:?}"
            ));
        }
    }
    Ok(())
}

/// After the split no test event refers to an item unseen in training, and
/// every surviving test session still has two events.
pub fn cold_items_removed(cases: u64) -> Result<(), String> {
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + case);
        let items = rng.gen_range(3..20);
        let sessions: Vec<RawSession> = (0..rng.gen_range(4..30u64))
            .map(|s| {
                let start = s * 100;
                let events: Vec<RawEvent> = (0..rng.gen_range(2..6u64))
                    .map(|k| {
                        event(
                            &format!("u{s}"),
                            &format!("i{}", rng.gen_range(0..items)),
                            start + k,
                        )
                    })
                    .collect();
                RawSession {
                    user_id: format!("u{s}"),
                    start_time: start,
                    events,
                }
            })
            .collect();
        let window = rng.gen_range(50..1000);
        let Ok((train, test)) = split_train_test(sessions, window) else {
            continue;
        };
        let seen: BTreeSet<&str> = train
            .iter()
            .flat_map(|s| s.events.iter().map(|e| e.item_id.as_str()))
            .collect();
        for s in &test {
            if s.events.len() < 2 {
                return Err(format!("case {case}: short test session survived"));
            }
            if let Some(e) = s.events.iter().find(|e| !seen.contains(e.item_id.as_str())) {
                return Err(format!("case {case}: cold item {} in test", e.item_id));
            }
        }
        let schema = FieldSchema::new(Vec::new(), seen.iter().map(|s| s.to_string()).collect())
            .map_err(|e| e.to_string())?;
        encode_sessions(&test, &schema).map_err(|e| format!("case {case}: {e}"))?;
    }
    Ok(())
}

/// Preprocessing the generator's log reproduces its declared counts.
pub fn generator_bookkeeping(sessions: usize) -> Result<(), String> {
    let data = generate(&SynthConfig {
        sessions,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let declared = data.declared.clone();
    let config = PreprocessConfig {
        item_coverage: 1.0,
        category_coverage: 1.0,
        ..PreprocessConfig::default()
    };
    let pre = preprocess(data.events, &data.field_names, &config).map_err(|e| e.to_string())?;
    let s = &pre.stats;
    let got = (
        s.users,
        s.items,
        s.sessions,
        s.transactions,
        s.context_fields,
    );
    let want = (
        declared.users,
        declared.items,
        declared.sessions,
        declared.transactions,
        declared.context_fields,
    );
    if got != want {
        return Err(format!("stats {got:?}, declared {want:?}"));
    }
    if s.train_sessions + s.test_sessions > s.sessions {
        return Err("split invented sessions".into());
    }
    Ok(())
}
