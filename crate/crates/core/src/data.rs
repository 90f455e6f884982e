//! Session datasets and the preprocessing that builds them from raw logs.
//!
//! The preprocessing chain is: mark sessions by inactivity gap, keep the
//! most popular items up to a transaction coverage, cap every context field
//! to its most popular categories (the rest become `unknown`), split off the
//! final time window as test data, then encode contexts and items against a
//! schema derived from the training sessions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Category that absorbs rare or missing values in every field.
pub const UNKNOWN: &str = "unknown";

pub type Attributes = BTreeMap<String, Vec<String>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEvent {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: u64,
    pub attributes: Attributes,
}

/// A session before encoding: consecutive events of one user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSession {
    pub user_id: String,
    pub start_time: u64,
    pub events: Vec<RawEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSchema {
    fields: Vec<Field>,
    items: Vec<String>,
    offsets: Vec<usize>,
    #[serde(skip)]
    item_lookup: BTreeMap<String, usize>,
}

impl FieldSchema {
    pub fn new(fields: Vec<Field>, items: Vec<String>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(fields.len());
        let mut next = 0;
        let mut names = BTreeSet::new();
        for f in &fields {
            if f.categories.is_empty() {
                return Err(Error::Schema(format!("field {} has no categories", f.name)));
            }
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate field {}", f.name)));
            }
            let distinct: BTreeSet<&String> = f.categories.iter().collect();
            if distinct.len() != f.categories.len() {
                return Err(Error::Schema(format!(
                    "duplicate category in field {}",
                    f.name
                )));
            }
            offsets.push(next);
            next += f.categories.len();
        }
        let mut item_lookup = BTreeMap::new();
        for (i, item) in items.iter().enumerate() {
            if item_lookup.insert(item.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate item {item}")));
            }
        }
        Ok(Self {
            fields,
            items,
            offsets,
            item_lookup,
        })
    }

    /// Rebuilds lookup tables after deserialization and re-checks invariants.
    pub fn validated(self) -> Result<Self> {
        let expected = Self::new(self.fields, self.items)?;
        if expected.offsets != self.offsets {
            return Err(Error::Schema("offsets disagree with field sizes".into()));
        }
        Ok(expected)
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn field_sizes(&self) -> Vec<usize> {
        self.fields.iter().map(|f| f.categories.len()).collect()
    }

    pub fn one_hot_len(&self) -> usize {
        self.fields.iter().map(|f| f.categories.len()).sum()
    }

    pub fn item_index(&self, item: &str) -> Option<usize> {
        self.item_lookup.get(item).copied()
    }

    /// Maps a position in the concatenated one-hot vector to (field, category).
    pub fn locate(&self, position: usize) -> Option<(usize, usize)> {
        if position >= self.one_hot_len() {
            return None;
        }
        let field = self.offsets.partition_point(|&o| o <= position) - 1;
        Some((field, position - self.offsets[field]))
    }

    /// Active positions of `attributes` in the concatenated one-hot vector.
    ///
    /// Fields absent from `attributes` (or with no values) activate their
    /// `unknown` slot; so do categories the schema does not know.
    pub fn encode_context(&self, attributes: &Attributes) -> Result<Vec<usize>> {
        for name in attributes.keys() {
            if !self.fields.iter().any(|f| &f.name == name) {
                return Err(Error::Schema(format!("unknown field {name}")));
            }
        }
        let mut active = BTreeSet::new();
        for (f, field) in self.fields.iter().enumerate() {
            let values = attributes
                .get(&field.name)
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            let unknown = field.categories.iter().position(|c| c == UNKNOWN);
            let mut resolve = |value: Option<&String>| -> Result<()> {
                let local = value
                    .and_then(|v| field.categories.iter().position(|c| c == v))
                    .or(unknown)
                    .ok_or_else(|| {
                        Error::Encoding(format!(
                            "field {} has no category {:?} and no unknown slot",
                            field.name,
                            value.map(String::as_str).unwrap_or("")
                        ))
                    })?;
                active.insert(self.offsets[f] + local);
                Ok(())
            };
            if values.is_empty() {
                resolve(None)?;
            }
            for v in values {
                resolve(Some(v))?;
            }
        }
        Ok(active.into_iter().collect())
    }

    /// Inverse of [`encode_context`](Self::encode_context).
    pub fn decode_context(&self, positions: &[usize]) -> Result<Attributes> {
        let mut out = Attributes::new();
        for &p in positions {
            let (f, c) = self
                .locate(p)
                .ok_or_else(|| Error::Encoding(format!("position {p} outside one-hot space")))?;
            let field = &self.fields[f];
            out.entry(field.name.clone())
                .or_default()
                .push(field.categories[c].clone());
        }
        Ok(out)
    }

    /// Splits a context into per-field local category indices.
    pub fn split_by_field(&self, positions: &[usize]) -> Result<Vec<Vec<usize>>> {
        let mut out = alloc::vec![Vec::new(); self.fields.len()];
        for &p in positions {
            let (f, c) = self
                .locate(p)
                .ok_or_else(|| Error::Encoding(format!("position {p} outside one-hot space")))?;
            out[f].push(c);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    /// Sorted active positions in the concatenated one-hot vector.
    pub context: Vec<usize>,
    pub item: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub steps: Vec<Step>,
    pub start_time: u64,
}

impl Session {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionDataset {
    pub sessions: Vec<Session>,
    pub schema: FieldSchema,
}

impl SessionDataset {
    pub fn new(sessions: Vec<Session>, schema: FieldSchema) -> Result<Self> {
        let ds = Self { sessions, schema };
        ds.check()?;
        Ok(ds)
    }

    /// Verifies the dataset invariants (session length, index ranges).
    pub fn check(&self) -> Result<()> {
        let n_items = self.schema.num_items();
        let width = self.schema.one_hot_len();
        for s in &self.sessions {
            if s.len() < 2 {
                return Err(Error::Schema("session shorter than 2 steps".into()));
            }
            for step in &s.steps {
                if step.item >= n_items {
                    return Err(Error::Vocabulary {
                        index: step.item,
                        size: n_items,
                    });
                }
                if let Some(&p) = step.context.iter().find(|&&p| p >= width) {
                    return Err(Error::Encoding(format!(
                        "context position {p} out of range"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_transactions(&self) -> usize {
        self.sessions.iter().map(Session::len).sum()
    }

    /// Number of (previous, next) prediction pairs.
    pub fn num_transitions(&self) -> usize {
        self.sessions.iter().map(|s| s.len() - 1).sum()
    }
}

/// Groups per-user events into sessions, starting a new one whenever the gap
/// to the previous event strictly exceeds `gap_threshold`. Sessions with
/// fewer than two events are dropped. Output is ordered by start time, then
/// by first appearance of the user.
pub fn mark_sessions(events: &[RawEvent], gap_threshold: u64) -> Result<Vec<RawSession>> {
    let mut user_order: Vec<&str> = Vec::new();
    let mut by_user: BTreeMap<&str, Vec<&RawEvent>> = BTreeMap::new();
    for e in events {
        let list = by_user.entry(e.user_id.as_str()).or_insert_with(|| {
            user_order.push(e.user_id.as_str());
            Vec::new()
        });
        if let Some(prev) = list.last() {
            if e.timestamp < prev.timestamp {
                return Err(Error::Ordering {
                    user: e.user_id.clone(),
                    position: list.len(),
                });
            }
        }
        list.push(e);
    }
    let mut sessions = Vec::new();
    for user in user_order {
        let mut current: Vec<RawEvent> = Vec::new();
        for e in &by_user[user] {
            if let Some(last) = current.last() {
                if e.timestamp - last.timestamp > gap_threshold {
                    push_session(&mut sessions, core::mem::take(&mut current));
                }
            }
            current.push((*e).clone());
        }
        push_session(&mut sessions, current);
    }
    // stable: ties keep user first-appearance order
    sessions.sort_by_key(|s: &RawSession| s.start_time);
    Ok(sessions)
}

fn push_session(out: &mut Vec<RawSession>, events: Vec<RawEvent>) {
    if events.len() >= 2 {
        out.push(RawSession {
            user_id: events[0].user_id.clone(),
            start_time: events[0].timestamp,
            events,
        });
    }
}

/// Counts in first-seen order.
fn count_first_seen<'a>(keys: impl Iterator<Item = &'a str>) -> Vec<(&'a str, u64)> {
    let mut order: Vec<(&str, u64)> = Vec::new();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for k in keys {
        match index.get(k) {
            Some(&i) => order[i].1 += 1,
            None => {
                index.insert(k, order.len());
                order.push((k, 1));
            }
        }
    }
    order
}

/// Shortest popularity-sorted prefix whose counts reach `coverage` of the
/// total. Ties on count keep first-seen order.
fn coverage_prefix(mut counts: Vec<(&str, u64)>, coverage: f64) -> Vec<String> {
    counts.sort_by_key(|c| core::cmp::Reverse(c.1));
    let total: u64 = counts.iter().map(|c| c.1).sum();
    let needed = coverage * total as f64 * (1.0 - 1e-12);
    let mut kept = Vec::new();
    let mut cum = 0u64;
    for (k, c) in counts {
        if cum as f64 >= needed && !kept.is_empty() {
            break;
        }
        kept.push(k.to_string());
        cum += c;
    }
    kept
}

fn check_coverage(coverage: f64) -> Result<()> {
    if coverage > 0.0 && coverage <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "coverage must lie in (0, 1], got {coverage}"
        )))
    }
}

/// Items retained by popularity-coverage sampling, most popular first.
pub fn sample_items_by_coverage(events: &[RawEvent], coverage: f64) -> Result<Vec<String>> {
    check_coverage(coverage)?;
    if events.is_empty() {
        return Err(Error::EmptyInput("no events to sample items from"));
    }
    let counts = count_first_seen(events.iter().map(|e| e.item_id.as_str()));
    Ok(coverage_prefix(counts, coverage))
}

/// Drops events whose item is not in `retained`.
pub fn retain_items(events: Vec<RawEvent>, retained: &[String]) -> Vec<RawEvent> {
    let keep: BTreeSet<&str> = retained.iter().map(String::as_str).collect();
    events
        .into_iter()
        .filter(|e| keep.contains(e.item_id.as_str()))
        .collect()
}

/// Keeps the categories of `field` that reach `coverage` of its occurrences
/// and rewrites the rest to [`UNKNOWN`]. Returns the rewritten events and the
/// kept categories, most popular first.
pub fn cap_multivalued(
    mut events: Vec<RawEvent>,
    field: &str,
    coverage: f64,
) -> Result<(Vec<RawEvent>, Vec<String>)> {
    check_coverage(coverage)?;
    if !events.iter().any(|e| e.attributes.contains_key(field)) {
        return Err(Error::Schema(format!("unknown field {field}")));
    }
    let kept = {
        let occurrences = events.iter().flat_map(|e| {
            let values = e.attributes.get(field).map(Vec::as_slice).unwrap_or(&[]);
            let mut seen = BTreeSet::new();
            values
                .iter()
                .filter(move |v| seen.insert(v.as_str()))
                .map(String::as_str)
        });
        let counts = count_first_seen(occurrences);
        if counts.is_empty() {
            Vec::new()
        } else {
            coverage_prefix(counts, coverage)
        }
    };
    let keep: BTreeSet<&str> = kept.iter().map(String::as_str).collect();
    for e in &mut events {
        if let Some(values) = e.attributes.get_mut(field) {
            let mut rewritten: Vec<String> = Vec::with_capacity(values.len());
            for v in values.drain(..) {
                if keep.contains(v.as_str()) && v != UNKNOWN {
                    rewritten.push(v);
                } else if !rewritten.iter().any(|r| r == UNKNOWN) {
                    rewritten.push(UNKNOWN.to_string());
                }
            }
            *values = rewritten;
        }
    }
    let kept = kept.into_iter().filter(|k| k != UNKNOWN).collect();
    Ok((events, kept))
}

/// Sessions starting after `end − test_window` (with `end` the latest event
/// time) form the test side. Test events on items never seen in training are
/// removed, and test sessions left with fewer than two events are dropped.
pub fn split_train_test(
    sessions: Vec<RawSession>,
    test_window: u64,
) -> Result<(Vec<RawSession>, Vec<RawSession>)> {
    let end = sessions
        .iter()
        .flat_map(|s| s.events.iter().map(|e| e.timestamp))
        .max()
        .ok_or(Error::EmptyInput("no sessions to split"))?;
    let cutoff = end.saturating_sub(test_window);
    let (test, train): (Vec<_>, Vec<_>) = sessions
        .into_iter()
        .partition(|s| test_window > 0 && s.start_time > cutoff);
    let seen: BTreeSet<&str> = train
        .iter()
        .flat_map(|s| s.events.iter().map(|e| e.item_id.as_str()))
        .collect();
    let test: Vec<RawSession> = test
        .into_iter()
        .filter_map(|mut s| {
            s.events.retain(|e| seen.contains(e.item_id.as_str()));
            (s.events.len() >= 2).then_some(s)
        })
        .collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::Split {
            train: train.len(),
            test: test.len(),
        });
    }
    Ok((train, test))
}

/// Item vocabulary of `sessions`, most frequent first, ties by first sight.
pub fn item_vocabulary(sessions: &[RawSession]) -> Vec<String> {
    let counts = count_first_seen(
        sessions
            .iter()
            .flat_map(|s| s.events.iter().map(|e| e.item_id.as_str())),
    );
    coverage_prefix(counts, 1.0)
}

/// Encodes raw sessions. Every step carries the context of the session's
/// first event, since user contexts are static within a session.
pub fn encode_sessions(sessions: &[RawSession], schema: &FieldSchema) -> Result<Vec<Session>> {
    sessions
        .iter()
        .map(|s| {
            let first = s.events.first().ok_or(Error::EmptyInput("empty session"))?;
            let context = schema.encode_context(&first.attributes)?;
            let steps = s
                .events
                .iter()
                .map(|e| {
                    let item = schema.item_index(&e.item_id).ok_or_else(|| {
                        Error::Encoding(format!("item {} not in vocabulary", e.item_id))
                    })?;
                    Ok(Step {
                        context: context.clone(),
                        item,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Session {
                steps,
                start_time: s.start_time,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub gap_threshold_seconds: u64,
    pub item_coverage: f64,
    pub category_coverage: f64,
    pub test_window_seconds: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            gap_threshold_seconds: 3600,
            item_coverage: 0.5,
            category_coverage: 0.75,
            test_window_seconds: 3 * 86_400,
        }
    }
}

/// Counts reported after preprocessing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub sessions: usize,
    pub transactions: usize,
    pub context_fields: usize,
    pub train_sessions: usize,
    pub test_sessions: usize,
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub train: SessionDataset,
    pub test: SessionDataset,
    pub stats: DatasetStats,
}

/// Runs the full preprocessing chain over one raw log. `fields` lists the
/// declared context fields in column order.
pub fn preprocess(
    events: Vec<RawEvent>,
    fields: &[String],
    config: &PreprocessConfig,
) -> Result<Preprocessed> {
    check_coverage(config.item_coverage)?;
    check_coverage(config.category_coverage)?;
    if events.is_empty() {
        return Err(Error::EmptyInput("no events"));
    }
    let sessions = mark_sessions(&events, config.gap_threshold_seconds)?;

    // Item sampling is computed on the full log, before the split.
    let retained = sample_items_by_coverage(&events, config.item_coverage)?;
    let mut kept_events = Vec::new();
    let mut session_sizes = Vec::new();
    for s in sessions {
        let events = retain_items(s.events, &retained);
        if events.len() >= 2 {
            session_sizes.push((s.user_id, events[0].timestamp, events.len()));
            kept_events.extend(events);
        }
    }
    if kept_events.is_empty() {
        return Err(Error::EmptyInput("no sessions survive item sampling"));
    }

    let mut categories = Vec::with_capacity(fields.len());
    for field in fields {
        let (rewritten, kept) = cap_multivalued(kept_events, field, config.category_coverage)?;
        kept_events = rewritten;
        categories.push(kept);
    }

    let mut sessions = Vec::with_capacity(session_sizes.len());
    let mut it = kept_events.into_iter();
    for (user_id, start_time, n) in session_sizes {
        sessions.push(RawSession {
            user_id,
            start_time,
            events: it.by_ref().take(n).collect(),
        });
    }
    let users: BTreeSet<&str> = sessions.iter().map(|s| s.user_id.as_str()).collect();
    let users = users.len();
    let n_sessions = sessions.len();
    let transactions = sessions.iter().map(|s| s.events.len()).sum();

    let (train_raw, test_raw) = split_train_test(sessions, config.test_window_seconds)?;
    let schema_fields = fields
        .iter()
        .zip(categories)
        .map(|(name, mut cats)| {
            cats.push(UNKNOWN.to_string());
            Field {
                name: name.clone(),
                categories: cats,
            }
        })
        .collect();
    let schema = FieldSchema::new(schema_fields, item_vocabulary(&train_raw))?;
    let train = SessionDataset::new(encode_sessions(&train_raw, &schema)?, schema.clone())?;
    let test = SessionDataset::new(encode_sessions(&test_raw, &schema)?, schema.clone())?;
    let stats = DatasetStats {
        users,
        items: schema.num_items(),
        sessions: n_sessions,
        transactions,
        context_fields: fields.len(),
        train_sessions: train.sessions.len(),
        test_sessions: test.sessions.len(),
    };
    Ok(Preprocessed { train, test, stats })
}

/// Holds out the latest `fraction` of sessions (by start time) for validation.
pub fn holdout_validation(
    dataset: &SessionDataset,
    fraction: f64,
) -> Result<(SessionDataset, SessionDataset)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "validation fraction {fraction} outside [0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..dataset.sessions.len()).collect();
    order.sort_by_key(|&i| dataset.sessions[i].start_time);
    let n_val = libm::ceil(dataset.sessions.len() as f64 * fraction) as usize;
    let n_val = n_val.min(dataset.sessions.len().saturating_sub(1));
    let (train_idx, val_idx) = order.split_at(order.len() - n_val);
    let pick = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        idx.iter().map(|&i| dataset.sessions[i].clone()).collect()
    };
    Ok((
        SessionDataset {
            sessions: pick(train_idx),
            schema: dataset.schema.clone(),
        },
        SessionDataset {
            sessions: pick(val_idx),
            schema: dataset.schema.clone(),
        },
    ))
}
