//! Synthetic session logs with context-dependent navigation.
//!
//! Items are split into `fields` classes by `item % fields`. Every item has
//! one successor per category, all in the next class, and the one taken is
//! picked by the value of the context field matching the item's class.
//! Category `v` always points into the `v`-th block of the next class. Because a walk
//! visits consecutive classes, no field is consulted twice within
//! `fields + 1` steps: the item history alone says nothing about the next
//! choice, while (context, previous item) determines it exactly.
//!
//! With `context_dependent = false` the successor is a fair coin flip
//! instead, so the context carries no signal.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Attributes, RawEvent};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sessions: usize,
    pub items: usize,
    pub fields: usize,
    pub categories_per_field: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub days: u64,
    pub context_dependent: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sessions: 2000,
            items: 60,
            fields: 6,
            categories_per_field: 2,
            min_len: 3,
            max_len: 6,
            days: 30,
            context_dependent: true,
            seed: 7,
        }
    }
}

/// Generated log plus the ground truth it was drawn from.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub config: SynthConfig,
    pub events: Vec<RawEvent>,
    pub field_names: Vec<String>,
    /// `successors[i][v]`: next item after `i` when the governing field has
    /// category index `v`.
    pub successors: Vec<Vec<usize>>,
    pub declared: DeclaredCounts,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeclaredCounts {
    pub users: usize,
    pub items: usize,
    pub sessions: usize,
    pub transactions: usize,
    pub context_fields: usize,
}

pub fn item_name(i: usize) -> String {
    format!("item{i:03}")
}

pub fn field_name(f: usize) -> String {
    format!("f{f}")
}

pub fn category_name(v: usize) -> String {
    format!("v{v}")
}

/// Seconds between consecutive events of one session.
pub const EVENT_SPACING: u64 = 60;

impl SynthData {
    /// Index of the context field that governs the successor of `item`.
    pub fn governing_field(&self, item: usize) -> usize {
        item % self.config.fields
    }

    /// The successor the generator designates for `item` under `context`
    /// (category index per field). Only meaningful for context-dependent data.
    pub fn designated_next(&self, context: &[usize], item: usize) -> usize {
        self.successors[item][context[self.governing_field(item)]]
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    let c = config;
    if c.fields == 0 || c.items < 2 * c.fields || !c.items.is_multiple_of(c.fields) {
        return Err(Error::Config(format!(
            "items ({}) must be a positive multiple of fields ({}) with at least two per class",
            c.items, c.fields
        )));
    }
    if c.categories_per_field < 2 {
        return Err(Error::Config(
            "need at least two categories per field".into(),
        ));
    }
    if c.min_len < 2 || c.max_len < c.min_len {
        return Err(Error::Config(
            "session lengths must satisfy 2 ≤ min ≤ max".into(),
        ));
    }
    let branching = c.categories_per_field;
    if c.items / c.fields < branching {
        return Err(Error::Config(
            "too few items per class for the branching factor".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let classes: Vec<Vec<usize>> = (0..c.fields)
        .map(|k| (0..c.items).filter(|i| i % c.fields == k).collect())
        .collect();
    // Category v of the governing field always leads into the v-th block
    // of the next class; the item within the block is drawn at random.
    let successors: Vec<Vec<usize>> = (0..c.items)
        .map(|i| {
            let next = &classes[(i + 1) % c.fields];
            let block = next.len() / branching;
            (0..branching)
                .map(|v| {
                    *next[v * block..(v + 1) * block]
                        .choose(&mut rng)
                        .expect("non-empty")
                })
                .collect()
        })
        .collect();
    let field_names: Vec<String> = (0..c.fields).map(field_name).collect();

    let span = c.days * 86_400;
    let spacing = span / c.sessions.max(1) as u64;
    let mut events = Vec::new();
    let mut seen_items = alloc::collections::BTreeSet::new();
    for s in 0..c.sessions {
        let context: Vec<usize> = (0..c.fields).map(|_| rng.gen_range(0..branching)).collect();
        let attributes: Attributes = field_names
            .iter()
            .zip(&context)
            .map(|(f, v)| (f.clone(), alloc::vec![category_name(*v)]))
            .collect::<BTreeMap<_, _>>();
        let len = rng.gen_range(c.min_len..=c.max_len);
        let mut item = rng.gen_range(0..c.items);
        let start = s as u64 * spacing;
        for step in 0..len {
            if step > 0 {
                let choice = if c.context_dependent {
                    context[item % c.fields]
                } else {
                    rng.gen_range(0..branching)
                };
                item = successors[item][choice];
            }
            seen_items.insert(item);
            events.push(RawEvent {
                user_id: format!("user{s:05}"),
                item_id: item_name(item),
                timestamp: start + step as u64 * EVENT_SPACING,
                attributes: attributes.clone(),
            });
        }
    }
    let declared = DeclaredCounts {
        users: c.sessions,
        items: seen_items.len(),
        sessions: c.sessions,
        transactions: events.len(),
        context_fields: c.fields,
    };
    Ok(SynthData {
        config: c.clone(),
        events,
        field_names,
        successors,
        declared,
    })
}
