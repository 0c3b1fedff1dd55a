//! Corpus statistics and dataset diffing.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use super::{Annotations, Dataset};
use crate::error::{Error, Result};
use crate::pipeline::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatsReport {
    pub sentence_count: usize,
    pub quad_count: usize,
    /// Percentage of sentences holding at least one quad with both an entity
    /// and an aspect, rounded to two decimals.
    pub co_occurrence_pct: f64,
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn dataset_stats(d: &Dataset) -> Result<StatsReport> {
    if d.task != TaskKind::Easqe {
        return Err(Error::Task(format!("statistics need an EASQE dataset, got {}", d.task)));
    }
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut quad_count = 0;
    let mut co = 0;
    for r in &d.records {
        let quads = r.gold.quads().unwrap_or_default();
        quad_count += quads.len();
        if quads.iter().any(|q| q.entity.is_some() && q.aspect.is_some()) {
            co += 1;
        }
    }
    Ok(StatsReport {
        sentence_count: d.len(),
        quad_count,
        co_occurrence_pct: round2(100.0 * co as f64 / d.len() as f64),
    })
}

/// Hashable identity of one annotation within a sentence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Quad(crate::model::Quadruple),
    Triple(crate::model::Triple),
    Pair(crate::model::Pair),
}

fn keys(a: &Annotations) -> Vec<Key> {
    match a {
        Annotations::Quads(v) => v.iter().copied().map(Key::Quad).collect(),
        Annotations::Triples(v) => v.iter().copied().map(Key::Triple).collect(),
        Annotations::Pairs(v) => v.iter().copied().map(Key::Pair).collect(),
    }
}

/// Percentage of `new`'s annotations that `old` lacks, by exact match on
/// sentence id and record content. When `old` is coarser, `new` is projected
/// to `old`'s task first. The denominator is every annotation of `new`.
pub fn dataset_diff(new: &Dataset, old: &Dataset) -> Result<f64> {
    let old_by_id: HashMap<&str, BTreeSet<Key>> = old
        .records
        .iter()
        .map(|r| (r.sentence.id.as_str(), keys(&r.gold).into_iter().collect()))
        .collect();
    if !new.records.iter().any(|r| old_by_id.contains_key(r.sentence.id.as_str())) {
        return Err(Error::IdMismatch);
    }
    let empty = BTreeSet::new();
    let (mut total, mut missing) = (0usize, 0usize);
    for r in &new.records {
        let projected = r.gold.project(old.task)?;
        let known = old_by_id.get(r.sentence.id.as_str()).unwrap_or(&empty);
        for k in keys(&projected) {
            total += 1;
            if !known.contains(&k) {
                missing += 1;
            }
        }
    }
    if total == 0 {
        return Ok(0.0);
    }
    Ok(round2(100.0 * missing as f64 / total as f64))
}
