//! Exact-match micro precision, recall and F1.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::convert::{quads_to_triples, triples_to_pairs};
use crate::data::{Annotations, Dataset};
use crate::encoder::ExternalEmbeddingStore;
use crate::error::{Error, Result};
use crate::model::{Polarity, Span};
use crate::parallel::Parallelism;
use crate::pipeline::{self, TaskKind};
use crate::tagger::TaggerModel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Counts {
    pub fn of<T: Ord>(gold: &BTreeSet<T>, pred: &BTreeSet<T>) -> Self {
        Counts {
            matched: gold.intersection(pred).count(),
            predicted: pred.len(),
            gold: gold.len(),
        }
    }

    pub fn add(&mut self, other: Counts) {
        self.matched += other.matched;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }

    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            self.matched as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            self.matched as f64 / self.gold as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn row(&self) -> PrfRow {
        PrfRow {
            matched: self.matched,
            predicted: self.predicted,
            gold: self.gold,
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
        }
    }
}

/// `(P, R, F1)` of `pred` against `gold` under full structural equality.
pub fn exact_match_prf<T: Ord>(gold: &BTreeSet<T>, pred: &BTreeSet<T>) -> (f64, f64, f64) {
    let c = Counts::of(gold, pred);
    (c.precision(), c.recall(), c.f1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfRow {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Quad,
    Triple,
    Pair,
    Entity,
    Aspect,
    Target,
    Opinion,
    PolaritySpan,
}

impl Granularity {
    pub fn name(&self) -> &'static str {
        match self {
            Granularity::Quad => "quad",
            Granularity::Triple => "triple",
            Granularity::Pair => "pair",
            Granularity::Entity => "entity",
            Granularity::Aspect => "aspect",
            Granularity::Target => "target",
            Granularity::Opinion => "opinion",
            Granularity::PolaritySpan => "polarity_span",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: TaskKind,
    pub rows: BTreeMap<Granularity, PrfRow>,
}

impl EvalReport {
    pub fn get(&self, g: Granularity) -> Option<&PrfRow> {
        self.rows.get(&g)
    }

    /// F1 of the task's headline granularity.
    pub fn headline_f1(&self) -> f64 {
        let g = match self.task {
            TaskKind::Easqe => Granularity::Quad,
            TaskKind::Aste => Granularity::Triple,
            TaskKind::Ope => Granularity::Pair,
        };
        self.rows.get(&g).map_or(0.0, |r| r.f1)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "task: {}", self.task);
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "granularity", "matched", "pred", "gold", "P", "R", "F1"
        );
        for (g, r) in &self.rows {
            let _ = writeln!(
                out,
                "{:<14} {:>8} {:>8} {:>8} {:>8.4} {:>8.4} {:>8.4}",
                g.name(),
                r.matched,
                r.predicted,
                r.gold,
                r.precision,
                r.recall,
                r.f1
            );
        }
        out
    }
}

fn set<T: Ord>(it: impl IntoIterator<Item = T>) -> BTreeSet<T> {
    it.into_iter().collect()
}

/// Element sets of one sentence's annotations, per granularity.
fn element_counts(gold: &Annotations, pred: &Annotations) -> Result<Vec<(Granularity, Counts)>> {
    if gold.task() != pred.task() {
        return Err(Error::Task(format!(
            "cannot score {} predictions against {} gold",
            pred.task(),
            gold.task()
        )));
    }
    let mut out = Vec::new();
    let target_opinion = |g: &Annotations| -> (Vec<Span>, Vec<Span>, Vec<(Span, Polarity)>) {
        match g {
            Annotations::Quads(v) => (
                Vec::new(),
                v.iter().map(|q| q.opinion).collect(),
                v.iter().map(|q| (q.opinion, q.polarity)).collect(),
            ),
            Annotations::Triples(v) => (
                v.iter().map(|t| t.target).collect(),
                v.iter().map(|t| t.opinion).collect(),
                v.iter().map(|t| (t.opinion, t.polarity)).collect(),
            ),
            Annotations::Pairs(v) => (
                v.iter().map(|p| p.target).collect(),
                v.iter().map(|p| p.opinion).collect(),
                Vec::new(),
            ),
        }
    };
    let (gt, go, gp) = target_opinion(gold);
    let (pt, po, pp) = target_opinion(pred);
    match (gold, pred) {
        (Annotations::Quads(g), Annotations::Quads(p)) => {
            out.push((Granularity::Quad, Counts::of(&set(g.iter().copied()), &set(p.iter().copied()))));
            let (gtr, ptr) = (quads_to_triples(g), quads_to_triples(p));
            out.push((Granularity::Triple, Counts::of(&set(gtr.iter().copied()), &set(ptr.iter().copied()))));
            out.push((
                Granularity::Pair,
                Counts::of(&set(triples_to_pairs(&gtr)), &set(triples_to_pairs(&ptr))),
            ));
            out.push((
                Granularity::Entity,
                Counts::of(&set(g.iter().filter_map(|q| q.entity)), &set(p.iter().filter_map(|q| q.entity))),
            ));
            out.push((
                Granularity::Aspect,
                Counts::of(&set(g.iter().filter_map(|q| q.aspect)), &set(p.iter().filter_map(|q| q.aspect))),
            ));
        }
        (Annotations::Triples(g), Annotations::Triples(p)) => {
            out.push((Granularity::Triple, Counts::of(&set(g.iter().copied()), &set(p.iter().copied()))));
            out.push((Granularity::Pair, Counts::of(&set(triples_to_pairs(g)), &set(triples_to_pairs(p)))));
            out.push((Granularity::Target, Counts::of(&set(gt), &set(pt))));
        }
        (Annotations::Pairs(g), Annotations::Pairs(p)) => {
            out.push((Granularity::Pair, Counts::of(&set(g.iter().copied()), &set(p.iter().copied()))));
            out.push((Granularity::Target, Counts::of(&set(gt), &set(pt))));
        }
        _ => unreachable!("task equality checked above"),
    }
    out.push((Granularity::Opinion, Counts::of(&set(go), &set(po))));
    if gold.task() != TaskKind::Ope {
        out.push((Granularity::PolaritySpan, Counts::of(&set(gp), &set(pp))));
    }
    Ok(out)
}

/// Micro-aggregates per-sentence counts. Both slices are aligned by index.
pub fn score(task: TaskKind, gold: &[Annotations], pred: &[Annotations]) -> Result<EvalReport> {
    assert_eq!(gold.len(), pred.len(), "gold and predictions must align");
    let mut totals: BTreeMap<Granularity, Counts> = BTreeMap::new();
    if gold.is_empty() {
        for (g, c) in element_counts(&Annotations::empty(task), &Annotations::empty(task))? {
            totals.insert(g, c);
        }
    }
    for (g, p) in gold.iter().zip(pred) {
        for (gran, c) in element_counts(g, p)? {
            totals.entry(gran).or_default().add(c);
        }
    }
    Ok(EvalReport {
        task,
        rows: totals.into_iter().map(|(g, c)| (g, c.row())).collect(),
    })
}

/// Predicts every sentence of `dataset` and scores against its gold, projected
/// to `task` when the dataset is finer-grained.
///
/// Sentences too long to frame are scored as empty predictions.
pub fn evaluate(
    model1: &TaggerModel,
    model2: &TaggerModel,
    dataset: &Dataset,
    task: TaskKind,
    store: Option<&ExternalEmbeddingStore>,
    par: Parallelism,
) -> Result<EvalReport> {
    let sentences: Vec<_> = dataset.sentences().cloned().collect();
    let results = pipeline::predict_batch(model1, model2, &sentences, task, store, par)?;
    let mut preds = Vec::with_capacity(results.len());
    for (s, r) in sentences.iter().zip(results) {
        match r {
            Ok(a) => preds.push(a),
            Err(Error::TooLong { len, max }) => {
                log::warn!("sentence {:?}: framed length {len} > {max}, predicting nothing", s.id);
                preds.push(Annotations::empty(task));
            }
            Err(e) => return Err(e),
        }
    }
    let gold = dataset
        .records
        .iter()
        .map(|r| r.gold.project(task))
        .collect::<Result<Vec<_>>>()?;
    score(task, &gold, &preds)
}
