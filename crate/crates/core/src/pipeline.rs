//! Two-stage extraction: opinion spans first, then trigger-conditioned targets
//! for each opinion, then decoding into quads, triples or pairs.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Annotations;
use crate::encoder::{frame_stage1, frame_stage2, ExternalEmbeddingStore};
use crate::error::{Error, Result};
use crate::model::{Pair, Polarity, Quadruple, Sentence, Span, Triple};
use crate::parallel::{self, Parallelism};
use crate::tagger::TaggerModel;
use crate::tags::{spans_from_tags, Category, TagScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Easqe,
    Aste,
    Ope,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Easqe => "EASQE",
            TaskKind::Aste => "ASTE",
            TaskKind::Ope => "OPE",
        }
    }

    /// Stage-one scheme and natively trained stage-two scheme.
    pub fn schemes(&self) -> (TagScheme, TagScheme) {
        match self {
            TaskKind::Easqe => (TagScheme::Stage1Easqe, TagScheme::Stage2Easqe),
            TaskKind::Aste => (TagScheme::Stage1Easqe, TagScheme::Stage2Aspect),
            TaskKind::Ope => (TagScheme::Stage1Span, TagScheme::Stage2Aspect),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "easqe" => Ok(TaskKind::Easqe),
            "aste" => Ok(TaskKind::Aste),
            "ope" => Ok(TaskKind::Ope),
            other => Err(Error::Task(format!("unknown task {other:?}"))),
        }
    }
}

/// An extracted opinion and its polarity (absent for span-only tagging).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpinionHit {
    pub opinion: Span,
    pub polarity: Option<Polarity>,
}

/// Targets found for one opinion trigger.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TargetSet {
    pub entities: Vec<Span>,
    pub aspects: Vec<Span>,
}

impl TargetSet {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.aspects.is_empty()
    }
}

/// Checks that the two models' schemes can serve `task`.
///
/// ASTE accepts a stage-two model trained on either the merged-target scheme
/// or the entity/aspect scheme.
pub fn check_compatibility(stage1: TagScheme, stage2: TagScheme, task: TaskKind) -> Result<()> {
    let ok = match task {
        TaskKind::Easqe => stage1 == TagScheme::Stage1Easqe && stage2 == TagScheme::Stage2Easqe,
        TaskKind::Aste => {
            stage1 == TagScheme::Stage1Easqe
                && matches!(stage2, TagScheme::Stage2Aspect | TagScheme::Stage2Easqe)
        }
        TaskKind::Ope => stage1 == TagScheme::Stage1Span && stage2 == TagScheme::Stage2Aspect,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::SchemeMismatch(format!(
            "{task} cannot be decoded from {stage1} + {stage2}"
        )))
    }
}

pub fn extract_opinions(
    model1: &TaggerModel,
    s: &Sentence,
    store: Option<&ExternalEmbeddingStore>,
) -> Result<Vec<OpinionHit>> {
    if !model1.scheme.is_stage1() {
        return Err(Error::SchemeMismatch(format!(
            "{} is not a stage-one scheme",
            model1.scheme
        )));
    }
    let tags = model1.decode(&frame_stage1(s)?, store)?;
    Ok(spans_from_tags(&tags)?
        .into_iter()
        .map(|(opinion, category)| OpinionHit {
            opinion,
            polarity: match category {
                Category::Sentiment(p) => Some(p),
                _ => None,
            },
        })
        .collect())
}

pub fn extract_targets(
    model2: &TaggerModel,
    s: &Sentence,
    opinion: Span,
    store: Option<&ExternalEmbeddingStore>,
) -> Result<TargetSet> {
    if model2.scheme.is_stage1() {
        return Err(Error::SchemeMismatch(format!(
            "{} is not a stage-two scheme",
            model2.scheme
        )));
    }
    let tags = model2.decode(&frame_stage2(s, opinion)?, store)?;
    let mut out = TargetSet::default();
    for (span, category) in spans_from_tags(&tags)? {
        match category {
            Category::Entity => out.entities.push(span),
            Category::Aspect => out.aspects.push(span),
            _ => {}
        }
    }
    Ok(out)
}

/// Inserts unless already present, keeping first-insertion order.
fn push_unique<T: Ord + Copy>(out: &mut Vec<T>, seen: &mut BTreeSet<T>, item: T) {
    if seen.insert(item) {
        out.push(item);
    }
}

/// Quadruple decoding for one sentence.
///
/// Per hit: nothing when its target set is empty; the single
/// (entity, aspect) pairing when exactly one of each was found; otherwise one
/// aspect-only quad per aspect, or, with no aspects, one entity-only quad per
/// entity. Entities are dropped when several aspects accompany them. Hits
/// without polarity are skipped.
pub fn decode_quadruples(hits: &[OpinionHit], targets: &[TargetSet]) -> Vec<Quadruple> {
    assert_eq!(hits.len(), targets.len(), "one target set per hit");
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (hit, t) in hits.iter().zip(targets) {
        let Some(p) = hit.polarity else { continue };
        if t.is_empty() {
            continue;
        }
        let (q, k) = (t.entities.len(), t.aspects.len());
        if q * k == 1 {
            let quad = Quadruple::new(Some(t.entities[0]), Some(t.aspects[0]), hit.opinion, p);
            push_unique(&mut out, &mut seen, quad);
        } else if k >= 1 {
            for &a in &t.aspects {
                push_unique(&mut out, &mut seen, Quadruple::new(None, Some(a), hit.opinion, p));
            }
        } else if q >= 1 {
            for &e in &t.entities {
                push_unique(&mut out, &mut seen, Quadruple::new(Some(e), None, hit.opinion, p));
            }
        }
    }
    out
}

/// Non-null targets per hit: the entity when exactly one entity and one
/// aspect were found, otherwise every aspect, or every entity when there are
/// no aspects.
fn native_targets(t: &TargetSet) -> Vec<Span> {
    let (q, k) = (t.entities.len(), t.aspects.len());
    if q * k == 1 {
        vec![t.entities[0]]
    } else if k >= 1 {
        t.aspects.clone()
    } else {
        t.entities.clone()
    }
}

pub fn decode_triples_native(hits: &[OpinionHit], targets: &[TargetSet]) -> Vec<Triple> {
    assert_eq!(hits.len(), targets.len(), "one target set per hit");
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (hit, t) in hits.iter().zip(targets) {
        let Some(polarity) = hit.polarity else { continue };
        for target in native_targets(t) {
            push_unique(
                &mut out,
                &mut seen,
                Triple {
                    target,
                    opinion: hit.opinion,
                    polarity,
                },
            );
        }
    }
    out
}

pub fn decode_pairs(hits: &[OpinionHit], targets: &[TargetSet]) -> Vec<Pair> {
    assert_eq!(hits.len(), targets.len(), "one target set per hit");
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (hit, t) in hits.iter().zip(targets) {
        for target in native_targets(t) {
            push_unique(
                &mut out,
                &mut seen,
                Pair {
                    target,
                    opinion: hit.opinion,
                },
            );
        }
    }
    out
}

/// End-to-end extraction for one sentence.
pub fn predict(
    model1: &TaggerModel,
    model2: &TaggerModel,
    s: &Sentence,
    task: TaskKind,
    store: Option<&ExternalEmbeddingStore>,
) -> Result<Annotations> {
    check_compatibility(model1.scheme, model2.scheme, task)?;
    let hits = extract_opinions(model1, s, store)?;
    let targets = hits
        .iter()
        .map(|h| extract_targets(model2, s, h.opinion, store))
        .collect::<Result<Vec<_>>>()?;
    Ok(match task {
        TaskKind::Easqe => Annotations::Quads(decode_quadruples(&hits, &targets)),
        TaskKind::Aste => Annotations::Triples(decode_triples_native(&hits, &targets)),
        TaskKind::Ope => Annotations::Pairs(decode_pairs(&hits, &targets)),
    })
}

/// Predicts every sentence; results come back in input order.
pub fn predict_batch(
    model1: &TaggerModel,
    model2: &TaggerModel,
    sentences: &[Sentence],
    task: TaskKind,
    store: Option<&ExternalEmbeddingStore>,
    par: Parallelism,
) -> Result<Vec<Result<Annotations>>> {
    check_compatibility(model1.scheme, model2.scheme, task)?;
    Ok(parallel::map(par, sentences, |s| predict(model1, model2, s, task, store)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(i: usize) -> Span {
        Span::new(i, i + 1)
    }

    fn hit(o: usize, p: Polarity) -> OpinionHit {
        OpinionHit {
            opinion: sp(o),
            polarity: Some(p),
        }
    }

    fn targets(e: &[usize], a: &[usize]) -> TargetSet {
        TargetSet {
            entities: e.iter().map(|&i| sp(i)).collect(),
            aspects: a.iter().map(|&i| sp(i)).collect(),
        }
    }

    #[test]
    fn branch_order() {
        let p = Polarity::Positive;
        let h = [hit(9, p)];
        assert_eq!(
            decode_quadruples(&h, &[targets(&[0], &[1])]),
            vec![Quadruple::new(Some(sp(0)), Some(sp(1)), sp(9), p)]
        );
        assert_eq!(
            decode_quadruples(&h, &[targets(&[0], &[])]),
            vec![Quadruple::new(Some(sp(0)), None, sp(9), p)]
        );
        // entities dropped when q*k != 1 and aspects exist
        assert_eq!(
            decode_quadruples(&h, &[targets(&[0, 1], &[2])]),
            vec![Quadruple::new(None, Some(sp(2)), sp(9), p)]
        );
        assert!(decode_quadruples(&h, &[targets(&[], &[])]).is_empty());
    }

    #[test]
    fn duplicates_across_hits_collapse() {
        let p = Polarity::Negative;
        let hits = [hit(5, p), hit(5, p)];
        let t = [targets(&[0], &[]), targets(&[0], &[])];
        assert_eq!(decode_quadruples(&hits, &t).len(), 1);
    }

    #[test]
    fn triples_and_pairs() {
        let p = Polarity::Negative;
        let h = [hit(4, p)];
        assert_eq!(
            decode_triples_native(&h, &[targets(&[0], &[1])]),
            vec![Triple { target: sp(0), opinion: sp(4), polarity: p }]
        );
        assert_eq!(
            decode_triples_native(&h, &[targets(&[], &[2])]),
            vec![Triple { target: sp(2), opinion: sp(4), polarity: p }]
        );
        assert!(decode_triples_native(&h, &[targets(&[], &[])]).is_empty());

        let plain = [OpinionHit { opinion: sp(3), polarity: None }];
        assert_eq!(
            decode_pairs(&plain, &[targets(&[], &[0])]),
            vec![Pair { target: sp(0), opinion: sp(3) }]
        );
        assert_eq!(decode_pairs(&plain, &[targets(&[], &[0, 1])]).len(), 2);
        assert!(decode_pairs(&plain, &[TargetSet::default()]).is_empty());
    }

    #[test]
    fn compatibility_table() {
        use TagScheme::*;
        assert!(check_compatibility(Stage1Easqe, Stage2Easqe, TaskKind::Easqe).is_ok());
        assert!(check_compatibility(Stage1Easqe, Stage2Aspect, TaskKind::Aste).is_ok());
        assert!(check_compatibility(Stage1Easqe, Stage2Easqe, TaskKind::Aste).is_ok());
        assert!(check_compatibility(Stage1Span, Stage2Aspect, TaskKind::Ope).is_ok());
        assert!(matches!(
            check_compatibility(Stage1Span, Stage2Aspect, TaskKind::Aste),
            Err(Error::SchemeMismatch(_))
        ));
        assert!(check_compatibility(Stage1Easqe, Stage2Aspect, TaskKind::Easqe).is_err());
    }

    #[test]
    fn task_names() {
        assert_eq!("aste".parse::<TaskKind>().unwrap(), TaskKind::Aste);
        assert_eq!("EASQE".parse::<TaskKind>().unwrap(), TaskKind::Easqe);
        assert!("quad".parse::<TaskKind>().is_err());
    }
}
