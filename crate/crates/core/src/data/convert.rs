//! Projection between task granularities: quads to triples to pairs.

use std::collections::BTreeSet;

use super::{Annotations, Dataset, Record};
use crate::error::{Error, Result};
use crate::model::{Pair, Quadruple, Triple};
use crate::pipeline::TaskKind;

/// Merged-target triples (entity when both targets exist), first occurrence kept.
pub fn quads_to_triples(quads: &[Quadruple]) -> Vec<Triple> {
    let mut seen = BTreeSet::new();
    quads
        .iter()
        .filter_map(Quadruple::to_triple)
        .filter(|t| seen.insert(*t))
        .collect()
}

pub fn triples_to_pairs(triples: &[Triple]) -> Vec<Pair> {
    let mut seen = BTreeSet::new();
    triples
        .iter()
        .map(Triple::to_pair)
        .filter(|p| seen.insert(*p))
        .collect()
}

impl Annotations {
    /// Coarsens to `task`. Refining (e.g. triples to quads) is a task error.
    pub fn project(&self, task: TaskKind) -> Result<Annotations> {
        Ok(match (self, task) {
            (a, t) if a.task() == t => a.clone(),
            (Annotations::Quads(q), TaskKind::Aste) => Annotations::Triples(quads_to_triples(q)),
            (Annotations::Quads(q), TaskKind::Ope) => {
                Annotations::Pairs(triples_to_pairs(&quads_to_triples(q)))
            }
            (Annotations::Triples(t), TaskKind::Ope) => Annotations::Pairs(triples_to_pairs(t)),
            (a, t) => {
                return Err(Error::Task(format!(
                    "cannot project {} annotations to {t}",
                    a.task()
                )))
            }
        })
    }
}

/// Projects every record of `d` to `task`.
pub fn project(d: &Dataset, task: TaskKind) -> Result<Dataset> {
    let records = d
        .records
        .iter()
        .map(|r| {
            Ok(Record {
                sentence: r.sentence.clone(),
                gold: r.gold.project(task)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        name: d.name.clone(),
        task,
        records,
    })
}

pub fn convert_easqe_to_aste(d: &Dataset) -> Result<Dataset> {
    if d.task != TaskKind::Easqe {
        return Err(Error::Task(format!("expected an EASQE dataset, got {}", d.task)));
    }
    project(d, TaskKind::Aste)
}

pub fn convert_aste_to_ope(d: &Dataset) -> Result<Dataset> {
    if d.task != TaskKind::Aste {
        return Err(Error::Task(format!("expected an ASTE dataset, got {}", d.task)));
    }
    project(d, TaskKind::Ope)
}
