//! Annotated datasets and their JSONL file format.
//!
//! One JSON object per line:
//!
//! ```text
//! {"id": "...", "tokens": ["..."], "quads": [{"entity": {"start":0,"end":1,"text":"..."} | null,
//!   "aspect": ... | null, "opinion": {...}, "polarity": "POS|NEU|NEG"}]}
//! ```
//!
//! Triple files use `"triples"` with `target`/`opinion`/`polarity`; pair files
//! use `"pairs"` with `target`/`opinion`.

pub mod convert;
pub mod legacy;
pub mod stats;

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use convert::{convert_aste_to_ope, convert_easqe_to_aste, project};
pub use stats::{dataset_diff, dataset_stats, StatsReport};

use crate::error::{Error, Result};
use crate::model::{
    validate_quadruple_claimed, validate_target_opinion, ClaimedSpan, Pair, Polarity, Quadruple,
    Sentence, Span, Triple, Violation,
};
use crate::pipeline::TaskKind;
use crate::tags::{Category, TagScheme};

/// Gold or predicted records for one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Annotations {
    Quads(Vec<Quadruple>),
    Triples(Vec<Triple>),
    Pairs(Vec<Pair>),
}

impl Annotations {
    pub fn empty(task: TaskKind) -> Self {
        match task {
            TaskKind::Easqe => Annotations::Quads(Vec::new()),
            TaskKind::Aste => Annotations::Triples(Vec::new()),
            TaskKind::Ope => Annotations::Pairs(Vec::new()),
        }
    }

    pub fn task(&self) -> TaskKind {
        match self {
            Annotations::Quads(_) => TaskKind::Easqe,
            Annotations::Triples(_) => TaskKind::Aste,
            Annotations::Pairs(_) => TaskKind::Ope,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Annotations::Quads(v) => v.len(),
            Annotations::Triples(v) => v.len(),
            Annotations::Pairs(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn quads(&self) -> Option<&[Quadruple]> {
        match self {
            Annotations::Quads(v) => Some(v),
            _ => None,
        }
    }

    pub fn triples(&self) -> Option<&[Triple]> {
        match self {
            Annotations::Triples(v) => Some(v),
            _ => None,
        }
    }

    pub fn pairs(&self) -> Option<&[Pair]> {
        match self {
            Annotations::Pairs(v) => Some(v),
            _ => None,
        }
    }

    /// Opinion spans with their polarity (when the records carry one).
    fn opinions(&self) -> Vec<(Span, Option<Polarity>)> {
        match self {
            Annotations::Quads(v) => v.iter().map(|q| (q.opinion, Some(q.polarity))).collect(),
            Annotations::Triples(v) => v.iter().map(|t| (t.opinion, Some(t.polarity))).collect(),
            Annotations::Pairs(v) => v.iter().map(|p| (p.opinion, None)).collect(),
        }
    }

    /// Distinct opinion spans, left to right: the stage-two triggers.
    pub fn triggers(&self) -> Vec<Span> {
        let set: BTreeSet<Span> = self.opinions().into_iter().map(|(s, _)| s).collect();
        set.into_iter().collect()
    }

    /// Distinct stage-one gold spans under `scheme`.
    pub fn stage1_spans(&self, scheme: TagScheme) -> Result<Vec<(Span, Category)>> {
        let mut out = BTreeSet::new();
        for (span, polarity) in self.opinions() {
            let category = match (scheme, polarity) {
                (TagScheme::Stage1Span, _) => Category::Opinion,
                (TagScheme::Stage1Easqe, Some(p)) => Category::Sentiment(p),
                (TagScheme::Stage1Easqe, None) => {
                    return Err(Error::SchemeMismatch(
                        "polarity tags need polarity-bearing annotations".into(),
                    ))
                }
                (other, _) => {
                    return Err(Error::SchemeMismatch(format!("{other} is not a stage-one scheme")))
                }
            };
            out.insert((span, category));
        }
        Ok(out.into_iter().collect())
    }

    /// Distinct stage-two gold target spans for one opinion trigger.
    pub fn stage2_spans(&self, trigger: Span, scheme: TagScheme) -> Result<Vec<(Span, Category)>> {
        let mut out = BTreeSet::new();
        match (scheme, self) {
            (TagScheme::Stage2Easqe, Annotations::Quads(v)) => {
                for q in v.iter().filter(|q| q.opinion == trigger) {
                    out.extend(q.entity.map(|s| (s, Category::Entity)));
                    out.extend(q.aspect.map(|s| (s, Category::Aspect)));
                }
            }
            (TagScheme::Stage2Aspect, Annotations::Quads(v)) => {
                for q in v.iter().filter(|q| q.opinion == trigger) {
                    out.extend(q.merged_target().map(|s| (s, Category::Aspect)));
                }
            }
            (TagScheme::Stage2Aspect, Annotations::Triples(v)) => {
                out.extend(v.iter().filter(|t| t.opinion == trigger).map(|t| (t.target, Category::Aspect)));
            }
            (TagScheme::Stage2Aspect, Annotations::Pairs(v)) => {
                out.extend(v.iter().filter(|p| p.opinion == trigger).map(|p| (p.target, Category::Aspect)));
            }
            (scheme, ann) => {
                return Err(Error::SchemeMismatch(format!(
                    "{scheme} cannot be trained from {} annotations",
                    ann.task()
                )))
            }
        }
        Ok(out.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub sentence: Sentence,
    pub gold: Annotations,
}

/// A named corpus of annotated sentences for one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub task: TaskKind,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, task: TaskKind, records: Vec<Record>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if r.gold.task() != task {
                return Err(Error::Task(format!(
                    "record {} holds {} annotations in a {task} dataset",
                    r.sentence.id,
                    r.gold.task()
                )));
            }
            if !seen.insert(r.sentence.id.as_str()) {
                return Err(Error::Validation {
                    line: i + 1,
                    violations: vec![Violation::DuplicateSentenceId(r.sentence.id.clone())],
                });
            }
        }
        Ok(Dataset {
            name: name.into(),
            task,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn annotation_count(&self) -> usize {
        self.records.iter().map(|r| r.gold.len()).sum()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.records.iter().map(|r| &r.sentence)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpanDto {
    start: usize,
    end: usize,
    text: String,
}

impl SpanDto {
    fn from_span(span: Span, s: &Sentence) -> Self {
        SpanDto {
            start: span.start,
            end: span.end,
            text: span.text(s),
        }
    }

    fn claimed(&self) -> ClaimedSpan<'_> {
        ClaimedSpan {
            span: Span::new(self.start, self.end),
            text: Some(&self.text),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct QuadDto {
    entity: Option<SpanDto>,
    aspect: Option<SpanDto>,
    opinion: SpanDto,
    polarity: Polarity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TripleDto {
    target: SpanDto,
    opinion: SpanDto,
    polarity: Polarity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairDto {
    target: SpanDto,
    opinion: SpanDto,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LineDto {
    id: String,
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quads: Option<Vec<QuadDto>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    triples: Option<Vec<TripleDto>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pairs: Option<Vec<PairDto>>,
}

/// Keeps the first occurrence of every element.
fn dedup_in_order<T: Ord + Copy>(items: Vec<T>, id: &str, line: usize) -> Vec<T> {
    let mut seen = BTreeSet::new();
    let before = items.len();
    let out: Vec<T> = items.into_iter().filter(|x| seen.insert(*x)).collect();
    if out.len() < before {
        log::warn!(
            "line {line}: dropped {} duplicate annotation(s) in sentence {id:?}",
            before - out.len()
        );
    }
    out
}

fn parse_line(text: &str, line: usize, task: TaskKind) -> Result<Record> {
    let dto: LineDto = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })?;
    let sentence = Sentence::new(dto.id.clone(), dto.tokens).map_err(|e| Error::Validation {
        line,
        violations: vec![Violation::InvalidSentence(e.to_string())],
    })?;
    let present = [
        (TaskKind::Easqe, dto.quads.is_some()),
        (TaskKind::Aste, dto.triples.is_some()),
        (TaskKind::Ope, dto.pairs.is_some()),
    ];
    if let Some((other, _)) = present.iter().find(|(t, has)| *has && *t != task) {
        return Err(Error::Parse {
            line,
            message: format!("found {other} annotations while reading a {task} dataset"),
        });
    }

    let mut violations = Vec::new();
    let gold = match task {
        TaskKind::Easqe => {
            let mut quads = Vec::new();
            for q in dto.quads.unwrap_or_default() {
                violations.extend(validate_quadruple_claimed(
                    q.entity.as_ref().map(SpanDto::claimed),
                    q.aspect.as_ref().map(SpanDto::claimed),
                    q.opinion.claimed(),
                    &sentence,
                ));
                quads.push(Quadruple::new(
                    q.entity.map(|s| Span::new(s.start, s.end)),
                    q.aspect.map(|s| Span::new(s.start, s.end)),
                    Span::new(q.opinion.start, q.opinion.end),
                    q.polarity,
                ));
            }
            Annotations::Quads(dedup_in_order(quads, &sentence.id, line))
        }
        TaskKind::Aste => {
            let mut triples = Vec::new();
            for t in dto.triples.unwrap_or_default() {
                violations.extend(validate_target_opinion(
                    t.target.claimed(),
                    t.opinion.claimed(),
                    &sentence,
                ));
                triples.push(Triple {
                    target: Span::new(t.target.start, t.target.end),
                    opinion: Span::new(t.opinion.start, t.opinion.end),
                    polarity: t.polarity,
                });
            }
            Annotations::Triples(dedup_in_order(triples, &sentence.id, line))
        }
        TaskKind::Ope => {
            let mut pairs = Vec::new();
            for p in dto.pairs.unwrap_or_default() {
                violations.extend(validate_target_opinion(
                    p.target.claimed(),
                    p.opinion.claimed(),
                    &sentence,
                ));
                pairs.push(Pair {
                    target: Span::new(p.target.start, p.target.end),
                    opinion: Span::new(p.opinion.start, p.opinion.end),
                });
            }
            Annotations::Pairs(dedup_in_order(pairs, &sentence.id, line))
        }
    };
    if !violations.is_empty() {
        return Err(Error::Validation { line, violations });
    }
    Ok(Record { sentence, gold })
}

/// Parses JSONL text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_dataset(name: &str, text: impl BufRead, task: TaskKind) -> Result<Dataset> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_line(&line, line_no, task)?;
        if !seen.insert(record.sentence.id.clone()) {
            return Err(Error::Validation {
                line: line_no,
                violations: vec![Violation::DuplicateSentenceId(record.sentence.id)],
            });
        }
        records.push(record);
    }
    Ok(Dataset {
        name: name.to_owned(),
        task,
        records,
    })
}

pub fn read_dataset(path: impl AsRef<Path>, task: TaskKind) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = fs::File::open(path)?;
    parse_dataset(&name, BufReader::new(file), task)
}

fn record_to_dto(r: &Record) -> LineDto {
    let s = &r.sentence;
    let span = |x: Span| SpanDto::from_span(x, s);
    let mut dto = LineDto {
        id: s.id.clone(),
        tokens: s.tokens.clone(),
        quads: None,
        triples: None,
        pairs: None,
    };
    match &r.gold {
        Annotations::Quads(v) => {
            dto.quads = Some(
                v.iter()
                    .map(|q| QuadDto {
                        entity: q.entity.map(span),
                        aspect: q.aspect.map(span),
                        opinion: span(q.opinion),
                        polarity: q.polarity,
                    })
                    .collect(),
            )
        }
        Annotations::Triples(v) => {
            dto.triples = Some(
                v.iter()
                    .map(|t| TripleDto {
                        target: span(t.target),
                        opinion: span(t.opinion),
                        polarity: t.polarity,
                    })
                    .collect(),
            )
        }
        Annotations::Pairs(v) => {
            dto.pairs = Some(
                v.iter()
                    .map(|p| PairDto {
                        target: span(p.target),
                        opinion: span(p.opinion),
                    })
                    .collect(),
            )
        }
    }
    dto
}

/// Canonical serialization: one record per line, `\n` terminated.
pub fn write_records(dataset: &Dataset, mut out: impl Write) -> Result<()> {
    for r in &dataset.records {
        serde_json::to_writer(&mut out, &record_to_dto(r))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    write_records(dataset, BufWriter::new(file))
}
