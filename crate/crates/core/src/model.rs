//! Sentences, token spans and the structured opinion records extracted from them.
//!
//! Spans are token-index based. Their surface text is a function of the owning
//! sentence, so a [`Span`] stores only its bounds and the text is recovered with
//! [`Span::text`]. Files carry the text redundantly and it is checked on load.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw token budget: the 64-position framing cap minus the two sentinels.
pub const DEFAULT_MAX_TOKENS: usize = 62;

/// A tokenized review sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, tokens: Vec<String>) -> Result<Self> {
        let id = id.into();
        if tokens.is_empty() {
            return Err(Error::Task(format!("sentence {id:?} has no tokens")));
        }
        if let Some(pos) = tokens.iter().position(|t| t.is_empty()) {
            return Err(Error::Task(format!(
                "sentence {id:?} has an empty token at position {pos}"
            )));
        }
        Ok(Sentence { id, tokens })
    }

    /// Splits on ASCII whitespace.
    pub fn from_text(id: impl Into<String>, text: &str) -> Result<Self> {
        Self::new(id, text.split_whitespace().map(str::to_owned).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Half-open token range `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    /// Builds a span and checks it against the sentence bounds.
    pub fn within(sentence: &Sentence, start: usize, end: usize) -> Result<Self> {
        let span = Span { start, end };
        span.check_bounds(sentence.len())?;
        Ok(span)
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn check_bounds(&self, len: usize) -> Result<()> {
        if self.start < self.end && self.end <= len {
            Ok(())
        } else {
            Err(Error::SpanOutOfBounds {
                start: self.start,
                end: self.end,
                len,
            })
        }
    }

    /// Space-joined covered tokens. Panics if the span is out of bounds.
    pub fn text(&self, sentence: &Sentence) -> String {
        sentence.tokens[self.start..self.end].join(" ")
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "POS")]
    Positive,
    #[serde(rename = "NEU")]
    Neutral,
    #[serde(rename = "NEG")]
    Negative,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Neutral, Polarity::Negative];

    pub fn as_str(&self) -> &'static str {
        match self {
            Polarity::Positive => "POS",
            Polarity::Neutral => "NEU",
            Polarity::Negative => "NEG",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "POS" => Ok(Polarity::Positive),
            "NEU" => Ok(Polarity::Neutral),
            "NEG" => Ok(Polarity::Negative),
            other => Err(Error::Task(format!("unknown polarity {other:?}"))),
        }
    }
}

/// Entity-aspect-opinion-sentiment record. Either target slot may be implicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quadruple {
    pub entity: Option<Span>,
    pub aspect: Option<Span>,
    pub opinion: Span,
    pub polarity: Polarity,
}

impl Quadruple {
    pub fn new(
        entity: Option<Span>,
        aspect: Option<Span>,
        opinion: Span,
        polarity: Polarity,
    ) -> Self {
        Quadruple {
            entity,
            aspect,
            opinion,
            polarity,
        }
    }

    /// Merged target: the entity when both targets are present, otherwise
    /// whichever one is. `None` only for an invalid both-null record.
    pub fn merged_target(&self) -> Option<Span> {
        self.entity.or(self.aspect)
    }

    pub fn to_triple(&self) -> Option<Triple> {
        self.merged_target().map(|target| Triple {
            target,
            opinion: self.opinion,
            polarity: self.polarity,
        })
    }
}

/// Aspect sentiment triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub target: Span,
    pub opinion: Span,
    pub polarity: Polarity,
}

impl Triple {
    pub fn to_pair(&self) -> Pair {
        Pair {
            target: self.target,
            opinion: self.opinion,
        }
    }
}

/// Target-opinion pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair {
    pub target: Span,
    pub opinion: Span,
}

/// A broken record invariant. Violations are reported as data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    BothTargetsNull,
    DuplicateSentenceId(String),
    InvalidSentence(String),
    SpanOutOfBounds {
        role: &'static str,
        start: usize,
        end: usize,
    },
    TextMismatch {
        role: &'static str,
        expected: String,
        found: String,
    },
}

fn check_span(
    role: &'static str,
    span: &Span,
    text: Option<&str>,
    sentence: &Sentence,
    out: &mut Vec<Violation>,
) {
    if span.check_bounds(sentence.len()).is_err() {
        out.push(Violation::SpanOutOfBounds {
            role,
            start: span.start,
            end: span.end,
        });
        return;
    }
    if let Some(found) = text {
        let expected = span.text(sentence);
        if expected != found {
            out.push(Violation::TextMismatch {
                role,
                expected,
                found: found.to_owned(),
            });
        }
    }
}

/// Span together with the surface text a file claimed for it.
#[derive(Debug, Clone, Copy)]
pub struct ClaimedSpan<'a> {
    pub span: Span,
    pub text: Option<&'a str>,
}

impl From<Span> for ClaimedSpan<'_> {
    fn from(span: Span) -> Self {
        ClaimedSpan { span, text: None }
    }
}

/// Every violated quadruple invariant; empty when the record is valid.
pub fn validate_quadruple(q: &Quadruple, s: &Sentence) -> Vec<Violation> {
    validate_quadruple_claimed(
        q.entity.map(ClaimedSpan::from),
        q.aspect.map(ClaimedSpan::from),
        q.opinion.into(),
        s,
    )
}

pub(crate) fn validate_quadruple_claimed(
    entity: Option<ClaimedSpan<'_>>,
    aspect: Option<ClaimedSpan<'_>>,
    opinion: ClaimedSpan<'_>,
    s: &Sentence,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if entity.is_none() && aspect.is_none() {
        out.push(Violation::BothTargetsNull);
    }
    if let Some(e) = entity {
        check_span("entity", &e.span, e.text, s, &mut out);
    }
    if let Some(a) = aspect {
        check_span("aspect", &a.span, a.text, s, &mut out);
    }
    check_span("opinion", &opinion.span, opinion.text, s, &mut out);
    out
}

pub(crate) fn validate_target_opinion(
    target: ClaimedSpan<'_>,
    opinion: ClaimedSpan<'_>,
    s: &Sentence,
) -> Vec<Violation> {
    let mut out = Vec::new();
    check_span("target", &target.span, target.text, s, &mut out);
    check_span("opinion", &opinion.span, opinion.text, s, &mut out);
    out
}

pub fn validate_triple(t: &Triple, s: &Sentence) -> Vec<Violation> {
    validate_target_opinion(t.target.into(), t.opinion.into(), s)
}

pub fn validate_pair(p: &Pair, s: &Sentence) -> Vec<Violation> {
    validate_target_opinion(p.target.into(), p.opinion.into(), s)
}
