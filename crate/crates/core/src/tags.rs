//! BIO label alphabets and conversion between label sequences and spans.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Polarity, Span};

/// What a tagged span denotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Sentiment(Polarity),
    /// Opinion span without polarity.
    Opinion,
    Entity,
    Aspect,
}

impl Category {
    pub fn suffix(&self) -> Option<&'static str> {
        match self {
            Category::Sentiment(p) => Some(p.as_str()),
            Category::Opinion => None,
            Category::Entity => Some("ENT"),
            Category::Aspect => Some("ASP"),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.suffix().unwrap_or("SPAN"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Outside,
    Begin(Category),
    Inside(Category),
}

impl Label {
    pub fn category(&self) -> Option<Category> {
        match self {
            Label::Outside => None,
            Label::Begin(c) | Label::Inside(c) => Some(*c),
        }
    }

    /// Whether `self` may directly follow `prev` (`None` = sequence start).
    pub fn may_follow(&self, prev: Option<Label>) -> bool {
        match self {
            Label::Inside(c) => matches!(prev, Some(Label::Begin(p)) | Some(Label::Inside(p)) if p == *c),
            _ => true,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self, self.category().and_then(|c| c.suffix())) {
            (Label::Outside, _) => f.write_str("O"),
            (Label::Begin(_), Some(s)) => write!(f, "B-{s}"),
            (Label::Inside(_), Some(s)) => write!(f, "I-{s}"),
            (Label::Begin(_), None) => f.write_str("B"),
            (Label::Inside(_), None) => f.write_str("I"),
        }
    }
}

const POS: Category = Category::Sentiment(Polarity::Positive);
const NEU: Category = Category::Sentiment(Polarity::Neutral);
const NEG: Category = Category::Sentiment(Polarity::Negative);

const STAGE1_EASQE: [Label; 7] = [
    Label::Outside,
    Label::Begin(POS),
    Label::Inside(POS),
    Label::Begin(NEU),
    Label::Inside(NEU),
    Label::Begin(NEG),
    Label::Inside(NEG),
];
const STAGE1_SPAN: [Label; 3] = [
    Label::Outside,
    Label::Begin(Category::Opinion),
    Label::Inside(Category::Opinion),
];
const STAGE2_EASQE: [Label; 5] = [
    Label::Outside,
    Label::Begin(Category::Entity),
    Label::Inside(Category::Entity),
    Label::Begin(Category::Aspect),
    Label::Inside(Category::Aspect),
];
const STAGE2_ASPECT: [Label; 3] = [
    Label::Outside,
    Label::Begin(Category::Aspect),
    Label::Inside(Category::Aspect),
];

/// The four label alphabets. `O` is always index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TagScheme {
    /// Opinion spans with polarity.
    Stage1Easqe,
    /// Opinion spans only.
    Stage1Span,
    /// Entity and aspect spans.
    Stage2Easqe,
    /// Merged targets, tagged as aspects.
    Stage2Aspect,
}

impl TagScheme {
    pub const ALL: [TagScheme; 4] = [
        TagScheme::Stage1Easqe,
        TagScheme::Stage1Span,
        TagScheme::Stage2Easqe,
        TagScheme::Stage2Aspect,
    ];

    pub fn labels(&self) -> &'static [Label] {
        match self {
            TagScheme::Stage1Easqe => &STAGE1_EASQE,
            TagScheme::Stage1Span => &STAGE1_SPAN,
            TagScheme::Stage2Easqe => &STAGE2_EASQE,
            TagScheme::Stage2Aspect => &STAGE2_ASPECT,
        }
    }

    pub fn len(&self) -> usize {
        self.labels().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_stage1(&self) -> bool {
        matches!(self, TagScheme::Stage1Easqe | TagScheme::Stage1Span)
    }

    pub fn name(&self) -> &'static str {
        match self {
            TagScheme::Stage1Easqe => "STAGE1_EASQE",
            TagScheme::Stage1Span => "STAGE1_SPAN",
            TagScheme::Stage2Easqe => "STAGE2_EASQE",
            TagScheme::Stage2Aspect => "STAGE2_ASPECT",
        }
    }

    pub fn label(&self, index: usize) -> Label {
        self.labels()[index]
    }

    pub fn index_of(&self, label: Label) -> Option<usize> {
        self.labels().iter().position(|l| *l == label)
    }

    pub fn parse_label(&self, s: &str) -> Option<usize> {
        self.labels().iter().position(|l| l.to_string() == s)
    }

    pub fn has_category(&self, category: Category) -> bool {
        self.index_of(Label::Begin(category)).is_some()
    }
}

impl fmt::Display for TagScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-token label indices under one scheme.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TagSequence {
    pub scheme: TagScheme,
    pub labels: Vec<usize>,
}

impl TagSequence {
    /// Panics if an index is outside the scheme's alphabet.
    pub fn new(scheme: TagScheme, labels: Vec<usize>) -> Self {
        assert!(
            labels.iter().all(|&l| l < scheme.len()),
            "label index out of range for {scheme}"
        );
        TagSequence { scheme, labels }
    }

    pub fn outside(scheme: TagScheme, len: usize) -> Self {
        TagSequence {
            scheme,
            labels: vec![0; len],
        }
    }

    pub fn from_strs(scheme: TagScheme, labels: &[&str]) -> Result<Self> {
        let labels = labels
            .iter()
            .map(|s| {
                scheme.parse_label(s).ok_or_else(|| Error::Category {
                    category: (*s).to_owned(),
                    scheme: scheme.name().to_owned(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TagSequence { scheme, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.labels
            .iter()
            .map(|&l| self.scheme.label(l).to_string())
            .collect()
    }

    pub fn validate_bio(&self) -> Result<()> {
        let mut prev = None;
        for (position, &idx) in self.labels.iter().enumerate() {
            let label = self.scheme.label(idx);
            if !label.may_follow(prev) {
                return Err(Error::InvalidBio {
                    position,
                    label: label.to_string(),
                });
            }
            prev = Some(label);
        }
        Ok(())
    }

    pub fn is_bio_valid(&self) -> bool {
        self.validate_bio().is_ok()
    }
}

/// Maximal `B-x (I-x)*` runs, left to right.
pub fn spans_from_tags(tags: &TagSequence) -> Result<Vec<(Span, Category)>> {
    tags.validate_bio()?;
    let mut out: Vec<(Span, Category)> = Vec::new();
    for (i, &idx) in tags.labels.iter().enumerate() {
        match tags.scheme.label(idx) {
            Label::Outside => {}
            Label::Begin(c) => out.push((Span::new(i, i + 1), c)),
            Label::Inside(_) => {
                // validate_bio guarantees an open run of the same category
                if let Some(last) = out.last_mut() {
                    last.0.end = i + 1;
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`spans_from_tags`]; positions outside every span are `O`.
pub fn tags_from_spans(
    spans: &[(Span, Category)],
    length: usize,
    scheme: TagScheme,
) -> Result<TagSequence> {
    let mut sorted: Vec<&(Span, Category)> = spans.iter().collect();
    sorted.sort_by_key(|(s, _)| (s.start, s.end));
    for pair in sorted.windows(2) {
        let (a, b) = (pair[0].0, pair[1].0);
        if a.overlaps(&b) {
            return Err(Error::Overlap {
                first: (a.start, a.end),
                second: (b.start, b.end),
            });
        }
    }
    let mut labels = vec![0; length];
    for (span, category) in sorted {
        span.check_bounds(length)?;
        let (Some(begin), Some(inside)) = (
            scheme.index_of(Label::Begin(*category)),
            scheme.index_of(Label::Inside(*category)),
        ) else {
            return Err(Error::Category {
                category: category.to_string(),
                scheme: scheme.name().to_owned(),
            });
        };
        labels[span.start] = begin;
        for slot in &mut labels[span.start + 1..span.end] {
            *slot = inside;
        }
    }
    Ok(TagSequence { scheme, labels })
}
