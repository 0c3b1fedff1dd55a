//! Reader for index-list triplet files:
//! `The food was good .####[([1], [3], 'POS')]`.
//!
//! Token indices are 0-based and must be contiguous. Sentences carry no ids in
//! this format, so the 0-based line index is used.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use super::{Annotations, Dataset, Record};
use crate::error::{Error, Result};
use crate::model::{validate_triple, Polarity, Sentence, Span, Triple};
use crate::pipeline::TaskKind;

fn tuple_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\(\s*\[([0-9,\s]*)\]\s*,\s*\[([0-9,\s]*)\]\s*,\s*'([A-Z]+)'\s*\)")
            .expect("valid regex")
    })
}

fn parse_indices(list: &str, line: usize) -> Result<Span> {
    let idx = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>().map_err(|e| Error::Parse {
                line,
                message: format!("bad index {s:?}: {e}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (Some(&first), Some(&last)) = (idx.first(), idx.last()) else {
        return Err(Error::Parse {
            line,
            message: "empty index list".into(),
        });
    };
    if idx.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Parse {
            line,
            message: format!("non-contiguous indices {idx:?}"),
        });
    }
    Ok(Span::new(first, last + 1))
}

pub fn parse_legacy_line(text: &str, line: usize) -> Result<Record> {
    let (sentence_text, tail) = text.split_once("####").ok_or_else(|| Error::Parse {
        line,
        message: "missing #### separator".into(),
    })?;
    let sentence = Sentence::from_text((line - 1).to_string(), sentence_text).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })?;
    let tail = tail.trim();
    if !(tail.starts_with('[') && tail.ends_with(']')) {
        return Err(Error::Parse {
            line,
            message: "triplet list must be bracketed".into(),
        });
    }
    let mut triples = Vec::new();
    let mut consumed = 0;
    for cap in tuple_re().captures_iter(tail) {
        consumed += 1;
        let polarity: Polarity = cap[3].parse().map_err(|_| Error::Parse {
            line,
            message: format!("unknown polarity {:?}", &cap[3]),
        })?;
        let t = Triple {
            target: parse_indices(&cap[1], line)?,
            opinion: parse_indices(&cap[2], line)?,
            polarity,
        };
        let violations = validate_triple(&t, &sentence);
        if !violations.is_empty() {
            return Err(Error::Validation { line, violations });
        }
        if !triples.contains(&t) {
            triples.push(t);
        }
    }
    if consumed == 0 && tail.trim_matches(|c| c == '[' || c == ']').trim() != "" {
        return Err(Error::Parse {
            line,
            message: "unrecognized triplet syntax".into(),
        });
    }
    Ok(Record {
        sentence,
        gold: Annotations::Triples(triples),
    })
}

pub fn read_legacy_aste(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_legacy_line(&line, i + 1)?);
    }
    Dataset::new(name, TaskKind::Aste, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_multi_token_spans() {
        let r = parse_legacy_line(
            "The cafe was nice but the service could have been better .####[([6], [7, 8, 9, 10], 'NEG'), ([1], [3], 'POS')]",
            1,
        )
        .unwrap();
        assert_eq!(r.sentence.id, "0");
        let t = r.gold.triples().unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].target.text(&r.sentence), "service");
        assert_eq!(t[0].opinion.text(&r.sentence), "could have been better");
        assert_eq!(t[1].polarity, Polarity::Positive);
    }

    #[test]
    fn rejects_gaps_and_bounds() {
        assert!(matches!(
            parse_legacy_line("a b c d####[([0, 2], [3], 'POS')]", 1),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_legacy_line("a b####[([5], [0], 'POS')]", 1),
            Err(Error::Validation { .. })
        ));
        assert!(matches!(parse_legacy_line("a b c", 4), Err(Error::Parse { line: 4, .. })));
        assert!(matches!(
            parse_legacy_line("a b####[([0], [1], 'GOOD')]", 1),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn empty_list_is_allowed() {
        let r = parse_legacy_line("nothing here####[]", 3).unwrap();
        assert!(r.gold.is_empty());
        assert_eq!(r.sentence.id, "2");
    }
}
