use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::{Sentence, Span};

/// Framed length cap, sentinels included.
pub const MAX_FRAMED_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Piece {
    Cls,
    Sep,
    Token(String),
}

/// Sentinel-delimited model input for one sentence (and optional trigger).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramedInput {
    /// Each piece with its segment id (0 up to and including the first SEP, 1 after).
    pub pieces: Vec<(Piece, u8)>,
    /// Framed position of every raw sentence token.
    pub raw_map: Vec<usize>,
    /// Framed positions of the trigger copy; empty for stage one.
    pub trigger_range: Range<usize>,
    /// Lookup key for precomputed embeddings.
    pub key: String,
}

impl FramedInput {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn raw_len(&self) -> usize {
        self.raw_map.len()
    }

    pub fn segments(&self) -> impl Iterator<Item = u8> + '_ {
        self.pieces.iter().map(|(_, s)| *s)
    }
}

pub fn stage1_key(sentence_id: &str) -> String {
    format!("{sentence_id}/s1")
}

pub fn stage2_key(sentence_id: &str, trigger: Span) -> String {
    format!("{sentence_id}/s2/{}-{}", trigger.start, trigger.end)
}

/// `CLS w_1 .. w_m SEP`, all in segment 0.
pub fn frame_stage1(s: &Sentence) -> Result<FramedInput> {
    let len = s.len() + 2;
    if len > MAX_FRAMED_LEN {
        return Err(Error::TooLong {
            len,
            max: MAX_FRAMED_LEN,
        });
    }
    let mut pieces = Vec::with_capacity(len);
    pieces.push((Piece::Cls, 0));
    pieces.extend(s.tokens.iter().map(|t| (Piece::Token(t.clone()), 0)));
    pieces.push((Piece::Sep, 0));
    Ok(FramedInput {
        pieces,
        raw_map: (1..=s.len()).collect(),
        trigger_range: 0..0,
        key: stage1_key(&s.id),
    })
}

/// `CLS w_1 .. w_m SEP w_u .. w_v SEP`; the trigger copy and final SEP are segment 1.
pub fn frame_stage2(s: &Sentence, trigger: Span) -> Result<FramedInput> {
    trigger.check_bounds(s.len())?;
    let len = s.len() + trigger.len() + 3;
    if len > MAX_FRAMED_LEN {
        return Err(Error::TooLong {
            len,
            max: MAX_FRAMED_LEN,
        });
    }
    let mut pieces = Vec::with_capacity(len);
    pieces.push((Piece::Cls, 0));
    pieces.extend(s.tokens.iter().map(|t| (Piece::Token(t.clone()), 0)));
    pieces.push((Piece::Sep, 0));
    let trigger_start = pieces.len();
    pieces.extend(
        s.tokens[trigger.start..trigger.end]
            .iter()
            .map(|t| (Piece::Token(t.clone()), 1)),
    );
    let trigger_end = pieces.len();
    pieces.push((Piece::Sep, 1));
    Ok(FramedInput {
        pieces,
        raw_map: (1..=s.len()).collect(),
        trigger_range: trigger_start..trigger_end,
        key: stage2_key(&s.id, trigger),
    })
}
