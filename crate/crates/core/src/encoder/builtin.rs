//! Window-concatenation encoder with trigger pooling.
//!
//! For framed position `i` the input feature is
//! `[emb(prev); emb(cur); emb(next); seg(i); pool]`, where `pool` is the mean
//! embedding over the trigger copy (zero without a trigger) and positions
//! outside the frame read the PAD embedding. The hidden row is
//! `projection · feature + projection_bias`.

use std::collections::HashMap;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::frame::{FramedInput, Piece};
use super::HiddenMatrix;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<cls>", "<sep>"];

/// Number of `d_e`-wide blocks in one input feature.
pub const FEATURE_BLOCKS: usize = 5;

/// Token inventory. Ids 0..4 are PAD, UNK, CLS and SEP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds from tokens in first-seen order, skipping repeats.
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = Vocab {
            tokens: SPECIALS.iter().map(|s| (*s).to_owned()).collect(),
            index: HashMap::new(),
        };
        for t in tokens {
            if !vocab.index.contains_key(t) {
                vocab.index.insert(t.to_owned(), vocab.tokens.len());
                vocab.tokens.push(t.to_owned());
            }
        }
        vocab
    }

    /// Restores a vocabulary from its full token list, specials included.
    pub fn from_list(list: Vec<String>) -> Option<Self> {
        if list.len() < SPECIALS.len() || list[..SPECIALS.len()] != SPECIALS {
            return None;
        }
        let index = list
            .iter()
            .enumerate()
            .skip(SPECIALS.len())
            .map(|(i, t)| (t.clone(), i))
            .collect::<HashMap<_, _>>();
        if index.len() != list.len() - SPECIALS.len() {
            return None;
        }
        Some(Vocab {
            tokens: list,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_list(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn piece_id(&self, piece: &Piece) -> usize {
        match piece {
            Piece::Cls => CLS,
            Piece::Sep => SEP,
            Piece::Token(t) => self.id(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// vocab × d_e
    pub token_embeddings: Array2<f64>,
    /// 2 × d_e
    pub segment_embeddings: Array2<f64>,
    /// d × 5·d_e
    pub projection: Array2<f64>,
    /// d
    pub projection_bias: Array1<f64>,
}

impl EncoderParams {
    pub fn zeros(vocab_size: usize, embed_dim: usize, hidden_dim: usize) -> Self {
        EncoderParams {
            token_embeddings: Array2::zeros((vocab_size, embed_dim)),
            segment_embeddings: Array2::zeros((2, embed_dim)),
            projection: Array2::zeros((hidden_dim, FEATURE_BLOCKS * embed_dim)),
            projection_bias: Array1::zeros(hidden_dim),
        }
    }

    /// Unit-variance embeddings and fan-in scaled projection; biases zero.
    pub fn random<R: Rng>(vocab_size: usize, embed_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(vocab_size, embed_dim, hidden_dim);
        let unit = Normal::new(0.0, 1.0).unwrap();
        p.token_embeddings.mapv_inplace(|_| unit.sample(rng));
        p.segment_embeddings.mapv_inplace(|_| unit.sample(rng));
        let proj = Normal::new(0.0, 1.0 / ((FEATURE_BLOCKS * embed_dim) as f64).sqrt()).unwrap();
        p.projection.mapv_inplace(|_| proj.sample(rng));
        p
    }

    pub fn embed_dim(&self) -> usize {
        self.token_embeddings.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.token_embeddings.nrows()
    }

    pub(crate) fn tensors(&self) -> [&[f64]; 4] {
        [
            self.token_embeddings.as_slice().expect("standard layout"),
            self.segment_embeddings.as_slice().expect("standard layout"),
            self.projection.as_slice().expect("standard layout"),
            self.projection_bias.as_slice().expect("standard layout"),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.token_embeddings.as_slice_mut().expect("standard layout"),
            self.segment_embeddings.as_slice_mut().expect("standard layout"),
            self.projection.as_slice_mut().expect("standard layout"),
            self.projection_bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Token ids of the framed pieces.
fn piece_ids(vocab: &Vocab, framed: &FramedInput) -> Vec<usize> {
    framed.pieces.iter().map(|(p, _)| vocab.piece_id(p)).collect()
}

fn trigger_pool(params: &EncoderParams, ids: &[usize], framed: &FramedInput) -> Array1<f64> {
    let de = params.embed_dim();
    let mut pool = Array1::zeros(de);
    if framed.trigger_range.is_empty() {
        return pool;
    }
    for &id in &ids[framed.trigger_range.clone()] {
        pool += &params.token_embeddings.row(id);
    }
    pool / framed.trigger_range.len() as f64
}

/// Input features, one row of width `5·d_e` per framed position.
pub(crate) fn features(vocab: &Vocab, params: &EncoderParams, framed: &FramedInput) -> Array2<f64> {
    let de = params.embed_dim();
    let n = framed.len();
    let ids = piece_ids(vocab, framed);
    let pool = trigger_pool(params, &ids, framed);
    let emb = &params.token_embeddings;
    let mut x = Array2::zeros((n, FEATURE_BLOCKS * de));
    for (i, (_, seg)) in framed.pieces.iter().enumerate() {
        let prev = if i == 0 { PAD } else { ids[i - 1] };
        let next = if i + 1 == n { PAD } else { ids[i + 1] };
        let mut row = x.row_mut(i);
        row.slice_mut(s![0..de]).assign(&emb.row(prev));
        row.slice_mut(s![de..2 * de]).assign(&emb.row(ids[i]));
        row.slice_mut(s![2 * de..3 * de]).assign(&emb.row(next));
        row.slice_mut(s![3 * de..4 * de])
            .assign(&params.segment_embeddings.row(usize::from(*seg)));
        row.slice_mut(s![4 * de..5 * de]).assign(&pool);
    }
    x
}

pub fn forward(vocab: &Vocab, params: &EncoderParams, framed: &FramedInput) -> HiddenMatrix {
    let x = features(vocab, params, framed);
    let h = x.dot(&params.projection.t()) + &params.projection_bias;
    HiddenMatrix(h)
}

/// Accumulates parameter gradients given `d loss / d hidden`.
pub(crate) fn backward(
    vocab: &Vocab,
    params: &EncoderParams,
    framed: &FramedInput,
    d_hidden: ArrayView2<'_, f64>,
    grad: &mut EncoderParams,
) {
    let de = params.embed_dim();
    let n = framed.len();
    let ids = piece_ids(vocab, framed);
    let x = features(vocab, params, framed);

    grad.projection += &d_hidden.t().dot(&x);
    grad.projection_bias += &d_hidden.sum_axis(Axis(0));

    let dx = d_hidden.dot(&params.projection);
    let mut d_pool = Array1::<f64>::zeros(de);
    for (i, (_, seg)) in framed.pieces.iter().enumerate() {
        let row = dx.row(i);
        let prev = if i == 0 { PAD } else { ids[i - 1] };
        let next = if i + 1 == n { PAD } else { ids[i + 1] };
        let mut emb = grad.token_embeddings.view_mut();
        emb.row_mut(prev).scaled_add(1.0, &row.slice(s![0..de]));
        emb.row_mut(ids[i]).scaled_add(1.0, &row.slice(s![de..2 * de]));
        emb.row_mut(next).scaled_add(1.0, &row.slice(s![2 * de..3 * de]));
        grad.segment_embeddings
            .row_mut(usize::from(*seg))
            .scaled_add(1.0, &row.slice(s![3 * de..4 * de]));
        d_pool += &row.slice(s![4 * de..5 * de]);
    }
    if !framed.trigger_range.is_empty() {
        let share = 1.0 / framed.trigger_range.len() as f64;
        for &id in &ids[framed.trigger_range.clone()] {
            grad.token_embeddings.row_mut(id).scaled_add(share, &d_pool);
        }
    }
}
