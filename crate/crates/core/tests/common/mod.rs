//! Brute-force oracles and random case generators shared by the integration
//! tests. Nothing here calls the chain routines under test.

#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use easqe::encoder::{frame_stage1, frame_stage2, ExternalEmbeddingStore, HiddenMatrix, Vocab};
use easqe::model::{Sentence, Span};
use easqe::tagger::{Instance, Mode, Params, TaggerModel};
use easqe::tags::{TagScheme, TagSequence};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// BIO admissibility read off the label strings.
pub fn bio_allowed(scheme: TagScheme, prev: Option<usize>, next: usize) -> bool {
    let next = scheme.label(next).to_string();
    let Some(kind) = next.strip_prefix('I') else {
        return true;
    };
    let Some(prev) = prev else { return false };
    let prev = scheme.label(prev).to_string();
    (prev.starts_with('B') || prev.starts_with('I')) && prev[1..] == *kind
}

pub fn is_valid_path(scheme: TagScheme, path: &[usize]) -> bool {
    let mut prev = None;
    for &y in path {
        if !bio_allowed(scheme, prev, y) {
            return false;
        }
        prev = Some(y);
    }
    true
}

/// Path score with START at row `L` and STOP at column `L + 1`, summed in
/// left-to-right order. `-inf` for paths violating BIO.
pub fn oracle_score(scores: &Array2<f64>, trans: &Array2<f64>, scheme: TagScheme, path: &[usize]) -> f64 {
    if !is_valid_path(scheme, path) {
        return f64::NEG_INFINITY;
    }
    let l = scheme.len();
    let mut acc = trans[[l, path[0]]] + scores[[0, path[0]]];
    for i in 1..path.len() {
        acc = acc + trans[[path[i - 1], path[i]]] + scores[[i, path[i]]];
    }
    acc + trans[[path[path.len() - 1], l + 1]]
}

/// Every label sequence of length `n` over `labels` labels, lexicographic.
pub fn all_paths(n: usize, labels: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..labels).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn oracle_log_partition(scores: &Array2<f64>, trans: &Array2<f64>, scheme: TagScheme) -> f64 {
    let values: Vec<f64> = all_paths(scores.nrows(), scheme.len())
        .iter()
        .map(|p| oracle_score(scores, trans, scheme, p))
        .collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Highest-scoring valid path. Among equal scores the path whose reversed
/// label sequence is lexicographically smallest wins.
pub fn oracle_viterbi(scores: &Array2<f64>, trans: &Array2<f64>, scheme: TagScheme) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for p in all_paths(scores.nrows(), scheme.len()) {
        let v = oracle_score(scores, trans, scheme, &p);
        let better = match &best {
            None => true,
            Some((bv, bp)) => v > *bv || (v == *bv && p.iter().rev().lt(bp.iter().rev())),
        };
        if better {
            best = Some((v, p));
        }
    }
    best.unwrap().1
}

pub fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, sd: f64) -> Array2<f64> {
    let d = Normal::new(0.0, sd).unwrap();
    Array2::from_shape_fn((rows, cols), |_| d.sample(rng))
}

pub fn integer_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, max: i32) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-max..=max) as f64)
}

/// A uniformly drawn label sequence repaired into BIO validity: an inside
/// label without a matching predecessor becomes the begin label of its kind.
pub fn random_valid_tags<R: Rng>(rng: &mut R, scheme: TagScheme, n: usize) -> TagSequence {
    let mut labels = Vec::with_capacity(n);
    let mut prev = None;
    for _ in 0..n {
        let mut y = rng.random_range(0..scheme.len());
        if !bio_allowed(scheme, prev, y) {
            y -= 1;
        }
        labels.push(y);
        prev = Some(y);
    }
    TagSequence::new(scheme, labels)
}

const WORDS: &[&str] = &["the", "sushi", "price", "was", "great", "service", "slow", "but", "staff"];

pub fn random_sentence<R: Rng>(rng: &mut R, id: &str, min: usize, max: usize) -> Sentence {
    let n = rng.random_range(min..=max);
    let tokens = (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())].to_owned()).collect();
    Sentence::new(id, tokens).unwrap()
}

pub fn random_span<R: Rng>(rng: &mut R, len: usize) -> Span {
    let start = rng.random_range(0..len);
    let end = rng.random_range(start + 1..=len);
    Span::new(start, end)
}

pub fn randomize<R: Rng>(rng: &mut R, params: &mut Params, sd: f64) {
    let d = Normal::new(0.0, sd).unwrap();
    params.for_each_mut(|v| *v = d.sample(rng));
}

/// A randomly initialised tagger together with one gold-labelled instance and,
/// for the external backend, the store holding its features.
pub struct GradCase {
    pub model: TaggerModel,
    pub instance: Instance,
    pub store: Option<ExternalEmbeddingStore>,
}

pub fn grad_case(seed: u64, scheme: TagScheme, mode: Mode, builtin: bool) -> GradCase {
    let mut rng = rng(seed);
    let s = random_sentence(&mut rng, &format!("g{seed}"), 2, 5);
    let framed = if scheme.is_stage1() {
        frame_stage1(&s).unwrap()
    } else {
        let trigger = random_span(&mut rng, s.len());
        frame_stage2(&s, trigger).unwrap()
    };
    let gold = random_valid_tags(&mut rng, scheme, s.len());
    let hidden = 4;
    let (mut model, store) = if builtin {
        let vocab = Vocab::from_tokens(WORDS.iter().copied());
        let m = TaggerModel::new_builtin(scheme, mode, vocab, 3, hidden, &mut rng);
        (m, None)
    } else {
        let m = TaggerModel::new_external(scheme, mode, hidden, &mut rng);
        let mut store = ExternalEmbeddingStore::new();
        store.insert(framed.key.clone(), HiddenMatrix(normal_matrix(&mut rng, framed.len(), hidden, 1.0)));
        (m, Some(store))
    };
    randomize(&mut rng, &mut model.params, 0.5);
    GradCase {
        model,
        instance: Instance { framed, gold },
        store,
    }
}

/// A tagger whose emissions copy the external features: `W = I`, zero bias
/// and zero transitions, so decoding follows whatever the store says.
pub fn copy_model(scheme: TagScheme, mode: Mode) -> TaggerModel {
    let l = scheme.len();
    let params = Params {
        emission_weight: Array2::eye(l),
        ..Params::zeros(l, l, None)
    };
    TaggerModel::from_params(scheme, mode, None, params).unwrap()
}

/// Stores features that make `copy_model` emit `labels` at the raw positions.
pub fn force(store: &mut ExternalEmbeddingStore, framed: &easqe::encoder::FramedInput, scheme: TagScheme, labels: &[&str]) {
    let mut h = Array2::zeros((framed.len(), scheme.len()));
    for (i, label) in labels.iter().enumerate() {
        let y = scheme.parse_label(label).unwrap();
        h[[framed.raw_map[i], y]] = 10.0;
    }
    store.insert(framed.key.clone(), HiddenMatrix(h));
}
