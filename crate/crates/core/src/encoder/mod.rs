//! Per-token hidden features for framed sentences.

pub mod builtin;
pub mod external;
pub mod frame;

use ndarray::Array2;

pub use builtin::{EncoderParams, Vocab};
pub use external::ExternalEmbeddingStore;
pub use frame::{frame_stage1, frame_stage2, FramedInput, Piece, MAX_FRAMED_LEN};

use crate::error::{Error, Result};

/// One row of hidden features per framed position.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenMatrix(pub Array2<f64>);

impl HiddenMatrix {
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }
}

/// Where hidden features come from.
#[derive(Debug, Clone, Copy)]
pub enum EncoderBackend<'a> {
    BuiltIn {
        vocab: &'a Vocab,
        params: &'a EncoderParams,
    },
    External(&'a ExternalEmbeddingStore),
}

pub fn encode(framed: &FramedInput, backend: EncoderBackend<'_>) -> Result<HiddenMatrix> {
    match backend {
        EncoderBackend::BuiltIn { vocab, params } => {
            if params.vocab_size() != vocab.len() {
                return Err(Error::DimensionMismatch {
                    expected: vocab.len(),
                    found: params.vocab_size(),
                });
            }
            Ok(builtin::forward(vocab, params, framed))
        }
        EncoderBackend::External(store) => {
            let m = store
                .get(&framed.key)
                .ok_or_else(|| Error::MissingEmbedding(framed.key.clone()))?;
            if m.rows() != framed.len() {
                return Err(Error::DimensionMismatch {
                    expected: framed.len(),
                    found: m.rows(),
                });
            }
            Ok(m.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Sentence, Span};
    use ndarray::s;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab_for(s: &Sentence) -> Vocab {
        Vocab::from_tokens(s.tokens.iter().map(String::as_str))
    }

    #[test]
    fn zero_params_give_zero_matrix() {
        let s = Sentence::from_text("z", "the sushi is good").unwrap();
        let vocab = vocab_for(&s);
        let params = EncoderParams::zeros(vocab.len(), 4, 6);
        let f = frame_stage2(&s, Span::new(3, 4)).unwrap();
        let h = encode(&f, EncoderBackend::BuiltIn { vocab: &vocab, params: &params }).unwrap();
        assert_eq!(h.0.dim(), (f.len(), 6));
        assert!(h.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn external_lookup_returns_stored_matrix() {
        let s = Sentence::from_text("s1", "the sushi is good").unwrap();
        let m = Array2::from_shape_fn((6, 8), |(i, j)| (i as f64) - (j as f64) * 0.25);
        let mut store = ExternalEmbeddingStore::new();
        store.insert("s1/s1", HiddenMatrix(m.clone()));
        let f = frame_stage1(&s).unwrap();
        let h = encode(&f, EncoderBackend::External(&store)).unwrap();
        assert_eq!(h.0, m);
    }

    #[test]
    fn external_missing_key_and_wrong_rows() {
        let s = Sentence::from_text("s1", "the sushi is good").unwrap();
        let mut store = ExternalEmbeddingStore::new();
        let f = frame_stage1(&s).unwrap();
        assert!(matches!(
            encode(&f, EncoderBackend::External(&store)),
            Err(Error::MissingEmbedding(k)) if k == "s1/s1"
        ));
        store.insert("s1/s1", HiddenMatrix(Array2::zeros((5, 8))));
        assert!(matches!(
            encode(&f, EncoderBackend::External(&store)),
            Err(Error::DimensionMismatch { expected: 6, found: 5 })
        ));
    }

    #[test]
    fn hidden_rows_follow_the_window_formula() {
        let s = Sentence::from_text("w", "a b c").unwrap();
        let vocab = vocab_for(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = EncoderParams::random(vocab.len(), 3, 5, &mut rng);
        params.projection_bias.mapv_inplace(|_| 0.5);
        let f = frame_stage2(&s, Span::new(1, 3)).unwrap();
        let h = builtin::forward(&vocab, &params, &f).0;

        // independent recomputation of each row with explicit loops
        let emb = |id: usize| params.token_embeddings.row(id).to_vec();
        let ids: Vec<usize> = f.pieces.iter().map(|(p, _)| vocab.piece_id(p)).collect();
        let pool: Vec<f64> = (0..3)
            .map(|k| (emb(ids[5])[k] + emb(ids[6])[k]) / 2.0)
            .collect();
        for i in 0..f.len() {
            let prev = if i == 0 { builtin::PAD } else { ids[i - 1] };
            let next = if i + 1 == f.len() { builtin::PAD } else { ids[i + 1] };
            let seg = usize::from(f.pieces[i].1);
            let mut x = Vec::new();
            x.extend(emb(prev));
            x.extend(emb(ids[i]));
            x.extend(emb(next));
            x.extend(params.segment_embeddings.row(seg).to_vec());
            x.extend(pool.iter().copied());
            for r in 0..5 {
                let mut acc = 0.5;
                for (c, xv) in x.iter().enumerate() {
                    acc += params.projection[[r, c]] * xv;
                }
                assert!((acc - h[[i, r]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn different_triggers_shift_every_row() {
        let s = Sentence::from_text("t", "the price was reasonable and fair").unwrap();
        let vocab = vocab_for(&s);
        let de = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = EncoderParams::random(vocab.len(), de, de, &mut rng);
        // identity on the trigger block, zero elsewhere
        params.projection.fill(0.0);
        params
            .projection
            .slice_mut(s![.., 4 * de..5 * de])
            .assign(&Array2::eye(de));

        let fa = frame_stage2(&s, Span::new(3, 4)).unwrap();
        let fb = frame_stage2(&s, Span::new(5, 6)).unwrap();
        let ha = builtin::forward(&vocab, &params, &fa).0;
        let hb = builtin::forward(&vocab, &params, &fb).0;
        let pool_a = params.token_embeddings.row(vocab.id("reasonable")).to_owned();
        let pool_b = params.token_embeddings.row(vocab.id("fair")).to_owned();
        assert_ne!(pool_a, pool_b);
        for i in 0..fa.len() {
            let diff = &ha.row(i) - &hb.row(i);
            let expected = &pool_a - &pool_b;
            assert!(diff.iter().any(|v| v.abs() > 1e-9));
            for (d, e) in diff.iter().zip(expected.iter()) {
                assert!((d - e).abs() < 1e-12);
            }
        }
    }
}
