//! Emission scoring, sequence likelihoods, analytic gradients and constrained
//! decoding for one tagging stage.
//!
//! Emissions are `W h_i + b` over every framed position. Likelihood and
//! decoding only look at the raw sentence rows; sentinel and trigger-copy rows
//! are dropped before the chain computations, which is equivalent to forcing
//! them to `O` and excluding them from the loss.

pub mod chain;
pub mod gradcheck;
pub mod io;
pub mod params;
pub mod train;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use chain::TransitionMask;
pub use gradcheck::{gradient_check, GradCheckReport};
pub use params::Params;
pub use train::{train, train_pipeline, Adam, EpochRecord, Stage, TrainConfig, TrainOutcome};

use crate::encoder::{self, builtin, EncoderBackend, EncoderParams, ExternalEmbeddingStore, FramedInput, HiddenMatrix, Vocab};
use crate::error::{Error, Result};
use crate::parallel::{self, Parallelism};
use crate::tags::{TagScheme, TagSequence};

/// Likelihood family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    /// Independent per-token softmax.
    Softmax,
    /// Globally normalized linear chain.
    #[default]
    Crf,
}

/// Raw-position emission scores, `n × labels`.
pub type ScoreMatrix = Array2<f64>;

/// A trainable tagger for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    pub scheme: TagScheme,
    pub mode: Mode,
    pub mask: TransitionMask,
    /// Present iff the built-in encoder is used.
    pub vocab: Option<Vocab>,
    pub params: Params,
}

/// A framed input paired with its gold labels over raw positions.
#[derive(Debug, Clone)]
pub struct Instance {
    pub framed: FramedInput,
    pub gold: TagSequence,
}

impl TaggerModel {
    pub fn from_params(scheme: TagScheme, mode: Mode, vocab: Option<Vocab>, params: Params) -> Result<Self> {
        if params.labels() != scheme.len() {
            return Err(Error::DimensionMismatch {
                expected: scheme.len(),
                found: params.labels(),
            });
        }
        if vocab.is_some() != params.encoder.is_some() {
            return Err(Error::Model("vocabulary and encoder parameters must come together".into()));
        }
        if let (Some(v), Some(enc)) = (&vocab, &params.encoder) {
            if enc.vocab_size() != v.len() {
                return Err(Error::DimensionMismatch {
                    expected: v.len(),
                    found: enc.vocab_size(),
                });
            }
            if enc.hidden_dim() != params.hidden_dim() {
                return Err(Error::DimensionMismatch {
                    expected: params.hidden_dim(),
                    found: enc.hidden_dim(),
                });
            }
        }
        Ok(TaggerModel {
            scheme,
            mode,
            mask: TransitionMask::bio(scheme),
            vocab,
            params,
        })
    }

    pub fn new_builtin<R: Rng>(
        scheme: TagScheme,
        mode: Mode,
        vocab: Vocab,
        embed_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let enc = EncoderParams::random(vocab.len(), embed_dim, hidden_dim, rng);
        let params = Params::random(scheme.len(), hidden_dim, Some(enc), rng);
        Self::from_params(scheme, mode, Some(vocab), params).expect("consistent shapes")
    }

    pub fn new_external<R: Rng>(scheme: TagScheme, mode: Mode, hidden_dim: usize, rng: &mut R) -> Self {
        let params = Params::random(scheme.len(), hidden_dim, None, rng);
        Self::from_params(scheme, mode, None, params).expect("consistent shapes")
    }

    pub fn hidden_dim(&self) -> usize {
        self.params.hidden_dim()
    }

    pub fn uses_builtin_encoder(&self) -> bool {
        self.vocab.is_some()
    }

    pub fn backend<'a>(&'a self, store: Option<&'a ExternalEmbeddingStore>) -> Result<EncoderBackend<'a>> {
        match (&self.vocab, &self.params.encoder) {
            (Some(vocab), Some(params)) => Ok(EncoderBackend::BuiltIn { vocab, params }),
            _ => store
                .map(EncoderBackend::External)
                .ok_or_else(|| Error::MissingEmbedding("no embedding store supplied".into())),
        }
    }

    pub fn hidden(&self, framed: &FramedInput, store: Option<&ExternalEmbeddingStore>) -> Result<HiddenMatrix> {
        encoder::encode(framed, self.backend(store)?)
    }

    /// `W h_i + b` for every framed row.
    pub fn emission_scores(&self, h: &HiddenMatrix) -> Result<ScoreMatrix> {
        if h.cols() != self.hidden_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.hidden_dim(),
                found: h.cols(),
            });
        }
        Ok(h.0.dot(&self.params.emission_weight.t()) + &self.params.emission_bias)
    }

    /// Emission rows of the raw sentence tokens only.
    pub fn raw_scores(&self, framed: &FramedInput, store: Option<&ExternalEmbeddingStore>) -> Result<ScoreMatrix> {
        let h = self.hidden(framed, store)?;
        let all = self.emission_scores(&h)?;
        Ok(all.select(Axis(0), &framed.raw_map))
    }

    fn check_scores(&self, scores: &ArrayView2<'_, f64>) -> Result<()> {
        if scores.ncols() != self.scheme.len() {
            return Err(Error::DimensionMismatch {
                expected: self.scheme.len(),
                found: scores.ncols(),
            });
        }
        Ok(())
    }

    pub fn log_partition(&self, scores: ArrayView2<'_, f64>) -> Result<f64> {
        if self.mode != Mode::Crf {
            return Err(Error::Mode);
        }
        self.check_scores(&scores)?;
        if scores.nrows() == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        Ok(chain::log_partition(scores, self.params.transitions.view(), &self.mask))
    }

    /// Path score of `labels` under the CRF (transitions included).
    pub fn path_score(&self, scores: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
        chain::path_score(scores, self.params.transitions.view(), &self.mask, labels)
    }

    fn check_gold(&self, scores: &ArrayView2<'_, f64>, gold: &TagSequence) -> Result<()> {
        self.check_scores(scores)?;
        if gold.scheme != self.scheme {
            return Err(Error::SchemeMismatch(format!(
                "gold labels use {}, model uses {}",
                gold.scheme, self.scheme
            )));
        }
        if gold.len() != scores.nrows() || gold.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: scores.nrows(),
                found: gold.len(),
            });
        }
        gold.validate_bio()
    }

    pub fn log_likelihood(&self, scores: ArrayView2<'_, f64>, gold: &TagSequence) -> Result<f64> {
        self.check_gold(&scores, gold)?;
        Ok(match self.mode {
            Mode::Softmax => scores
                .rows()
                .into_iter()
                .zip(&gold.labels)
                .map(|(row, &y)| row[y] - chain::log_sum_exp(row.iter().copied()))
                .sum(),
            Mode::Crf => {
                self.path_score(scores, &gold.labels)
                    - chain::log_partition(scores, self.params.transitions.view(), &self.mask)
            }
        })
    }

    /// Best BIO-valid label path over raw positions.
    pub fn viterbi(&self, scores: ArrayView2<'_, f64>) -> TagSequence {
        let labels = match self.mode {
            Mode::Crf => chain::viterbi(scores, self.params.transitions.view(), &self.mask),
            Mode::Softmax => {
                let zero = Array2::zeros(self.params.transitions.dim());
                chain::viterbi(scores, zero.view(), &self.mask)
            }
        };
        TagSequence::new(self.scheme, labels)
    }

    pub fn decode(&self, framed: &FramedInput, store: Option<&ExternalEmbeddingStore>) -> Result<TagSequence> {
        let scores = self.raw_scores(framed, store)?;
        Ok(self.viterbi(scores.view()))
    }

    /// Negative log-likelihood of one instance.
    pub fn instance_loss(&self, inst: &Instance, store: Option<&ExternalEmbeddingStore>) -> Result<f64> {
        let scores = self.raw_scores(&inst.framed, store)?;
        Ok(-self.log_likelihood(scores.view(), &inst.gold)?)
    }

    /// Negative log-likelihood of one instance and its exact gradient.
    pub fn instance_gradient(
        &self,
        inst: &Instance,
        store: Option<&ExternalEmbeddingStore>,
    ) -> Result<(f64, Params)> {
        let framed = &inst.framed;
        let h = self.hidden(framed, store)?;
        let all = self.emission_scores(&h)?;
        let scores = all.select(Axis(0), &framed.raw_map);
        self.check_gold(&scores.view(), &inst.gold)?;

        let mut grad = self.params.zeros_like();
        let labels = self.scheme.len();
        // d nll / d raw emission score
        let (nll, mut d_scores) = match self.mode {
            Mode::Softmax => {
                let mut d = Array2::zeros(scores.dim());
                let mut nll = 0.0;
                for (i, row) in scores.rows().into_iter().enumerate() {
                    let lse = chain::log_sum_exp(row.iter().copied());
                    for y in 0..labels {
                        d[[i, y]] = (row[y] - lse).exp();
                    }
                    nll -= row[inst.gold.labels[i]] - lse;
                }
                (nll, d)
            }
            Mode::Crf => {
                let m = chain::marginals(scores.view(), self.params.transitions.view(), &self.mask);
                let nll = m.log_partition - self.path_score(scores.view(), &inst.gold.labels);
                grad.transitions = m.transitions;
                let mut prev = self.mask.start();
                for &y in &inst.gold.labels {
                    grad.transitions[[prev, y]] -= 1.0;
                    prev = y;
                }
                grad.transitions[[prev, self.mask.stop()]] -= 1.0;
                (nll, m.unary)
            }
        };
        for (i, &y) in inst.gold.labels.iter().enumerate() {
            d_scores[[i, y]] -= 1.0;
        }

        let mut d_all = Array2::zeros(all.dim());
        for (i, &pos) in framed.raw_map.iter().enumerate() {
            d_all.row_mut(pos).assign(&d_scores.row(i));
        }
        grad.emission_weight = d_all.t().dot(&h.0);
        grad.emission_bias = d_all.sum_axis(Axis(0));
        if let (Some(vocab), Some(enc), Some(enc_grad)) =
            (&self.vocab, &self.params.encoder, grad.encoder.as_mut())
        {
            let d_hidden = d_all.dot(&self.params.emission_weight);
            builtin::backward(vocab, enc, framed, d_hidden.view(), enc_grad);
        }
        Ok((nll, grad))
    }

    /// Mean negative log-likelihood over `batch` and its gradient.
    ///
    /// Per-instance gradients are combined by a pairwise tree reduction in
    /// instance order, so the result does not depend on `par`.
    pub fn gradients(
        &self,
        batch: &[Instance],
        store: Option<&ExternalEmbeddingStore>,
        par: Parallelism,
    ) -> Result<(f64, Params)> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let per = parallel::map(par, batch, |inst| self.instance_gradient(inst, store))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let (loss, mut grad) = parallel::tree_reduce(per, |(la, mut ga), (lb, gb)| {
            ga.add_assign(&gb);
            (la + lb, ga)
        })
        .expect("non-empty batch");
        let n = batch.len() as f64;
        grad.scale(1.0 / n);
        Ok((loss / n, grad))
    }

    /// Mean negative log-likelihood over `batch`.
    pub fn batch_loss(
        &self,
        batch: &[Instance],
        store: Option<&ExternalEmbeddingStore>,
        par: Parallelism,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let losses = parallel::map(par, batch, |inst| self.instance_loss(inst, store))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let total = parallel::tree_reduce(losses, |a, b| a + b).unwrap_or_default();
        Ok(total / batch.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{frame_stage1, frame_stage2};
    use crate::model::{Sentence, Span};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn external_model(scheme: TagScheme, mode: Mode, d: usize) -> TaggerModel {
        TaggerModel::from_params(scheme, mode, None, Params::zeros(scheme.len(), d, None)).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_scores() {
        let m = external_model(TagScheme::Stage1Easqe, Mode::Crf, 3);
        let h = HiddenMatrix(Array2::from_elem((4, 3), 1.5));
        let s = m.emission_scores(&h).unwrap();
        assert_eq!(s.dim(), (4, 7));
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn emission_hand_arithmetic() {
        let mut params = Params::zeros(3, 1, None);
        params.emission_weight = array![[1.0], [2.0], [0.0]];
        let m = TaggerModel::from_params(TagScheme::Stage1Span, Mode::Crf, None, params).unwrap();
        let s = m.emission_scores(&HiddenMatrix(array![[3.0]])).unwrap();
        assert_eq!(s.row(0).to_vec(), vec![3.0, 6.0, 0.0]);
    }

    #[test]
    fn emission_matches_naive_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = TaggerModel::new_external(TagScheme::Stage2Easqe, Mode::Crf, 6, &mut rng);
        let mut m = m;
        m.params.emission_bias = array![0.1, -0.2, 0.3, 0.0, 1.0];
        let h = HiddenMatrix(Array2::from_shape_fn((4, 6), |(i, j)| (i as f64 - j as f64).sin()));
        let s = m.emission_scores(&h).unwrap();
        for i in 0..4 {
            for y in 0..5 {
                let mut acc = m.params.emission_bias[y];
                for k in 0..6 {
                    acc += m.params.emission_weight[[y, k]] * h.0[[i, k]];
                }
                assert!((acc - s[[i, y]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn emission_dimension_mismatch() {
        let m = external_model(TagScheme::Stage1Easqe, Mode::Crf, 3);
        assert!(matches!(
            m.emission_scores(&HiddenMatrix(Array2::zeros((2, 4)))),
            Err(Error::DimensionMismatch { expected: 3, found: 4 })
        ));
    }

    #[test]
    fn log_partition_requires_crf() {
        let m = external_model(TagScheme::Stage1Span, Mode::Softmax, 2);
        assert!(matches!(m.log_partition(Array2::zeros((2, 3)).view()), Err(Error::Mode)));
    }

    #[test]
    fn softmax_single_token_likelihood() {
        let m = external_model(TagScheme::Stage1Span, Mode::Softmax, 2);
        let scores = Array2::zeros((1, 3));
        let gold = TagSequence::new(TagScheme::Stage1Span, vec![0]);
        let ll = m.log_likelihood(scores.view(), &gold).unwrap();
        assert!((ll - (1.0f64 / 3.0).ln()).abs() < 1e-15);

        // two-label reading of the same rule: forbid the third label entirely
        let two = array![[0.0, 0.0, f64::NEG_INFINITY]];
        let ll = m.log_likelihood(two.view(), &gold).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn crf_unique_allowed_path_has_probability_one() {
        let mut m = external_model(TagScheme::Stage1Span, Mode::Crf, 2);
        // only O is reachable: forbid START->B and O->B
        m.mask.forbid(m.mask.start(), 1);
        m.mask.forbid(0, 1);
        let scores = Array2::from_shape_fn((3, 3), |(i, j)| (i + j) as f64);
        let gold = TagSequence::new(TagScheme::Stage1Span, vec![0, 0, 0]);
        let ll = m.log_likelihood(scores.view(), &gold).unwrap();
        assert!(ll.abs() < 1e-12);
    }

    #[test]
    fn likelihood_rejects_invalid_gold() {
        let m = external_model(TagScheme::Stage1Span, Mode::Crf, 2);
        let gold = TagSequence::new(TagScheme::Stage1Span, vec![2, 0]);
        assert!(matches!(
            m.log_likelihood(Array2::zeros((2, 3)).view(), &gold),
            Err(Error::InvalidBio { .. })
        ));
    }

    #[test]
    fn softmax_mode_has_no_transition_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = Sentence::from_text("x", "the sushi was good").unwrap();
        let vocab = Vocab::from_tokens(s.tokens.iter().map(String::as_str));
        let m = TaggerModel::new_builtin(TagScheme::Stage1Easqe, Mode::Softmax, vocab, 3, 4, &mut rng);
        let inst = Instance {
            framed: frame_stage1(&s).unwrap(),
            gold: TagSequence::from_strs(TagScheme::Stage1Easqe, &["O", "O", "O", "B-POS"]).unwrap(),
        };
        let (_, g) = m.instance_gradient(&inst, None).unwrap();
        assert!(g.transitions.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_model_bias_gradient_is_uniform_minus_gold() {
        let s = Sentence::from_text("x", "price was reasonable").unwrap();
        let vocab = Vocab::from_tokens(s.tokens.iter().map(String::as_str));
        let enc = EncoderParams::zeros(vocab.len(), 2, 3);
        let params = Params::zeros(5, 3, Some(enc));
        let m = TaggerModel::from_params(TagScheme::Stage2Easqe, Mode::Softmax, Some(vocab), params).unwrap();
        let inst = Instance {
            framed: frame_stage2(&s, Span::new(2, 3)).unwrap(),
            gold: TagSequence::from_strs(TagScheme::Stage2Easqe, &["B-ASP", "O", "O"]).unwrap(),
        };
        let (nll, g) = m.instance_gradient(&inst, None).unwrap();
        assert!((nll - 3.0 * 5f64.ln()).abs() < 1e-12);
        // three raw positions, uniform 1/5 each; gold counts O:2, B-ASP:1
        let expected = [3.0 / 5.0 - 2.0, 0.6, 0.6, 0.6 - 1.0, 0.6];
        for (got, want) in g.emission_bias.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn batch_gradient_is_mean_of_singletons() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sents = [
            ("a", "the sushi was great", vec!["O", "O", "O", "B-POS"]),
            ("b", "service was slow", vec!["O", "O", "B-NEG"]),
            ("c", "could have been better", vec!["B-NEG", "I-NEG", "I-NEG", "I-NEG"]),
        ];
        let vocab = Vocab::from_tokens(sents.iter().flat_map(|(_, t, _)| t.split(' ')));
        let m = TaggerModel::new_builtin(TagScheme::Stage1Easqe, Mode::Crf, vocab, 3, 4, &mut rng);
        let batch: Vec<Instance> = sents
            .iter()
            .map(|(id, text, tags)| Instance {
                framed: frame_stage1(&Sentence::from_text(*id, text).unwrap()).unwrap(),
                gold: TagSequence::from_strs(TagScheme::Stage1Easqe, tags).unwrap(),
            })
            .collect();
        let (_, full) = m.gradients(&batch, None, Parallelism::Parallel).unwrap();
        let (_, seq) = m.gradients(&batch, None, Parallelism::Sequential).unwrap();
        assert_eq!(full, seq);
        let mut mean = m.params.zeros_like();
        for inst in &batch {
            let (_, g) = m.gradients(std::slice::from_ref(inst), None, Parallelism::Sequential).unwrap();
            mean.add_assign(&g);
        }
        mean.scale(1.0 / 3.0);
        assert!(full.max_abs_diff(&mean) < 1e-12);
    }
}
