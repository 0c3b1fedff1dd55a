mod common;

use ndarray::{array, Array2};
use proptest::prelude::*;

use common::*;
use easqe::tagger::chain::{self, TransitionMask};
use easqe::tagger::{Mode, Params, TaggerModel};
use easqe::tags::TagScheme;

fn crf_with(scheme: TagScheme, trans: Array2<f64>, mode: Mode) -> TaggerModel {
    let l = scheme.len();
    let params = Params {
        transitions: trans,
        ..Params::zeros(l, 1, None)
    };
    TaggerModel::from_params(scheme, mode, None, params).unwrap()
}

#[test]
fn per_position_argmax_without_conflicts() {
    // an unconstrained two-label chain picks the column maximum at each step
    let mask = TransitionMask::unconstrained(2);
    let path = chain::viterbi(array![[1.0, 0.0], [0.0, 1.0]].view(), Array2::zeros((4, 4)).view(), &mask);
    assert_eq!(path, [0, 1]);
}

#[test]
fn zero_scores_decode_to_outside() {
    for scheme in TagScheme::ALL {
        let m = crf_with(scheme, Array2::zeros((scheme.len() + 2, scheme.len() + 2)), Mode::Crf);
        let tags = m.viterbi(Array2::zeros((5, scheme.len())).view());
        assert_eq!(tags.labels, [0; 5]);
    }
}

#[test]
fn inside_cannot_open_a_span() {
    let scheme = TagScheme::Stage1Span;
    let m = crf_with(scheme, Array2::zeros((5, 5)), Mode::Crf);
    // I dominates everywhere but may not start the sequence
    let tags = m.viterbi(array![[0.0, 1.0, 5.0], [0.0, 1.0, 5.0]].view());
    assert_eq!(tags.to_strings(), ["B", "I"]);
}

#[test]
fn marginals_are_distributions() {
    let scheme = TagScheme::Stage2Easqe;
    let mut r = rng(8);
    let l = scheme.len();
    let scores = normal_matrix(&mut r, 5, l, 1.5);
    let trans = normal_matrix(&mut r, l + 2, l + 2, 1.0);
    let mask = TransitionMask::bio(scheme);
    let m = chain::marginals(scores.view(), trans.view(), &mask);
    for row in m.unary.rows() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
    // pairwise marginals include START and STOP edges: n + 1 transitions
    assert!((m.transitions.sum() - 6.0).abs() < 1e-10);
    assert!((m.log_partition - oracle_log_partition(&scores, &trans, scheme)).abs() < 1e-10);
}

#[test]
fn tied_scores_follow_the_lower_index_rule() {
    // every valid path of length 2 scores 0, so the rule alone decides
    let scheme = TagScheme::Stage1Easqe;
    let m = crf_with(scheme, Array2::zeros((9, 9)), Mode::Crf);
    let scores = Array2::zeros((2, 7));
    assert_eq!(m.viterbi(scores.view()).labels, [0, 0]);
    // make O unattractive at the end: the best final label is the lowest non-O
    let scores = array![[0.0; 7], [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]];
    let tags = m.viterbi(scores.view());
    assert_eq!(tags.labels, oracle_viterbi(&scores, &Array2::zeros((9, 9)), scheme));
    assert_eq!(tags.to_strings(), ["O", "B-POS"]);
}

fn scheme_strategy() -> impl Strategy<Value = TagScheme> {
    prop::sample::select(TagScheme::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn partition_and_viterbi_match_enumeration(scheme in scheme_strategy(), n in 1usize..=5, seed in any::<u64>(), integer in any::<bool>()) {
        let mut r = rng(seed);
        let l = scheme.len();
        let (scores, trans) = if integer {
            (integer_matrix(&mut r, n, l, 2), integer_matrix(&mut r, l + 2, l + 2, 1))
        } else {
            (normal_matrix(&mut r, n, l, 2.0), normal_matrix(&mut r, l + 2, l + 2, 1.0))
        };
        let m = crf_with(scheme, trans.clone(), Mode::Crf);
        let z = m.log_partition(scores.view()).unwrap();
        prop_assert!((z - oracle_log_partition(&scores, &trans, scheme)).abs() < 1e-9);
        prop_assert_eq!(m.viterbi(scores.view()).labels, oracle_viterbi(&scores, &trans, scheme));
    }

    #[test]
    fn softmax_decoding_ignores_transitions(scheme in scheme_strategy(), n in 1usize..=5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let l = scheme.len();
        let scores = normal_matrix(&mut r, n, l, 2.0);
        let trans = normal_matrix(&mut r, l + 2, l + 2, 3.0);
        let m = crf_with(scheme, trans, Mode::Softmax);
        prop_assert_eq!(m.viterbi(scores.view()).labels, oracle_viterbi(&scores, &Array2::zeros((l + 2, l + 2)), scheme));
    }

    #[test]
    fn likelihood_is_a_log_probability(scheme in scheme_strategy(), n in 1usize..=5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let l = scheme.len();
        let scores = normal_matrix(&mut r, n, l, 2.0);
        let trans = normal_matrix(&mut r, l + 2, l + 2, 1.0);
        let gold = random_valid_tags(&mut r, scheme, n);
        for mode in [Mode::Crf, Mode::Softmax] {
            let ll = crf_with(scheme, trans.clone(), mode).log_likelihood(scores.view(), &gold).unwrap();
            prop_assert!(ll <= 1e-12 && ll.is_finite());
        }
    }
}
