//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::{Instance, Mode, Params, TaggerModel};
use crate::encoder::{frame_stage1, frame_stage2, ExternalEmbeddingStore, Vocab};
use crate::error::Result;
use crate::model::{Sentence, Span};
use crate::tags::{Label, TagScheme, TagSequence};

/// Gradients smaller than this are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Tensor name and flat offset of the worst coordinate.
    pub worst_tensor: String,
    pub worst_index: usize,
    pub coordinates: usize,
    /// Relative error of every coordinate, in flat parameter order.
    #[serde(skip)]
    pub errors: Vec<f64>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Numerical gradient of the instance NLL at every parameter coordinate.
pub fn numeric_gradient(
    model: &TaggerModel,
    inst: &Instance,
    store: Option<&ExternalEmbeddingStore>,
    epsilon: f64,
) -> Result<Params> {
    let mut probe = model.clone();
    let mut out = model.params.zeros_like();
    for k in 0..model.params.num_params() {
        let orig = model.params.get_flat(k);
        *probe.params.flat_mut(k) = orig + epsilon;
        let up = probe.instance_loss(inst, store)?;
        *probe.params.flat_mut(k) = orig - epsilon;
        let down = probe.instance_loss(inst, store)?;
        *probe.params.flat_mut(k) = orig;
        *out.flat_mut(k) = (up - down) / (2.0 * epsilon);
    }
    Ok(out)
}

/// Compares a supplied gradient against central differences.
pub fn compare_gradient(
    model: &TaggerModel,
    inst: &Instance,
    store: Option<&ExternalEmbeddingStore>,
    analytic: &Params,
    epsilon: f64,
) -> Result<GradCheckReport> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let numeric = numeric_gradient(model, inst, store, epsilon)?;
    let names = model.params.tensor_names();
    let mut errors = Vec::with_capacity(model.params.num_params());
    let mut worst = (0.0f64, 0usize, 0usize);
    for (t, (a, n)) in analytic.tensors().into_iter().zip(numeric.tensors()).enumerate() {
        for (i, (&av, &nv)) in a.iter().zip(n).enumerate() {
            let e = relative_error(av, nv);
            if e > worst.0 {
                worst = (e, t, i);
            }
            errors.push(e);
        }
    }
    Ok(GradCheckReport {
        max_relative_error: worst.0,
        worst_tensor: names[worst.1].to_owned(),
        worst_index: worst.2,
        coordinates: errors.len(),
        errors,
    })
}

/// Checks the model's own analytic gradient on one instance.
pub fn gradient_check(
    model: &TaggerModel,
    inst: &Instance,
    store: Option<&ExternalEmbeddingStore>,
    epsilon: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = model.instance_gradient(inst, store)?;
    compare_gradient(model, inst, store, &analytic, epsilon)
}

const PROBE_WORDS: &[&str] = &["the", "sushi", "price", "was", "reasonable", "staff", "slow"];

/// A small built-in-encoder tagger with every parameter drawn from N(0, 0.25)
/// and one random instance with BIO-valid gold labels.
pub fn random_case(scheme: TagScheme, mode: Mode, seed: u64) -> (TaggerModel, Instance) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=6);
    let tokens = (0..n)
        .map(|_| PROBE_WORDS[rng.random_range(0..PROBE_WORDS.len())].to_owned())
        .collect();
    let s = Sentence::new(format!("probe-{seed}"), tokens).expect("non-empty");
    let framed = if scheme.is_stage1() {
        frame_stage1(&s)
    } else {
        let start = rng.random_range(0..n);
        let end = rng.random_range(start + 1..=n);
        frame_stage2(&s, Span::new(start, end))
    }
    .expect("short sentence");
    let mut labels = Vec::with_capacity(n);
    let mut prev: Option<Label> = None;
    for _ in 0..n {
        let mut label = scheme.label(rng.random_range(0..scheme.len()));
        if !label.may_follow(prev) {
            label = Label::Begin(label.category().expect("inside labels carry a category"));
        }
        labels.push(scheme.index_of(label).expect("scheme label"));
        prev = Some(label);
    }
    let vocab = Vocab::from_tokens(PROBE_WORDS.iter().copied());
    let mut model = TaggerModel::new_builtin(scheme, mode, vocab, 3, 4, &mut rng);
    let dist = Normal::new(0.0, 0.5).unwrap();
    model.params.for_each_mut(|v| *v = dist.sample(&mut rng));
    let inst = Instance {
        framed,
        gold: TagSequence::new(scheme, labels),
    };
    (model, inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_cases_pass_for_every_scheme() {
        for scheme in TagScheme::ALL {
            for mode in [Mode::Softmax, Mode::Crf] {
                let (m, inst) = random_case(scheme, mode, 7);
                assert!(inst.gold.is_bio_valid());
                let rep = gradient_check(&m, &inst, None, 1e-5).unwrap();
                assert!(rep.max_relative_error < 1e-4, "{scheme} {mode:?}: {}", rep.max_relative_error);
            }
        }
    }

    #[test]
    fn a_wrong_gradient_is_flagged() {
        let (m, inst) = random_case(TagScheme::Stage1Span, Mode::Crf, 1);
        let mut g = m.params.zeros_like();
        g.emission_bias[0] = 3.0;
        let rep = compare_gradient(&m, &inst, None, &g, 1e-5).unwrap();
        assert!(rep.max_relative_error > 0.1);
        assert_eq!(rep.coordinates, m.params.num_params());
    }
}
