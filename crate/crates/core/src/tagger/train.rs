//! Mini-batch training with Adam and dev-set early stopping.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Instance, Mode, Params, TaggerModel};
use crate::data::Dataset;
use crate::encoder::{frame_stage1, frame_stage2, ExternalEmbeddingStore, Vocab, MAX_FRAMED_LEN};
use crate::error::{Error, Result};
use crate::eval::Counts;
use crate::parallel::{self, Parallelism};
use crate::pipeline::TaskKind;
use crate::tags::{spans_from_tags, tags_from_spans, TagScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Stage {
    pub fn scheme(&self, task: TaskKind) -> TagScheme {
        let (one, two) = task.schemes();
        match self {
            Stage::One => one,
            Stage::Two => two,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Defaults to 1e-2 with the built-in encoder and 2e-5 with external embeddings.
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Framed-length cap; instances above it are skipped.
    pub max_seq_len: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Crf,
            learning_rate: None,
            batch_size: 4,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            max_seq_len: MAX_FRAMED_LEN,
            embed_dim: 32,
            hidden_dim: 64,
            parallelism: Parallelism::default(),
        }
    }
}

impl TrainConfig {
    pub const BUILTIN_LR: f64 = 1e-2;
    pub const EXTERNAL_LR: f64 = 2e-5;

    pub fn learning_rate_for(&self, builtin: bool) -> f64 {
        self.learning_rate.unwrap_or(if builtin {
            Self::BUILTIN_LR
        } else {
            Self::EXTERNAL_LR
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_owned()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max epochs must be positive");
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("encoder dimensions must be positive");
        }
        if self.max_seq_len < 3 || self.max_seq_len > MAX_FRAMED_LEN {
            return bad("max sequence length must lie in 3..=64");
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad("learning rate must be positive");
            }
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Params,
    second: Params,
    steps: i32,
}

impl Adam {
    pub fn new(params: &Params, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first: params.zeros_like(),
            second: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params, grad: &Params) {
        self.steps += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.steps);
        let c2 = 1.0 - b2.powi(self.steps);
        let lr = self.learning_rate;
        let eps = self.epsilon;
        let g = grad.tensors();
        let m = self.first.tensors_mut();
        let v = self.second.tensors_mut();
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(g).zip(m).zip(v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Framed instances with gold labels under `scheme`.
///
/// Stage one yields one instance per sentence; stage two one per distinct gold
/// opinion. Instances that exceed `max_len` or whose gold spans cannot be
/// encoded (overlaps) are skipped with a warning; the skip count is returned.
pub fn build_instances(dataset: &Dataset, scheme: TagScheme, max_len: usize) -> Result<(Vec<Instance>, usize)> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for r in &dataset.records {
        let s = &r.sentence;
        let mut jobs = Vec::new();
        if scheme.is_stage1() {
            jobs.push((frame_stage1(s), r.gold.stage1_spans(scheme)?));
        } else {
            for trigger in r.gold.triggers() {
                jobs.push((frame_stage2(s, trigger), r.gold.stage2_spans(trigger, scheme)?));
            }
        }
        for (framed, spans) in jobs {
            let framed = match framed {
                Ok(f) if f.len() <= max_len => f,
                Ok(f) => {
                    log::warn!("{}: framed length {} > {max_len}, skipped", s.id, f.len());
                    skipped += 1;
                    continue;
                }
                Err(Error::TooLong { len, .. }) => {
                    log::warn!("{}: framed length {len} too long, skipped", s.id);
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            match tags_from_spans(&spans, s.len(), scheme) {
                Ok(gold) => out.push(Instance { framed, gold }),
                Err(Error::Overlap { first, second }) => {
                    log::warn!("{}: overlapping gold spans {first:?} / {second:?}, skipped", s.id);
                    skipped += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok((out, skipped))
}

/// Span-level micro F1 of Viterbi output against gold labels.
pub fn span_f1(
    model: &TaggerModel,
    instances: &[Instance],
    store: Option<&ExternalEmbeddingStore>,
    par: Parallelism,
) -> Result<f64> {
    let per = parallel::map(par, instances, |inst| -> Result<Counts> {
        let pred = model.decode(&inst.framed, store)?;
        let gold: BTreeSet<_> = spans_from_tags(&inst.gold)?.into_iter().collect();
        let pred: BTreeSet<_> = spans_from_tags(&pred)?.into_iter().collect();
        Ok(Counts::of(&gold, &pred))
    });
    let mut total = Counts::default();
    for c in per {
        total.add(c?);
    }
    Ok(total.f1())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-dev checkpoint.
    pub model: TaggerModel,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub history: Vec<EpochRecord>,
}

pub fn vocab_from(dataset: &Dataset) -> Vocab {
    Vocab::from_tokens(dataset.sentences().flat_map(|s| s.tokens.iter().map(String::as_str)))
}

/// Trains one stage. With `store` the tagger reads precomputed embeddings,
/// otherwise it trains the built-in encoder on a vocabulary from `train_set`.
pub fn train(
    train_set: &Dataset,
    dev_set: &Dataset,
    stage: Stage,
    task: TaskKind,
    config: &TrainConfig,
    store: Option<&ExternalEmbeddingStore>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for d in [train_set, dev_set] {
        if d.task != task {
            return Err(Error::SchemeMismatch(format!(
                "dataset {} holds {} annotations, training for {task}",
                d.name, d.task
            )));
        }
    }
    let scheme = stage.scheme(task);
    let (train_inst, _) = build_instances(train_set, scheme, config.max_seq_len)?;
    let (dev_inst, _) = build_instances(dev_set, scheme, config.max_seq_len)?;
    if train_inst.is_empty() || dev_inst.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = match store {
        None => TaggerModel::new_builtin(
            scheme,
            config.mode,
            vocab_from(train_set),
            config.embed_dim,
            config.hidden_dim,
            &mut rng,
        ),
        Some(store) => {
            let d = store
                .hidden_dim()
                .ok_or_else(|| Error::MissingEmbedding("embedding store is empty".into()))?;
            TaggerModel::new_external(scheme, config.mode, d, &mut rng)
        }
    };
    let mut adam = Adam::new(&model.params, config.learning_rate_for(store.is_none()));
    let par = config.parallelism;

    let mut order: Vec<usize> = (0..train_inst.len()).collect();
    let mut best: Option<(usize, f64, TaggerModel)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Instance> = chunk.iter().map(|&i| train_inst[i].clone()).collect();
            let (loss, grad) = model.gradients(&batch, store, par)?;
            adam.step(&mut model.params, &grad);
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train_inst.len() as f64;
        let dev_f1 = span_f1(&model, &dev_inst, store, par)?;
        log::info!("{scheme} epoch {epoch}: loss {train_loss:.4}, dev span F1 {dev_f1:.4}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            dev_f1,
        });
        if best.as_ref().is_none_or(|(_, f, _)| dev_f1 > *f) {
            best = Some((epoch, dev_f1, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }
    }
    let (best_epoch, best_dev_f1, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_dev_f1,
        history,
    })
}

/// Trains the stage-one and stage-two taggers for `task` on the same data.
pub fn train_pipeline(
    train_set: &Dataset,
    dev_set: &Dataset,
    task: TaskKind,
    config: &TrainConfig,
    store: Option<&ExternalEmbeddingStore>,
) -> Result<(TrainOutcome, TrainOutcome)> {
    let one = train(train_set, dev_set, Stage::One, task, config, store)?;
    let two = train(train_set, dev_set, Stage::Two, task, config, store)?;
    Ok((one, two))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Annotations, Record};
    use crate::model::{Polarity, Quadruple, Sentence, Span};

    fn tiny(task_quads: Vec<(&str, &str, Vec<Quadruple>)>) -> Dataset {
        Dataset::new(
            "tiny",
            TaskKind::Easqe,
            task_quads
                .into_iter()
                .map(|(id, text, q)| Record {
                    sentence: Sentence::from_text(id, text).unwrap(),
                    gold: Annotations::Quads(q),
                })
                .collect(),
        )
        .unwrap()
    }

    fn corpus() -> Dataset {
        let p = Polarity::Positive;
        let n = Polarity::Negative;
        tiny(vec![
            ("a", "the sushi was great", vec![Quadruple::new(Some(Span::new(1, 2)), None, Span::new(3, 4), p)]),
            ("b", "the service was slow", vec![Quadruple::new(None, Some(Span::new(1, 2)), Span::new(3, 4), n)]),
            ("c", "we went there", vec![]),
        ])
    }

    #[test]
    fn instance_counts_per_stage() {
        let d = corpus();
        let (s1, skipped) = build_instances(&d, TagScheme::Stage1Easqe, 64).unwrap();
        assert_eq!((s1.len(), skipped), (3, 0));
        let (s2, _) = build_instances(&d, TagScheme::Stage2Easqe, 64).unwrap();
        assert_eq!(s2.len(), 2);
        assert_eq!(s2[1].gold.to_strings(), ["O", "B-ASP", "O", "O"]);
        let (short, skipped) = build_instances(&d, TagScheme::Stage1Easqe, 5).unwrap();
        assert_eq!((short.len(), skipped), (1, 2));
    }

    #[test]
    fn patience_zero_runs_one_epoch() {
        let d = corpus();
        let cfg = TrainConfig {
            patience: 0,
            embed_dim: 4,
            hidden_dim: 4,
            ..TrainConfig::default()
        };
        let out = train(&d, &d, Stage::One, TaskKind::Easqe, &cfg, None).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn empty_and_mismatched_datasets() {
        let d = corpus();
        let empty = Dataset::new("e", TaskKind::Easqe, vec![]).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(&empty, &d, Stage::One, TaskKind::Easqe, &cfg, None),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            train(&d, &d, Stage::One, TaskKind::Aste, &cfg, None),
            Err(Error::SchemeMismatch(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: Some(-1.0),
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(TrainConfig::default().learning_rate_for(false), 2e-5);
        assert_eq!(TrainConfig::default().learning_rate_for(true), 1e-2);
    }

    #[test]
    fn adam_moves_against_the_gradient() {
        let mut p = Params::zeros(3, 2, None);
        let mut g = p.zeros_like();
        g.emission_bias[1] = 2.0;
        g.emission_bias[2] = -0.5;
        let mut adam = Adam::new(&p, 0.1);
        adam.step(&mut p, &g);
        // first bias-corrected step has magnitude lr
        assert!((p.emission_bias[1] + 0.1).abs() < 1e-6);
        assert!((p.emission_bias[2] - 0.1).abs() < 1e-6);
        assert_eq!(p.emission_bias[0], 0.0);
    }
}
