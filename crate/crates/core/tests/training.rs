mod common;

use common::*;
use easqe::data::Dataset;
use easqe::synthetic::splits;
use easqe::tagger::train::{build_instances, span_f1, vocab_from, Adam};
use easqe::tagger::{train, Mode, Stage, TaggerModel, TrainConfig};
use easqe::{Error, Parallelism, TaskKind};

fn small() -> (Dataset, Dataset) {
    let s = splits(TaskKind::Easqe, 5, (40, 10, 0)).unwrap();
    (s.train, s.dev)
}

#[test]
fn loss_decreases_under_small_full_batch_steps() {
    let (train_set, _) = small();
    let scheme = Stage::One.scheme(TaskKind::Easqe);
    let (inst, _) = build_instances(&train_set, scheme, 64).unwrap();
    let mut m = TaggerModel::new_builtin(scheme, Mode::Crf, vocab_from(&train_set), 8, 8, &mut rng(0));
    let mut adam = Adam::new(&m.params, 1e-4);
    let mut losses = Vec::new();
    for _ in 0..10 {
        let (loss, g) = m.gradients(&inst, None, Parallelism::default()).unwrap();
        losses.push(loss);
        adam.step(&mut m.params, &g);
    }
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn patience_zero_stops_after_one_epoch() {
    let (train_set, dev) = small();
    let cfg = TrainConfig {
        patience: 0,
        ..TrainConfig::default()
    };
    let out = train(&train_set, &dev, Stage::Two, TaskKind::Easqe, &cfg, None).unwrap();
    assert_eq!(out.history.len(), 1);
}

#[test]
fn early_stopping_keeps_the_best_checkpoint() {
    let (train_set, dev) = small();
    let cfg = TrainConfig {
        max_epochs: 12,
        patience: 2,
        ..TrainConfig::default()
    };
    let out = train(&train_set, &dev, Stage::One, TaskKind::Easqe, &cfg, None).unwrap();
    let best = out.history.iter().map(|e| e.dev_f1).fold(f64::MIN, f64::max);
    assert_eq!(out.best_dev_f1, best);
    assert_eq!(out.history[out.best_epoch - 1].dev_f1, best);
    // the returned model is the checkpoint, not the last epoch
    let (dev_inst, _) = build_instances(&dev, out.model.scheme, 64).unwrap();
    assert_eq!(span_f1(&out.model, &dev_inst, None, Parallelism::default()).unwrap(), best);
    let later = out.history.len() - out.best_epoch;
    assert!(later <= 2);
}

#[test]
fn stage_one_reaches_high_dev_f1() {
    let s = splits(TaskKind::Easqe, 9, (200, 50, 0)).unwrap();
    let cfg = TrainConfig {
        max_epochs: 30,
        ..TrainConfig::default()
    };
    let out = train(&s.train, &s.dev, Stage::One, TaskKind::Easqe, &cfg, None).unwrap();
    assert!(out.best_dev_f1 >= 0.95, "{}", out.best_dev_f1);
}

#[test]
fn external_backend_trains_from_the_store() {
    let (train_set, dev) = small();
    let scheme = Stage::One.scheme(TaskKind::Easqe);
    let mut store = easqe::encoder::ExternalEmbeddingStore::new();
    let mut r = rng(3);
    for d in [&train_set, &dev] {
        for s in d.sentences() {
            let f = easqe::encoder::frame_stage1(s).unwrap();
            store.insert(f.key.clone(), easqe::encoder::HiddenMatrix(normal_matrix(&mut r, f.len(), 6, 1.0)));
        }
    }
    let cfg = TrainConfig {
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let out = train(&train_set, &dev, Stage::One, TaskKind::Easqe, &cfg, Some(&store)).unwrap();
    assert!(!out.model.uses_builtin_encoder());
    assert_eq!((out.model.hidden_dim(), out.model.scheme), (6, scheme));

    let empty = easqe::encoder::ExternalEmbeddingStore::new();
    assert!(matches!(
        train(&train_set, &dev, Stage::One, TaskKind::Easqe, &cfg, Some(&empty)),
        Err(Error::MissingEmbedding(_))
    ));
}

#[test]
fn same_seed_same_bytes() {
    let (train_set, dev) = small();
    let cfg = TrainConfig {
        max_epochs: 3,
        seed: 11,
        ..TrainConfig::default()
    };
    let a = train(&train_set, &dev, Stage::Two, TaskKind::Easqe, &cfg, None).unwrap();
    let b = train(&train_set, &dev, Stage::Two, TaskKind::Easqe, &cfg, None).unwrap();
    assert_eq!(a.model.to_json(), b.model.to_json());
    let other = TrainConfig { seed: 12, ..cfg };
    let c = train(&train_set, &dev, Stage::Two, TaskKind::Easqe, &other, None).unwrap();
    assert_ne!(a.model.to_json(), c.model.to_json());
}
