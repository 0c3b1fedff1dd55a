use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use easqe::data::legacy::read_legacy_aste;
use easqe::data::{convert_aste_to_ope, convert_easqe_to_aste, dataset_diff, dataset_stats, project, write_dataset};
use easqe::encoder::ExternalEmbeddingStore;
use easqe::eval::{Granularity, PrfRow};
use easqe::tagger::gradcheck::{gradient_check, random_case, RELATIVE_FLOOR};
use easqe::tagger::train;
use easqe::{
    evaluate, predict_batch, read_dataset, Annotations, Dataset, EvalReport, Mode, Parallelism, Record,
    TagScheme, TaggerModel, TaskKind,
};

use crate::config::{self, required, FileConfig};
use crate::{Cli, Command, Failure};

const GRADCHECK_EPSILON: f64 = 1e-5;

pub fn run(cli: Cli) -> Result<(), Failure> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let par = if cli.sequential {
        Parallelism::Sequential
    } else {
        Parallelism::Parallel
    };
    match cli.command {
        Command::Train {
            task,
            stage,
            train: train_path,
            dev,
            embeddings,
            out,
            history,
            flags,
        } => {
            let task = required(&task, &file.task, "task")?;
            let mut cfg = config::train_config(&flags, &file)?;
            cfg.parallelism = par;
            let train_set = read_dataset(required(&train_path, &file.train, "train")?, task)?;
            let dev_set = read_dataset(required(&dev, &file.dev, "dev")?, task)?;
            let store = load_store(embeddings.as_ref().or(file.embeddings.as_ref()))?;
            let outcome = train(&train_set, &dev_set, stage, task, &cfg, store.as_ref())?;
            outcome.model.save(&out)?;
            if let Some(path) = history {
                write_json(&path, &outcome.history)?;
            }
            println!(
                "best epoch {} of {}, dev span F1 {:.4}",
                outcome.best_epoch,
                outcome.history.len(),
                outcome.best_dev_f1
            );
            Ok(())
        }
        Command::Predict {
            task,
            model1,
            model2,
            data,
            embeddings,
            out,
        } => {
            let task = required(&task, &file.task, "task")?;
            let m1 = TaggerModel::load(&model1)?;
            let m2 = TaggerModel::load(&model2)?;
            let store = load_store(embeddings.as_ref().or(file.embeddings.as_ref()))?;
            let input = read_dataset(&data, task)?;
            let sentences: Vec<_> = input.sentences().cloned().collect();
            let results = predict_batch(&m1, &m2, &sentences, task, store.as_ref(), par)?;
            let mut records = Vec::with_capacity(sentences.len());
            for (sentence, r) in sentences.into_iter().zip(results) {
                let gold = match r {
                    Ok(a) => a,
                    Err(easqe::Error::TooLong { len, max }) => {
                        log::warn!("sentence {:?}: framed length {len} > {max}, predicting nothing", sentence.id);
                        Annotations::empty(task)
                    }
                    Err(e) => return Err(e.into()),
                };
                records.push(Record { sentence, gold });
            }
            let predicted = Dataset::new(format!("{}-predicted", input.name), task, records)?;
            write_dataset(&predicted, &out)?;
            println!(
                "{} tuples over {} sentences",
                predicted.annotation_count(),
                predicted.len()
            );
            Ok(())
        }
        Command::Eval {
            task,
            model1,
            model2,
            data,
            runs,
            train: train_path,
            dev,
            test,
            embeddings,
            out,
            flags,
        } => {
            let task = required(&task, &file.task, "task")?;
            let store = load_store(embeddings.as_ref().or(file.embeddings.as_ref()))?;
            let (reports, seeds) = match (model1, model2) {
                (Some(p1), Some(p2)) => {
                    let data = required(&data, &file.test, "data")?;
                    let m1 = TaggerModel::load(&p1)?;
                    let m2 = TaggerModel::load(&p2)?;
                    let d = read_dataset(&data, task)?;
                    (vec![evaluate(&m1, &m2, &d, task, store.as_ref(), par)?], vec![None])
                }
                _ => {
                    let runs = runs.or(file.runs).unwrap_or(1);
                    if runs == 0 {
                        return Err(Failure::Usage("--runs must be at least 1".into()));
                    }
                    let mut cfg = config::train_config(&flags, &file)?;
                    cfg.parallelism = par;
                    let train_set = read_dataset(required(&train_path, &file.train, "train")?, task)?;
                    let dev_set = read_dataset(required(&dev, &file.dev, "dev")?, task)?;
                    let test_path = required(&test, &file.test, "test")?;
                    let test_set = read_dataset(&test_path, task)?;
                    let base = cfg.seed;
                    let mut reports = Vec::with_capacity(runs);
                    let mut seeds = Vec::with_capacity(runs);
                    for i in 0..runs as u64 {
                        cfg.seed = base + i;
                        let (one, two) = easqe::train_pipeline(&train_set, &dev_set, task, &cfg, store.as_ref())?;
                        let report = evaluate(&one.model, &two.model, &test_set, task, store.as_ref(), par)?;
                        eprintln!("seed {}: F1 {:.4}", cfg.seed, report.headline_f1());
                        reports.push(report);
                        seeds.push(Some(cfg.seed));
                    }
                    (reports, seeds)
                }
            };
            let summary = EvalSummary::new(task, &reports, &seeds);
            if reports.len() > 1 {
                for (seed, r) in seeds.iter().zip(&reports) {
                    println!("seed {}", seed.unwrap_or_default());
                    print!("{}", r.to_table());
                }
                println!("mean over {} runs", reports.len());
            }
            print!("{}", summary.mean.to_table());
            if let Some(path) = out {
                write_json(&path, &summary)?;
            }
            Ok(())
        }
        Command::Convert { from, to, data, out } => {
            let d = read_dataset(&data, from)?;
            let converted = match (from, to) {
                (TaskKind::Easqe, TaskKind::Aste) => convert_easqe_to_aste(&d)?,
                (TaskKind::Aste, TaskKind::Ope) => convert_aste_to_ope(&d)?,
                (TaskKind::Easqe, TaskKind::Ope) => project(&d, TaskKind::Ope)?,
                _ => {
                    return Err(Failure::Usage(format!("cannot convert {from} annotations to {to}")));
                }
            };
            write_dataset(&converted, &out)?;
            println!(
                "{} {} records from {} sentences",
                converted.annotation_count(),
                to,
                converted.len()
            );
            Ok(())
        }
        Command::Stats { data, out } => {
            let d = read_dataset(&data, TaskKind::Easqe)?;
            let s = dataset_stats(&d)?;
            println!("sentences: {}", s.sentence_count);
            println!("quads: {}", s.quad_count);
            println!("co-occurrence: {:.2}%", s.co_occurrence_pct);
            if let Some(path) = out {
                write_json(&path, &s)?;
            }
            Ok(())
        }
        Command::Diff {
            new,
            old,
            new_task,
            old_task,
            legacy,
            out,
        } => {
            let new_set = read_dataset(&new, new_task)?;
            let old_set = if legacy {
                if old_task.is_some_and(|t| t != TaskKind::Aste) {
                    return Err(Failure::Usage("legacy files hold ASTE triples".into()));
                }
                read_legacy_aste(&old)?
            } else {
                read_dataset(&old, old_task.unwrap_or(new_task))?
            };
            let pct = dataset_diff(&new_set, &old_set)?;
            println!("{pct:.2}");
            if let Some(path) = out {
                write_json(&path, &serde_json::json!({ "missing_pct": pct }))?;
            }
            Ok(())
        }
        Command::Gradcheck { seed, mode, out } => {
            let seed = config::seed(seed, &file)?;
            let modes = match mode {
                Some(m) => vec![m],
                None => vec![Mode::Crf, Mode::Softmax],
            };
            let mut checks = Vec::new();
            for scheme in TagScheme::ALL {
                for &m in &modes {
                    let (model, inst) = random_case(scheme, m, seed);
                    let r = gradient_check(&model, &inst, None, GRADCHECK_EPSILON)?;
                    eprintln!(
                        "{scheme} {m:?}: {} coordinates, max relative error {:.3e} at {}[{}]",
                        r.coordinates, r.max_relative_error, r.worst_tensor, r.worst_index
                    );
                    checks.push(GradcheckRow {
                        scheme,
                        mode: m,
                        report: r,
                    });
                }
            }
            let max = checks.iter().map(|c| c.report.max_relative_error).fold(0.0, f64::max);
            println!("{max:.3e}");
            if let Some(path) = out {
                write_json(&path, &GradcheckSummary { seed, max_relative_error: max, checks })?;
            }
            if max >= RELATIVE_FLOOR {
                return Err(Failure::Check(format!(
                    "max relative error {max:.3e} is not below {RELATIVE_FLOOR:e}"
                )));
            }
            Ok(())
        }
    }
}

fn load_store(path: Option<&PathBuf>) -> Result<Option<ExternalEmbeddingStore>, Failure> {
    Ok(match path {
        Some(p) => Some(ExternalEmbeddingStore::load(p)?),
        None => None,
    })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(easqe::Error::from)?;
    let mut f = fs::File::create(path).map_err(easqe::Error::from)?;
    f.write_all(text.as_bytes()).map_err(easqe::Error::from)?;
    f.write_all(b"\n").map_err(easqe::Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct RunRows {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    rows: BTreeMap<Granularity, PrfRow>,
}

#[derive(Serialize)]
struct EvalSummary {
    task: TaskKind,
    runs: Vec<RunRows>,
    #[serde(skip)]
    mean: EvalReport,
    #[serde(rename = "mean")]
    mean_rows: BTreeMap<Granularity, PrfRow>,
}

impl EvalSummary {
    /// Counts and scores averaged row by row across runs.
    fn new(task: TaskKind, reports: &[EvalReport], seeds: &[Option<u64>]) -> Self {
        let n = reports.len() as f64;
        let mut mean_rows = BTreeMap::new();
        for g in reports[0].rows.keys() {
            let rows: Vec<&PrfRow> = reports.iter().filter_map(|r| r.get(*g)).collect();
            let avg = |f: fn(&PrfRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            let avg_count = |f: fn(&PrfRow) -> usize| (rows.iter().map(|r| f(r)).sum::<usize>() as f64 / n).round() as usize;
            mean_rows.insert(
                *g,
                PrfRow {
                    matched: avg_count(|r| r.matched),
                    predicted: avg_count(|r| r.predicted),
                    gold: avg_count(|r| r.gold),
                    precision: avg(|r| r.precision),
                    recall: avg(|r| r.recall),
                    f1: avg(|r| r.f1),
                },
            );
        }
        EvalSummary {
            task,
            runs: reports
                .iter()
                .zip(seeds)
                .map(|(r, s)| RunRows {
                    seed: *s,
                    rows: r.rows.clone(),
                })
                .collect(),
            mean: EvalReport {
                task,
                rows: mean_rows.clone(),
            },
            mean_rows,
        }
    }
}

#[derive(Serialize)]
struct GradcheckRow {
    scheme: TagScheme,
    mode: Mode,
    #[serde(flatten)]
    report: easqe::tagger::GradCheckReport,
}

#[derive(Serialize)]
struct GradcheckSummary {
    seed: u64,
    max_relative_error: f64,
    checks: Vec<GradcheckRow>,
}
