//! Optional JSON configuration files. Every key is optional; explicit flags
//! take precedence over file values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use easqe::{Mode, TaskKind, TrainConfig};

use crate::Failure;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub task: Option<TaskKind>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub max_seq_len: Option<usize>,
    pub embed_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Training hyperparameters given on the command line.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct TrainFlags {
    /// Random seed [default: $EASQE_SEED, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Likelihood: crf or softmax
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Adam step size [default: 1e-2 built-in encoder, 2e-5 external embeddings]
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Epochs without dev improvement before stopping
    #[arg(long)]
    pub patience: Option<usize>,
    /// Framed length cap (at most 64)
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    /// Built-in encoder embedding width
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Built-in encoder hidden width
    #[arg(long)]
    pub hidden_dim: Option<usize>,
}

pub fn parse_mode(s: &str) -> Result<Mode, String> {
    match s.to_ascii_lowercase().as_str() {
        "crf" => Ok(Mode::Crf),
        "softmax" => Ok(Mode::Softmax),
        _ => Err(format!("unknown mode {s:?} (expected crf or softmax)")),
    }
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var("EASQE_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Usage(format!("EASQE_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Flags, then the config file, then `EASQE_SEED`, then built-in defaults.
pub fn seed(flag: Option<u64>, file: &FileConfig) -> Result<u64, Failure> {
    Ok(match flag.or(file.seed) {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    })
}

pub fn train_config(flags: &TrainFlags, file: &FileConfig) -> Result<TrainConfig, Failure> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        mode: flags.mode.or(file.mode).unwrap_or(d.mode),
        learning_rate: flags.learning_rate.or(file.learning_rate),
        batch_size: flags.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
        max_epochs: flags.max_epochs.or(file.max_epochs).unwrap_or(d.max_epochs),
        patience: flags.patience.or(file.patience).unwrap_or(d.patience),
        seed: seed(flags.seed, file)?,
        max_seq_len: flags.max_seq_len.or(file.max_seq_len).unwrap_or(d.max_seq_len),
        embed_dim: flags.embed_dim.or(file.embed_dim).unwrap_or(d.embed_dim),
        hidden_dim: flags.hidden_dim.or(file.hidden_dim).unwrap_or(d.hidden_dim),
        parallelism: d.parallelism,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

/// First of flag and file value, or a usage error naming the flag.
pub fn required<T: Clone>(flag: &Option<T>, file: &Option<T>, name: &str) -> Result<T, Failure> {
    flag.clone()
        .or_else(|| file.clone())
        .ok_or_else(|| Failure::Usage(format!("missing --{name} (flag or config key)")))
}
