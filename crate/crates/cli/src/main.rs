//! `easqe` command-line tool.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::TrainFlags;
use easqe::{Stage, TaskKind};

#[derive(Debug)]
pub enum Failure {
    /// Bad flags, configuration or input combinations.
    Usage(String),
    Run(easqe::Error),
    /// The command ran but its check did not hold.
    Check(String),
}

impl From<easqe::Error> for Failure {
    fn from(e: easqe::Error) -> Self {
        match e {
            easqe::Error::Config(m) => Failure::Usage(m),
            e => Failure::Run(e),
        }
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Run(_) | Failure::Check(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Check(m) => f.write_str(m),
            Failure::Run(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "easqe", version, about = "Two-stage entity-aspect-opinion-sentiment quadruple extraction")]
pub struct Cli {
    /// JSON file with default option values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run on a single thread
    #[arg(long, global = true)]
    pub sequential: bool,
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse().map_err(|e: easqe::Error| e.to_string())
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    match s {
        "1" => Ok(Stage::One),
        "2" => Ok(Stage::Two),
        _ => Err(format!("stage must be 1 or 2, got {s:?}")),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one stage tagger and write it as JSON
    Train {
        #[arg(long, value_parser = parse_task)]
        task: Option<TaskKind>,
        #[arg(long, value_parser = parse_stage)]
        stage: Stage,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Precomputed embedding store; without it the built-in encoder is trained
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-epoch history as JSON
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Extract tuples from a dataset with two trained taggers
    Predict {
        #[arg(long, value_parser = parse_task)]
        task: Option<TaskKind>,
        #[arg(long)]
        model1: PathBuf,
        #[arg(long)]
        model2: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Predictions as JSONL
        #[arg(long)]
        out: PathBuf,
    },
    /// Score trained taggers, or train and score over several seeds
    Eval {
        #[arg(long, value_parser = parse_task)]
        task: Option<TaskKind>,
        #[arg(long, requires = "model2")]
        model1: Option<PathBuf>,
        #[arg(long, requires = "model1")]
        model2: Option<PathBuf>,
        /// Dataset scored against the given models
        #[arg(long, conflicts_with = "runs")]
        data: Option<PathBuf>,
        /// Train from scratch with seeds seed, seed+1, ... and report the mean
        #[arg(long, conflicts_with_all = ["model1", "model2"])]
        runs: Option<usize>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Report as JSON
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Project a dataset onto a coarser task
    Convert {
        #[arg(long, value_parser = parse_task)]
        from: TaskKind,
        #[arg(long, value_parser = parse_task)]
        to: TaskKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sentence count, quadruple count and entity-aspect co-occurrence
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Percentage of annotations in one dataset that another lacks
    Diff {
        #[arg(long)]
        new: PathBuf,
        #[arg(long)]
        old: PathBuf,
        /// Task of the new dataset
        #[arg(long, value_parser = parse_task, default_value = "easqe")]
        new_task: TaskKind,
        /// Task of the old dataset [default: aste with --legacy, else the new task]
        #[arg(long, value_parser = parse_task)]
        old_task: Option<TaskKind>,
        /// The old dataset uses the `sentence####[([t], [o], 'POL')]` format
        #[arg(long)]
        legacy: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic and numerical gradients on random small taggers
    Gradcheck {
        #[arg(long)]
        seed: Option<u64>,
        /// Check only this likelihood
        #[arg(long, value_parser = config::parse_mode)]
        mode: Option<easqe::Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_env("EASQE_LOG").init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
