//! Command-line driver for the shot boundary detection search pipeline.

mod commands;
mod config;
mod run;

use std::io::{ErrorKind, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Result};
use clap::{Parser, Subcommand};

use commands::{EvalSource, Outcome};
use config::RunConfig;
use run::RunDir;

#[derive(Parser, Debug)]
#[command(name = "autoshot")]
#[command(about = "Architecture search, training and evaluation for shot boundary detection")]
#[command(version)]
struct Cli {
    /// `key = value` configuration file; unset keys keep their defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run directory holding data, checkpoints and logs
    #[arg(long, global = true)]
    run: Option<PathBuf>,

    /// Concurrent candidate evaluations during search
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic train/val/test/hard videos into RUN/data
    Synth,
    /// Train the weight-sharing supernet on RUN/data/train
    TrainSupernet,
    /// Bayesian-optimisation search over architectures using the supernet
    Search,
    /// Train one architecture from scratch
    Retrain {
        /// Architecture code or preset name; defaults to the best in RUN/search.json
        #[arg(long)]
        arch: Option<String>,
        /// Model checkpoint to distill from
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Entropy-based weight grafting between trained models
    Graft {
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<PathBuf>,
    },
    /// Score predictions or a model against annotations
    Eval {
        /// Prediction JSON file
        #[arg(long, conflicts_with_all = ["model", "video", "split"])]
        pred: Option<PathBuf>,
        /// Model checkpoint
        #[arg(long)]
        model: Option<PathBuf>,
        /// Frame container to run the model on
        #[arg(long, requires = "model", conflicts_with = "split")]
        video: Option<PathBuf>,
        /// Shot annotation file
        #[arg(long, conflicts_with = "split")]
        ann: Option<PathBuf>,
        /// Evaluate on a split of RUN/data
        #[arg(long, requires = "model")]
        split: Option<String>,
    },
    /// Multiply-accumulate count of an architecture
    Flops {
        /// Architecture code or preset name
        #[arg(long, default_value = "transnet_v2")]
        arch: String,
    },
    /// Render a contact sheet with transition and prediction marks
    Thumbs {
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        ann: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Output PPM image
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::TrainSupernet => "train-supernet",
            Command::Search => "search",
            Command::Retrain { .. } => "retrain",
            Command::Graft { .. } => "graft",
            Command::Eval { .. } => "eval",
            Command::Flops { .. } => "flops",
            Command::Thumbs { .. } => "thumbs",
        }
    }

    fn needs_run(&self) -> bool {
        !matches!(self, Command::Eval { .. } | Command::Flops { .. } | Command::Thumbs { .. })
    }
}

fn execute(cli: Cli) -> Result<Outcome> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.jobs == 0 {
        bail!("--jobs must be positive");
    }
    let run = match &cli.run {
        Some(p) => Some(RunDir::open(p)?),
        None if cli.command.needs_run() => bail!("{} needs --run", cli.command.name()),
        None => None,
    };
    if let Some(run) = &run {
        run.snapshot(cli.command.name(), &cfg)?;
    }
    let need = || run.as_ref().ok_or_else(|| anyhow!("missing --run"));
    match &cli.command {
        Command::Synth => commands::synth(need()?, &cfg),
        Command::TrainSupernet => commands::train_supernet_cmd(need()?, &cfg),
        Command::Search => commands::search_cmd(need()?, &cfg, cli.jobs),
        Command::Retrain { arch, teacher } => commands::retrain_cmd(need()?, &cfg, arch.as_deref(), teacher.as_deref()),
        Command::Graft { models } => commands::graft_cmd(need()?, &cfg, models),
        Command::Eval {
            pred,
            model,
            video,
            ann,
            split,
        } => {
            let source = match (pred, model, video, ann, split) {
                (Some(pred), None, None, Some(ann), None) => EvalSource::Predictions { pred, ann },
                (None, Some(model), Some(video), Some(ann), None) => EvalSource::Video { model, video, ann },
                (None, Some(model), None, None, Some(split)) => EvalSource::Split { model, split },
                _ => bail!("eval takes --pred P --ann A, --model M --video V --ann A, or --model M --split S"),
            };
            commands::eval_cmd(run.as_ref(), &cfg, source)
        }
        Command::Flops { arch } => commands::flops_cmd(&cfg, arch),
        Command::Thumbs { video, ann, pred, out } => {
            commands::thumbs_cmd(&cfg, video, ann.as_deref(), pred.as_deref(), out)
        }
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    match writeln!(out).and_then(|_| out.flush()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let result = execute(Cli::parse()).and_then(|out| {
        eprintln!("{}", out.summary);
        print_json(&out.json)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<serde_json::Error>().is_some_and(|j| j.io_error_kind() == Some(ErrorKind::BrokenPipe)) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
