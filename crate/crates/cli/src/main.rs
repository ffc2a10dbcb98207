//! `poselift`: synthetic data, training, evaluation and ablation experiments
//! for the 2D-to-3D pose lifting network.
//!
//! Exit codes: 0 success, 1 unexpected error (including I/O), 2 invalid
//! configuration or input, 3 numerical failure.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use poselift::dataset::Split;
use poselift::eval::JointAveraging;

use crate::commands::{EvalArgs, StageKind, TrainPaths};
use crate::config::{OptimizerName, Precision, RunConfig};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "poselift", version, about = "2D-to-3D human pose lifting experiments")]
struct Cli {
    /// TOML run configuration; command-line flags override its values.
    #[arg(long, global = true, env = "POSELIFT_CONFIG")]
    config: Option<PathBuf>,

    /// Directory for reports, logs and checkpoints.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    Synth {
        #[arg(long)]
        samples: Option<usize>,
        /// 2D noise standard deviation in pixels.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output path (default: <out-dir>/dataset-<hash>-seed<seed>.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a lifting network and write its checkpoint and log.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Checkpoint path (default: <out-dir>/model-<hash>-seed<seed>.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a checkpoint on one split of a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_split)]
        split: Option<Split>,
        /// Also compare the crop-and-resize path to a naive full-frame rescale
        /// through this 2D stage.
        #[arg(long, value_enum)]
        cr_stage: Option<StageKind>,
    },
    /// Train all eight max-norm / batch-norm / residual combinations.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train one network per (block count, width) cell.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated block counts.
        #[arg(long, value_delimiter = ',')]
        blocks: Option<Vec<usize>>,
        /// Comma-separated widths.
        #[arg(long, value_delimiter = ',')]
        widths: Option<Vec<usize>>,
        #[command(flatten)]
        flags: FlagArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        blocks: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dropout: Option<f64>,
        #[command(flatten)]
        flags: FlagArgs,
    },
    /// Lift a file of 2D poses to 3D with a checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Line-delimited JSON with `id` and `joints_2d` per line (dataset
        /// files work as-is).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct FlagArgs {
    /// Turn max-norm, batch-norm and residual connections all on.
    #[arg(long, conflicts_with = "no_flags")]
    all_flags: bool,
    /// Turn max-norm, batch-norm and residual connections all off.
    #[arg(long)]
    no_flags: bool,
    #[arg(long, value_name = "BOOL")]
    max_norm: Option<bool>,
    #[arg(long, value_name = "BOOL")]
    batch_norm: Option<bool>,
    #[arg(long, value_name = "BOOL")]
    residual: Option<bool>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    maxnorm_c: Option<f64>,
    #[arg(long, value_enum)]
    precision: Option<Precision>,
    #[command(flatten)]
    flags: FlagArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerName>,
    #[arg(long)]
    seed: Option<u64>,
    /// Joints entering the MPJPE average.
    #[arg(long, value_parser = parse_averaging)]
    mpjpe_joints: Option<JointAveraging>,
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: poselift::Error| e.to_string())
}

fn parse_averaging(s: &str) -> Result<JointAveraging, String> {
    match s {
        "all_joints" => Ok(JointAveraging::AllJoints),
        "non_root" => Ok(JointAveraging::NonRoot),
        other => Err(format!("unknown averaging {other:?}, expected all_joints|non_root")),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl FlagArgs {
    fn apply(&self, c: &mut RunConfig) {
        let m = &mut c.model;
        if self.all_flags || self.no_flags {
            let on = self.all_flags;
            (m.max_norm, m.batch_norm, m.residual) = (on, on, on);
        }
        set(&mut m.max_norm, self.max_norm);
        set(&mut m.batch_norm, self.batch_norm);
        set(&mut m.residual, self.residual);
    }
}

impl ModelArgs {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.model.width, self.width);
        set(&mut c.model.blocks, self.blocks);
        set(&mut c.model.dropout, self.dropout);
        set(&mut c.model.maxnorm_c, self.maxnorm_c);
        set(&mut c.model.precision, self.precision);
        self.flags.apply(c);
    }
}

impl TrainArgs {
    fn apply(&self, c: &mut RunConfig) {
        let t = &mut c.train;
        set(&mut t.epochs, self.epochs);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.learning_rate, self.lr);
        set(&mut t.lr_decay, self.lr_decay);
        set(&mut t.optimizer, self.optimizer);
        set(&mut t.seed, self.seed);
        set(&mut c.eval.mpjpe_joints, self.mpjpe_joints);
    }
}

/// Applies the subcommand's flags on top of the file configuration.
fn resolve(command: &Command, mut c: RunConfig) -> RunConfig {
    match command {
        Command::Synth {
            samples, noise, seed, ..
        } => {
            set(&mut c.synth.samples, *samples);
            set(&mut c.synth.noise_sigma, *noise);
            set(&mut c.synth.seed, *seed);
        }
        Command::Train { model, train, .. } | Command::Ablate { model, train, .. } => {
            model.apply(&mut c);
            train.apply(&mut c);
        }
        Command::Sweep {
            blocks,
            widths,
            flags,
            train,
            ..
        } => {
            set(&mut c.eval.sweep_blocks, blocks.clone());
            set(&mut c.eval.sweep_widths, widths.clone());
            flags.apply(&mut c);
            train.apply(&mut c);
        }
        Command::Gradcheck {
            width,
            blocks,
            batch,
            eps,
            seed,
            dropout,
            flags,
        } => {
            let g = &mut c.gradcheck;
            set(&mut g.width, *width);
            set(&mut g.blocks, *blocks);
            set(&mut g.batch, *batch);
            set(&mut g.eps, *eps);
            set(&mut g.seed, *seed);
            set(&mut c.model.dropout, *dropout);
            flags.apply(&mut c);
        }
        Command::Eval { split, .. } => set(&mut c.eval.split, *split),
        Command::Predict { .. } => {}
    }
    c
}

fn run(cli: Cli) -> CliResult<()> {
    let config = resolve(&cli.command, RunConfig::load(cli.config.as_deref())?);
    config.validate()?;
    let hash = config.hash();
    let out_dir = cli.out_dir.as_path();
    let stem = |kind: &str, seed: u64| format!("{kind}-{hash}-seed{seed}");
    match &cli.command {
        Command::Synth { out, .. } => {
            let path = out
                .clone()
                .unwrap_or_else(|| out_dir.join(format!("{}.jsonl", stem("dataset", config.synth.seed))));
            commands::synth(&config, &hash, &path)
        }
        Command::Train { data, checkpoint, .. } => {
            let seed = config.train.seed;
            let paths = TrainPaths {
                checkpoint: checkpoint
                    .clone()
                    .unwrap_or_else(|| out_dir.join(format!("{}.ckpt", stem("model", seed)))),
                log: out_dir.join(format!("{}.csv", stem("trainlog", seed))),
            };
            commands::train_cmd(&config, &hash, data, &paths)
        }
        Command::Eval {
            checkpoint,
            data,
            cr_stage,
            ..
        } => commands::eval_cmd(
            &config,
            &EvalArgs {
                checkpoint,
                data,
                split: config.eval.split,
                cr_stage: *cr_stage,
                out_dir,
            },
        ),
        Command::Ablate { data, .. } => commands::ablate_cmd(&config, &hash, data, out_dir),
        Command::Sweep { data, .. } => commands::sweep_cmd(&config, &hash, data, out_dir),
        Command::Gradcheck { .. } => commands::gradcheck_cmd(&config),
        Command::Predict { checkpoint, input, out } => commands::predict_cmd(checkpoint, input, out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
