// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sanet_core::uncertainty::{DEFAULT_DECAY, DEFAULT_WINDOW};

/// Few-shot vehicle segmentation for oblique UAV video.
///
/// Exit codes: 0 success, 2 usage or configuration error, 3 I/O or
/// runtime error.
#[derive(Debug, Parser)]
#[command(name = "sanet", version)]
pub struct Cli {
    /// Base seed. Overrides any seed in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Run directory for every artifact [default: runs/<command>-<timestamp>]
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// TOML or JSON config file (scene config for `synth`, training config
    /// for `train`, model config for the others).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic oblique-view dataset of image/mask PNG pairs.
    Synth(SynthArgs),
    /// Train on a few-shot support set drawn from a dataset.
    Train(TrainArgs),
    /// Score a checkpoint on labelled sequences and write the set report.
    Eval(EvalArgs),
    /// Predict masks and entropy maps for (possibly unlabelled) sequences.
    Infer(PredictArgs),
    /// Render predicted vehicle pixels in red over the input frames.
    Overlay(PredictArgs),
    /// Time single-pass inference.
    Bench(BenchArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Infer(_) => "infer",
            Command::Overlay(_) => "overlay",
            Command::Bench(_) => "bench",
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Write this many sets into Set1..SetN subdirectories, each with
    /// `num_scenes` scenes from its own derived seed.
    #[arg(long, value_name = "N")]
    pub sets: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset: a synthetic directory, a directory of synthetic sets, a
    /// UAVid-style root or a single sequence directory.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,

    /// JSON palette mapping label colours to classes (UAVid labels only).
    #[arg(long, value_name = "FILE")]
    pub palette: Option<PathBuf>,

    /// Largest centre crop, as HEIGHTxWIDTH; frames are always cropped to
    /// multiples of 32.
    #[arg(long, value_name = "HxW", value_parser = parse_dims)]
    pub tile: Option<(usize, usize)>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct UncertaintyArgs {
    /// Checkpoint archive written by `train`.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,

    /// Monte Carlo dropout passes per frame.
    #[arg(long, default_value_t = 8)]
    pub mc_samples: usize,

    /// Trailing temporal window length in frames.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,

    /// Per-frame weight decay inside the window, in (0, 1].
    #[arg(long, default_value_t = DEFAULT_DECAY)]
    pub decay: f64,

    /// Dropout rate for sampling [default: the checkpoint's rate]
    #[arg(long, value_name = "RATE")]
    pub dropout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub uncertainty: UncertaintyArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub uncertainty: UncertaintyArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Checkpoint to time [default: a fresh model from --config]
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,

    #[arg(long, default_value_t = 256)]
    pub height: usize,

    #[arg(long, default_value_t = 256)]
    pub width: usize,

    /// Timed passes including the discarded warm-up (at least 3).
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HEIGHTxWIDTH, got `{s}`"))?;
    let h = h.trim().parse().map_err(|e| format!("bad height `{h}`: {e}"))?;
    let w = w.trim().parse().map_err(|e| format!("bad width `{w}`: {e}"))?;
    Ok((h, w))
}
