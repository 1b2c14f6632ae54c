// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;
use std::path::Path;

use sanet_core::config::load_config;
use sanet_core::data::imageio::{write_entropy_png, write_mask, write_npy, write_rgb};
use sanet_core::data::synthetic::{generate_synthetic, write_synthetic_dir, SyntheticSceneConfig};
use sanet_core::data::sample_episode;
use sanet_core::metrics::{confusion, dice};
use sanet_core::model::ModelConfig;
use sanet_core::seed::derive_seed;
use sanet_core::train::evaluate::predict_sets;
use sanet_core::train::{
    benchmark_inference, evaluate, train, Checkpoint, EvalSet, TrainConfig, UncertaintySettings,
};
use sanet_core::uncertainty::{entropy_map, summarize_uncertainty};
use sanet_core::{init_model, Error, Result};

use crate::args::{BenchArgs, Cli, Command, EvalArgs, PredictArgs, SynthArgs, TrainArgs, UncertaintyArgs};
use crate::manifest::RunDir;
use crate::render::overlay;
use crate::sources::load_sets;

pub const CHECKPOINT_FILE: &str = "checkpoint.sanet";

/// What a command resolved before (or while) running.
pub struct Outcome {
    pub seed: u64,
    /// Lines for stdout.
    pub summary: String,
}

pub fn dispatch(cli: &Cli, run: &mut RunDir, seed: &mut u64) -> Result<Outcome> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Synth(a) => synth(a, config, cli.seed, run, seed),
        Command::Train(a) => train_cmd(a, config, cli.seed, run, seed),
        Command::Eval(a) => eval_cmd(a, config, cli.seed, run, seed),
        Command::Infer(a) => infer_cmd(a, config, cli.seed, run, seed),
        Command::Overlay(a) => overlay_cmd(a, config, cli.seed, run, seed),
        Command::Bench(a) => bench_cmd(a, config, cli.seed, run, seed),
    }
}

fn synth(
    args: &SynthArgs,
    config: Option<&Path>,
    seed_flag: Option<u64>,
    run: &mut RunDir,
    seed: &mut u64,
) -> Result<Outcome> {
    let path = config.ok_or_else(|| Error::Argument("synth needs --config <scene config>".into()))?;
    let mut scene: SyntheticSceneConfig = load_config(path)?;
    if let Some(s) = seed_flag {
        scene.seed = s;
    }
    *seed = scene.seed;
    scene.validate()?;
    if args.sets == Some(0) {
        return Err(Error::Argument("--sets must be at least 1".into()));
    }

    // Generate everything before touching the file system.
    let sets: Vec<(String, SyntheticSceneConfig)> = match args.sets {
        None => vec![(String::new(), scene.clone())],
        Some(n) => (1..=n)
            .map(|i| {
                let cfg = SyntheticSceneConfig { seed: derive_seed(scene.seed, i as u64), ..scene.clone() };
                (format!("Set{i}"), cfg)
            })
            .collect(),
    };
    let generated = sets
        .iter()
        .map(|(name, cfg)| generate_synthetic(cfg).map(|s| (name, s)))
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0;
    for (name, scenes) in &generated {
        let dir = run.file(name.as_str())?;
        total += write_synthetic_dir(&dir, scenes)?.len() / 2;
    }
    Ok(Outcome {
        seed: scene.seed,
        summary: format!("wrote {total} image/mask pairs in {} set(s)", generated.len()),
    })
}

fn train_cmd(
    args: &TrainArgs,
    config: Option<&Path>,
    seed_flag: Option<u64>,
    run: &mut RunDir,
    seed: &mut u64,
) -> Result<Outcome> {
    let mut cfg: TrainConfig = match config {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed_flag {
        cfg.seed = s;
    }
    *seed = cfg.seed;
    cfg.validate()?;
    let sets = load_sets(&args.data)?;
    let pool: Vec<_> = sets
        .into_iter()
        .flat_map(|s| s.frames)
        .filter_map(|f| f.mask.map(|m| (f.image, m)))
        .collect();
    if pool.is_empty() {
        return Err(Error::Argument(format!("{} holds no labelled frames", args.data.data.display())));
    }
    let query = pool.len().saturating_sub(cfg.k_shot);
    let episode = sample_episode(&pool, cfg.k_shot, query, cfg.seed)?;
    let (ckpt, log) = train(&cfg, &episode)?;
    ckpt.save(&run.file(CHECKPOINT_FILE)?)?;
    run.write("train_log.csv", log.to_csv())?;
    let resolved = serde_json::to_string_pretty(&cfg).map_err(|e| Error::Format(e.to_string()))?;
    run.write("train_config.json", resolved + "\n")?;
    let summary = match log.last() {
        Some(r) => format!(
            "epoch {} loss {:.6} support dice {:.4} ({} support, {} query)",
            r.epoch,
            r.loss,
            r.dice,
            episode.support.len(),
            episode.query.len()
        ),
        None => "epochs = 0: wrote the initialization".into(),
    };
    Ok(Outcome { seed: cfg.seed, summary })
}

/// Loads the checkpoint and, if `--config` is given, checks that it
/// describes the same architecture.
fn load_checked(path: &Path, config: Option<&Path>) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path)?;
    if let Some(cfg_path) = config {
        let wanted = model_config_from(cfg_path)?;
        let have = &ckpt.params.config;
        let same = ModelConfig { seed: have.seed, ..wanted.clone() } == *have;
        if !same {
            return Err(Error::Config(format!(
                "checkpoint {} was built with widths {:?} (sa_channels {}, gate {}, dropout {}, {:?} upsampling) \
                 but {} describes widths {:?} (sa_channels {}, gate {}, dropout {}, {:?} upsampling)",
                path.display(),
                have.branch_widths,
                have.sa_channels,
                have.gate_nonlinearity,
                have.dropout_rate,
                have.upsample_mode,
                cfg_path.display(),
                wanted.branch_widths,
                wanted.sa_channels,
                wanted.gate_nonlinearity,
                wanted.dropout_rate,
                wanted.upsample_mode,
            )));
        }
    }
    Ok(ckpt)
}

/// Accepts either a bare model config or a training config with a
/// `model` section.
fn model_config_from(path: &Path) -> Result<ModelConfig> {
    let model: Result<ModelConfig> = load_config(path);
    let config = match model {
        Ok(m) => m,
        Err(first) => match load_config::<TrainConfig>(path) {
            Ok(t) => t.model,
            Err(_) => return Err(first),
        },
    };
    config.validate()?;
    Ok(config)
}

fn settings(args: &UncertaintyArgs, seed: u64) -> UncertaintySettings {
    UncertaintySettings {
        mc_samples: args.mc_samples,
        window: args.window,
        decay: args.decay,
        dropout_rate: args.dropout,
        seed,
    }
}

fn frame_stem(set: &str, index: u64) -> String {
    format!("{set}/{index:06}")
}

fn eval_cmd(
    args: &EvalArgs,
    config: Option<&Path>,
    seed_flag: Option<u64>,
    run: &mut RunDir,
    seed: &mut u64,
) -> Result<Outcome> {
    *seed = seed_flag.unwrap_or(0);
    let ckpt = load_checked(&args.uncertainty.checkpoint, config)?;
    let sets = load_sets(&args.data)?;
    let (report, frames) = evaluate(&ckpt.params, &sets, &settings(&args.uncertainty, *seed))?;

    let mut per_frame = String::from("set,index,dice,entropy,entropy_vehicle_region\n");
    for (f, gt) in frames.iter().zip(sets.iter().flat_map(|s| &s.frames)) {
        let gt = gt.mask.as_ref().expect("evaluate checked labels");
        let d = dice(&confusion(&f.pred, gt)?);
        let _ = writeln!(
            per_frame,
            "{},{},{:.4},{:.4},{:.4}",
            f.set, f.index, d, f.uncertainty.mean_entropy_image, f.uncertainty.mean_entropy_vehicle_region
        );
        let stem = frame_stem(&f.set, f.index);
        write_entropy_png(&run.file(format!("entropy/{stem}.png"))?, &f.uncertainty.entropy_map)?;
        write_npy(&run.file(format!("entropy/{stem}.npy"))?, &f.uncertainty.entropy_map)?;
    }
    run.write("report.csv", report.to_csv())?;
    run.write("report.txt", report.to_table())?;
    run.write("frames.csv", per_frame)?;
    Ok(Outcome { seed: *seed, summary: report.to_table() })
}

fn predictions(
    args: &PredictArgs,
    config: Option<&Path>,
    seed: u64,
) -> Result<(Vec<EvalSet>, Vec<Vec<sanet_core::uncertainty::ProbMap>>)> {
    let ckpt = load_checked(&args.uncertainty.checkpoint, config)?;
    let sets = load_sets(&args.data)?;
    let probs = predict_sets(&ckpt.params, &sets, &settings(&args.uncertainty, seed))?;
    Ok((sets, probs))
}

fn infer_cmd(
    args: &PredictArgs,
    config: Option<&Path>,
    seed_flag: Option<u64>,
    run: &mut RunDir,
    seed: &mut u64,
) -> Result<Outcome> {
    *seed = seed_flag.unwrap_or(0);
    let (sets, probs) = predictions(args, config, *seed)?;
    let mut table = String::from("set,index,vehicle_pixels,entropy,entropy_vehicle_region\n");
    let mut count = 0;
    for (set, maps) in sets.iter().zip(&probs) {
        for (frame, prob) in set.frames.iter().zip(maps) {
            let pred = prob.threshold();
            let entropy = entropy_map(prob);
            let u = summarize_uncertainty(&entropy, &pred)?;
            let stem = frame_stem(&set.name, frame.index);
            write_mask(&run.file(format!("masks/{stem}.png"))?, &pred)?;
            write_entropy_png(&run.file(format!("entropy/{stem}.png"))?, &entropy)?;
            write_npy(&run.file(format!("entropy/{stem}.npy"))?, &entropy)?;
            let area = sanet_core::frame::mask_area(&pred);
            let _ = writeln!(
                table,
                "{},{},{area},{:.4},{:.4}",
                set.name, frame.index, u.mean_entropy_image, u.mean_entropy_vehicle_region
            );
            count += 1;
        }
    }
    run.write("frames.csv", table)?;
    Ok(Outcome { seed: *seed, summary: format!("predicted {count} frame(s)") })
}

fn overlay_cmd(
    args: &PredictArgs,
    config: Option<&Path>,
    seed_flag: Option<u64>,
    run: &mut RunDir,
    seed: &mut u64,
) -> Result<Outcome> {
    *seed = seed_flag.unwrap_or(0);
    let (sets, probs) = predictions(args, config, *seed)?;
    let mut count = 0;
    for (set, maps) in sets.iter().zip(&probs) {
        for (frame, prob) in set.frames.iter().zip(maps) {
            let rendered = overlay(&frame.image.to_rgb8(), &prob.threshold());
            let stem = frame_stem(&set.name, frame.index);
            write_rgb(&run.file(format!("overlay/{stem}.png"))?, &rendered)?;
            count += 1;
        }
    }
    Ok(Outcome { seed: *seed, summary: format!("rendered {count} overlay(s)") })
}

fn bench_cmd(
    args: &BenchArgs,
    config: Option<&Path>,
    seed_flag: Option<u64>,
    run: &mut RunDir,
    seed: &mut u64,
) -> Result<Outcome> {
    let params = match &args.checkpoint {
        Some(p) => load_checked(p, config)?.params,
        None => {
            let mut model = match config {
                Some(p) => model_config_from(p)?,
                None => ModelConfig::default(),
            };
            if let Some(s) = seed_flag {
                model.seed = s;
            }
            init_model(&model)?
        }
    };
    *seed = params.seed;
    let report = benchmark_inference(&params, (args.height, args.width), args.trials)?;
    let mut csv = String::from("trial,ms\n");
    for (i, t) in report.timings_ms.iter().enumerate() {
        let _ = writeln!(csv, "{},{t:.4}", i + 1);
    }
    run.write("latency.csv", csv)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
    run.write("latency.json", json + "\n")?;
    Ok(Outcome { seed: *seed, summary: report.summary_line() })
}
