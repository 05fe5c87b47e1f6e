use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rexnet::pipeline::{
    cmd_eval, cmd_gen, cmd_gradcheck, cmd_predict, cmd_refine_depth, cmd_segment, cmd_train, DatasetManifest,
    RunConfig, CHECKPOINT_DIR,
};
use rexnet::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "rexnet", version, about = "Region saliency with context fusion and depth refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// `key = value` config file; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset root (manifest.csv, images/, gt/, ...).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory of the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Writes a synthetic corpus to --data (or --out).
    Gen,
    /// Writes superpixel and edge-region masks next to the images.
    Segment,
    /// Two-stage training; writes checkpoint/, train_log.csv and config.txt to --out (default <data>/run).
    Train,
    /// Saliency maps for the test split into --out (default <data>/pred).
    Predict {
        /// Checkpoint directory (default <data>/run/checkpoint).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// S1/S2 from stored S maps and depth, in place in --out (default <data>/pred).
    RefineDepth,
    /// Per-image and dataset metrics for every map kind in --pred.
    Eval {
        /// Prediction directory (default <data>/pred); reports go to --out (default: same).
        #[arg(long)]
        pred: Option<PathBuf>,
    },
    /// Finite-difference checks of every layer and both training losses.
    Gradcheck,
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn data_root(cli: &Cli) -> Result<&Path> {
    cli.data
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("--data is required for this command".into()))
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = config(cli)?;
    match &cli.command {
        Command::Gen => {
            let root = cli
                .data
                .as_deref()
                .or(cli.out.as_deref())
                .ok_or_else(|| Error::InvalidArgument("gen needs --data or --out".into()))?;
            let n = cmd_gen(&cfg, root)?;
            println!("generated {n} samples in {}", root.display());
        }
        Command::Segment => {
            let manifest = DatasetManifest::load(data_root(cli)?)?;
            let n = cmd_segment(&cfg, &manifest)?;
            println!("segmented {n} images");
        }
        Command::Train => {
            let root = data_root(cli)?;
            let manifest = DatasetManifest::load(root)?;
            let out = cli.out.clone().unwrap_or_else(|| root.join("run"));
            match cmd_train(&cfg, &manifest, &out)? {
                Some(log) => {
                    let last = |stage| log.totals(stage).last().copied().unwrap_or(f64::NAN);
                    println!(
                        "trained: final stage-1 loss {:.5}, stage-2 loss {:.5}; checkpoint in {}",
                        last(1),
                        last(2),
                        out.join(CHECKPOINT_DIR).display()
                    );
                }
                None => println!("no training samples"),
            }
        }
        Command::Predict { checkpoint } => {
            let root = data_root(cli)?;
            let manifest = DatasetManifest::load(root)?;
            let ckpt = checkpoint.clone().unwrap_or_else(|| root.join("run").join(CHECKPOINT_DIR));
            let out = cli.out.clone().unwrap_or_else(|| manifest.default_pred_dir());
            let n = cmd_predict(&cfg, &manifest, &ckpt, &out)?;
            println!("predicted {n} test images into {}", out.display());
        }
        Command::RefineDepth => {
            let manifest = DatasetManifest::load(data_root(cli)?)?;
            let dir = cli.out.clone().unwrap_or_else(|| manifest.default_pred_dir());
            let n = cmd_refine_depth(&cfg, &manifest, &dir)?;
            println!("refined {n} predictions in {}", dir.display());
        }
        Command::Eval { pred } => {
            let manifest = DatasetManifest::load(data_root(cli)?)?;
            let pred = pred.clone().unwrap_or_else(|| manifest.default_pred_dir());
            let out = cli.out.clone().unwrap_or_else(|| pred.clone());
            let summaries = cmd_eval(&manifest, &pred, &out)?;
            println!("{:<4} {:>6} {:>8} {:>8} {:>8}", "map", "images", "max_fb", "mae", "auc");
            for s in &summaries {
                println!(
                    "{:<4} {:>6} {:>8.4} {:>8.4} {:>8.4}",
                    s.label, s.images, s.report.f_beta, s.report.mae, s.report.auc
                );
            }
        }
        Command::Gradcheck => {
            let report = cmd_gradcheck(&cfg, cli.out.as_deref())?;
            for (name, r) in &report.entries {
                println!(
                    "{} {name}: {} probes, max rel error {:.3e}",
                    if r.passed && r.checked > 0 { "PASS" } else { "FAIL" },
                    r.checked,
                    r.max_rel_error
                );
            }
            println!(
                "{} checks, worst {:.3e}, {} probes redrawn at kinks, {:.1}s",
                report.entries.len(),
                report.worst(),
                report.rejected,
                report.elapsed.as_secs_f64()
            );
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("gradient check failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
