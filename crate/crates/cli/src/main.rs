//! `pdr`: generate synthetic scene datasets, train the inverse-rendering
//! model, evaluate learned features, and preview renders.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdr_core::config::ExperimentConfig;
use pdr_core::Error as CoreError;

mod commands;

#[derive(Parser)]
#[command(name = "pdr", version, about = "physically disentangled representations lab")]
struct Cli {
    /// Print the default experiment config as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,

    /// Worker threads for scene generation (env: PDR_THREADS). Default 1
    /// keeps every artifact bit-stable byte for byte.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset.
    Generate(GenerateArgs),
    /// Train the encoder/decoder model on a generated dataset.
    Train(TrainArgs),
    /// Evaluate a trained checkpoint on a downstream task.
    Eval(EvalArgs),
    /// Render a scene to image files, optionally with parameter overrides.
    RenderPreview(RenderPreviewArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Experiment config JSON; defaults apply for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory produced by `generate`.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for the checkpoint and metrics log.
    #[arg(long)]
    out: PathBuf,
    /// Training mode: none, loocc-l, loocc-lv.
    #[arg(long, default_value = "none")]
    mode: String,
    /// Resume from an existing checkpoint directory.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Task: cluster, probe, disentangle, attribute.
    #[arg(long)]
    task: String,
    /// Feature blocks to stack, e.g. "geom,alb".
    #[arg(long, default_value = "geom,alb")]
    blocks: String,
    /// Ground-truth labels: shape or albedo.
    #[arg(long)]
    labels: Option<String>,
    /// Labeled training samples for the probe task.
    #[arg(long)]
    n_train: Option<usize>,
    /// Probe mode: frozen or finetune.
    #[arg(long)]
    probe_mode: Option<String>,
    /// Integration steps for the attribute task.
    #[arg(long)]
    steps: Option<usize>,
    /// Test-split sample index to attribute.
    #[arg(long, default_value_t = 0)]
    sample_index: usize,
    /// Write the report JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderPreviewArgs {
    /// Scene seed to generate parameters from.
    #[arg(long)]
    scene_seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    shape_class: usize,
    #[arg(long, default_value_t = 0)]
    albedo_class: usize,
    /// Directory holding depth.pdrt, albedo.pdrt, light.pdrt, camera.pdrt.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Round the scene through a trained model (encode then decode) first.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    // light and camera overrides, applied to the canonical parameters
    #[arg(long)]
    ambient: Option<f64>,
    #[arg(long)]
    diffuse: Option<f64>,
    #[arg(long)]
    light_pitch: Option<f64>,
    #[arg(long)]
    light_yaw: Option<f64>,
    #[arg(long)]
    cam_pitch: Option<f64>,
    #[arg(long)]
    cam_yaw: Option<f64>,
}

/// Usage errors exit 1, runtime failures exit 2.
fn classify(err: &CoreError) -> u8 {
    match err {
        CoreError::InvalidConfig(_)
        | CoreError::ClassOutOfRange { .. }
        | CoreError::BadSplitFractions(_)
        | CoreError::DatasetTooSmall { .. }
        | CoreError::TooManyClusters { .. }
        | CoreError::NotEnoughLabeled { .. }
        | CoreError::BatchTooSmall(_)
        | CoreError::ZeroSteps => 1,
        _ => 2,
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, CoreError> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CoreError::io(p, e))?;
            ExperimentConfig::from_json(&text)
        }
    }
}

fn threads_from(cli: &Cli) -> usize {
    cli.threads
        .or_else(|| std::env::var("PDR_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(1)
        .max(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are success, parse failures usage errors
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if cli.print_config {
        println!("{}", ExperimentConfig::default().to_json());
        return ExitCode::SUCCESS;
    }

    let threads = threads_from(&cli);
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (generate, train, eval, render-preview)");
        return ExitCode::from(1);
    };

    let result = match command {
        Command::Generate(args) => {
            load_config(&args.config).and_then(|cfg| commands::generate(&cfg, &args.out, threads))
        }
        Command::Train(args) => {
            let cfg = match &args.config {
                Some(_) => match load_config(&args.config) {
                    Ok(c) => Some(c),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(classify(&e));
                    }
                },
                None => None,
            };
            commands::train(cfg, &args.dataset, &args.out, &args.mode, args.resume.as_deref())
        }
        Command::Eval(args) => commands::eval(&commands::EvalRequest {
            checkpoint: args.checkpoint,
            dataset: args.dataset,
            task: args.task,
            blocks: args.blocks,
            labels: args.labels,
            n_train: args.n_train,
            probe_mode: args.probe_mode,
            steps: args.steps,
            sample_index: args.sample_index,
            out: args.out,
        }),
        Command::RenderPreview(args) => load_config(&args.config).and_then(|cfg| {
            commands::render_preview(&commands::PreviewRequest {
                config: cfg,
                scene_seed: args.scene_seed,
                shape_class: args.shape_class,
                albedo_class: args.albedo_class,
                params: args.params,
                checkpoint: args.checkpoint,
                out: args.out,
                ambient: args.ambient,
                diffuse: args.diffuse,
                light_pitch: args.light_pitch,
                light_yaw: args.light_yaw,
                cam_pitch: args.cam_pitch,
                cam_yaw: args.cam_yaw,
            })
        }),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}
