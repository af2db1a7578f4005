use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tempcycle::data::{synth_generate, Domain, Split, SynthConfig, VideoDataset};
use tempcycle::eval::{compare_models, evaluate_model, write_report};
use tempcycle::infer::{translate_video, Direction, Translator};
use tempcycle::trainer::{train, ModelKind, TrainConfig, TrainData, CHECKPOINT_DIR, LOSS_LOG_FILE};
use tempcycle::Error;

/// Temporally consistent unpaired video translation.
#[derive(Debug, Parser)]
#[command(name = "tempcycle", version)]
struct Cli {
    /// error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic two-domain video corpus.
    Synth(SynthArgs),
    /// Train a temporal model (or the per-frame baseline).
    Train(TrainArgs),
    /// Translate a directory of frames with a trained checkpoint.
    Translate(TranslateArgs),
    /// Score temporal stability and cycle reconstruction on test videos.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Training videos per domain.
    #[arg(long, default_value_t = 10)]
    videos: usize,
    /// Frames per training video.
    #[arg(long, default_value_t = 15)]
    frames: usize,
    #[arg(long, default_value_t = 4)]
    test_videos: usize,
    #[arg(long, default_value_t = 30)]
    test_frames: usize,
    /// Frame side length in pixels.
    #[arg(long, default_value_t = 72)]
    size: usize,
    /// Tiny corpus for quick end-to-end runs; overrides the size flags.
    #[arg(long)]
    smoke: bool,
    #[arg(long)]
    overwrite: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// TOML file of training settings; keys not given keep their defaults.
    #[arg(long, required_unless_present = "smoke")]
    config: Option<PathBuf>,
    #[arg(long)]
    data_x: PathBuf,
    #[arg(long)]
    data_y: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Train the per-frame model instead of the temporal one.
    #[arg(long)]
    baseline: bool,
    /// Start from the small preset (32x32, width 0.25, 2 epochs).
    #[arg(long)]
    smoke: bool,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    overwrite: bool,
}

#[derive(Debug, Args)]
struct TranslateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "x2y")]
    direction: Direction,
    #[arg(long)]
    overwrite: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Second checkpoint to compare flicker against.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Directory of videos (`video_*/%06d.png`) in the source domain.
    #[arg(long)]
    data: PathBuf,
    /// CSV destination; comparisons also write `<report>.summary.json`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value = "x2y")]
    direction: Direction,
    #[arg(long)]
    overwrite: bool,
}

/// Failure with a stable, greppable category.
#[derive(Debug)]
struct Failure {
    category: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let category = match &e {
            Error::Config(_) => "config",
            Error::Checkpoint { .. } => "checkpoint",
            Error::Io { .. } => "io",
            Error::NonFinite { .. } => "numeric",
            Error::Tensor(_) | Error::Shape(_) => "shape",
            Error::EmptyDataset(_)
            | Error::NoFrames(_)
            | Error::TooFewFrames { .. }
            | Error::FrameSequence { .. }
            | Error::InvalidImage { .. } => "data",
        };
        Failure {
            category,
            message: e.to_string(),
        }
    }
}

fn clobber(path: &Path) -> Failure {
    Failure {
        category: "output",
        message: format!("{} already exists; pass --overwrite to replace it", path.display()),
    }
}

/// Refuses to touch existing outputs unless `overwrite`, in which case they are removed.
fn prepare_outputs(paths: &[PathBuf], overwrite: bool) -> Result<(), Failure> {
    for p in paths.iter().filter(|p| p.exists()) {
        if !overwrite {
            return Err(clobber(p));
        }
        let removed = if p.is_dir() { fs::remove_dir_all(p) } else { fs::remove_file(p) };
        removed.map_err(|source| Error::Io {
            path: p.clone(),
            source,
        })?;
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), Failure> {
    let (train_cfg, test_cfg) = if a.smoke {
        (
            SynthConfig { seed: a.seed, n_videos: 4, frames_per_video: 12, size: 36 },
            SynthConfig { seed: a.seed, n_videos: 2, frames_per_video: 8, size: 36 },
        )
    } else {
        (
            SynthConfig { seed: a.seed, n_videos: a.videos, frames_per_video: a.frames, size: a.size },
            SynthConfig { seed: a.seed, n_videos: a.test_videos, frames_per_video: a.test_frames, size: a.size },
        )
    };
    log::info!("synth seed {}: train {train_cfg:?}, test {test_cfg:?}", a.seed);
    let manifest_path = a.out.join("manifest.json");
    prepare_outputs(
        &[a.out.join("X"), a.out.join("Y"), manifest_path.clone()],
        a.overwrite,
    )?;
    let mut files = Vec::new();
    for (split, cfg) in [(Split::Train, &train_cfg), (Split::Test, &test_cfg)] {
        for domain in [Domain::X, Domain::Y] {
            let out = synth_generate(&a.out, domain, split, cfg)?;
            files.extend(out.files);
        }
    }
    files.sort();
    let manifest = serde_json::json!({
        "seed": a.seed,
        "train": { "videos": train_cfg.n_videos, "frames": train_cfg.frames_per_video, "size": train_cfg.size },
        "test": { "videos": test_cfg.n_videos, "frames": test_cfg.frames_per_video, "size": test_cfg.size },
        "files": files.iter().map(|(p, h)| serde_json::json!({ "path": p, "sha256": h })).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_report(&manifest_path, &text)?;
    println!("wrote {} frames to {}", files.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<(), Failure> {
    let base = if a.smoke { TrainConfig::smoke() } else { TrainConfig::default() };
    let config = match &a.config {
        Some(path) => base.overlay_file(path)?,
        None => base,
    };
    let kind = if a.baseline { ModelKind::Baseline } else { ModelKind::Temporal };
    log::info!("resolved {kind} config (seed {}):\n{}", config.seed, config.to_toml_string());
    if a.resume.is_none() {
        prepare_outputs(&[a.out.join(CHECKPOINT_DIR), a.out.join(LOSS_LOG_FILE)], a.overwrite)?;
    }
    let x = VideoDataset::open(&a.data_x, Some(Domain::X))?;
    let y = VideoDataset::open(&a.data_y, Some(Domain::Y))?;
    let data = TrainData::load(&x, &y, &config)?;
    let outcome = train(&config, kind, &data, &a.out, a.resume.as_deref())?;
    println!(
        "trained {} steps; checkpoint {}; loss log {}",
        outcome.state.step,
        outcome.final_checkpoint.display(),
        outcome.loss_log.display()
    );
    Ok(())
}

fn translate_cmd(a: TranslateArgs) -> Result<(), Failure> {
    let header = Translator::load(&a.checkpoint, a.direction)?.header;
    log::info!(
        "checkpoint {} ({} model, step {}, seed {}), direction {}",
        a.checkpoint.display(),
        header.kind,
        header.step,
        header.config.seed,
        a.direction
    );
    prepare_outputs(&[a.out.clone()], a.overwrite)?;
    let written = translate_video(&a.checkpoint, &a.input, &a.out, a.direction)?;
    println!("wrote {} frames to {}", written.len(), a.out.display());
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<(), Failure> {
    for ckpt in std::iter::once(&a.checkpoint).chain(&a.baseline) {
        let header = Translator::load(ckpt, a.direction)?.header;
        log::info!(
            "checkpoint {} ({} model, step {}, seed {})",
            ckpt.display(),
            header.kind,
            header.step,
            header.config.seed
        );
    }
    let summary_path = PathBuf::from(format!("{}.summary.json", a.report.display()));
    prepare_outputs(&[a.report.clone(), summary_path.clone()], a.overwrite)?;
    let data = VideoDataset::open(&a.data, None)?;
    match &a.baseline {
        Some(baseline) => {
            let report = compare_models(&a.checkpoint, baseline, &data, a.direction)?;
            write_report(&a.report, &report.to_csv())?;
            write_report(&summary_path, &(report.summary_json() + "\n"))?;
            println!(
                "mean flicker {:.6} vs baseline {:.6} (ratio {:.4}) over {} videos",
                report.mean_candidate,
                report.mean_baseline,
                report.ratio,
                report.rows.len()
            );
        }
        None => {
            let report = evaluate_model(&a.checkpoint, &data, a.direction)?;
            write_report(&a.report, &report.to_csv())?;
            println!(
                "mean flicker {:.6}, mean cycle error {:.6} over {} videos",
                report.mean_flicker,
                report.mean_cycle_error,
                report.rows.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp_secs()
        .init();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Translate(a) => translate_cmd(a),
        Command::Eval(a) => eval_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.category, f.message);
            ExitCode::FAILURE
        }
    }
}
