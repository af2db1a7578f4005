use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::config::TrainConfig;
use super::state::{ModelKind, TrainState};
use super::step::Sample;
use crate::data::{augment, load_triplets, sample_triplets, FrameTriplet, VideoDataset};
use crate::error::{io_err, Error, Result};
use crate::losses::LossReport;
use crate::seed;

pub const LOSS_LOG_FILE: &str = "loss_log.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub fn checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(CHECKPOINT_DIR).join(format!("step_{step:08}"))
}

/// Preprocessed training triplets of both domains, at load resolution.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub x: Vec<FrameTriplet>,
    pub y: Vec<FrameTriplet>,
}

impl TrainData {
    pub fn load(x: &VideoDataset, y: &VideoDataset, config: &TrainConfig) -> Result<Self> {
        let load = config.effective_load_size();
        let data = Self {
            x: load_triplets(&sample_triplets(x, config.stride_x)?, load)?,
            y: load_triplets(&sample_triplets(y, config.stride_y)?, load)?,
        };
        for (name, list, root) in [("X", &data.x, &x.root), ("Y", &data.y, &y.root)] {
            if list.is_empty() {
                return Err(Error::EmptyDataset(format!(
                    "domain {name} at {} yields no triplets",
                    root.display()
                )));
            }
        }
        Ok(data)
    }

    /// Optimizer steps per epoch: the longer list is traversed once, the
    /// shorter one wraps around.
    pub fn steps_per_epoch(&self, batch_size: usize) -> u64 {
        self.x.len().max(self.y.len()).div_ceil(batch_size) as u64
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub loss_log: PathBuf,
    /// Reports of the steps run by this call.
    pub reports: Vec<LossReport>,
    pub state: TrainState,
}

fn epoch_order(master: u64, label: &str, epoch: u32, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::indexed_stream(master, label, epoch as u64));
    order
}

/// Trains from scratch, or continues from `resume`. Checkpoints land in
/// `out_dir/checkpoints/step_%08d`, per-step losses in `out_dir/loss_log.csv`.
pub fn train(
    config: &TrainConfig,
    kind: ModelKind,
    data: &TrainData,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.x.is_empty() || data.y.is_empty() {
        return Err(Error::EmptyDataset("both domains need at least one triplet".into()));
    }
    let mut state = match resume {
        Some(path) => {
            let state = TrainState::load(path)?;
            check_resumable(&state, config, kind)?;
            state
        }
        None => TrainState::new(config.clone(), kind)?,
    };
    // Only the length of the run may change on resume.
    state.config.epochs = config.epochs;
    state.config.checkpoint_every = config.checkpoint_every;

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let log_path = out_dir.join(LOSS_LOG_FILE);
    let mut log = open_loss_log(&log_path, state.step)?;

    let batch = config.batch_size;
    let steps_per_epoch = data.steps_per_epoch(batch);
    let crop = config.image_size;
    let mut reports = Vec::new();
    let mut last_saved = None;
    log::info!(
        "training {kind} model: {} X / {} Y triplets, {steps_per_epoch} steps per epoch, {} epochs, seed {}",
        data.x.len(),
        data.y.len(),
        config.epochs,
        config.seed
    );
    while state.epoch < config.epochs {
        let order_x = epoch_order(config.seed, "shuffle.X", state.epoch, data.x.len());
        let order_y = epoch_order(config.seed, "shuffle.Y", state.epoch, data.y.len());
        let first = (state.step_in_epoch as usize) * batch;
        let mut xs = Vec::with_capacity(batch);
        let mut ys = Vec::with_capacity(batch);
        for j in 0..batch {
            let k = first + j;
            let sample_index = state.step * batch as u64 + j as u64;
            let x = &data.x[order_x[k % data.x.len()]];
            let y = &data.y[order_y[k % data.y.len()]];
            xs.push(augment(x, &mut seed::indexed_stream(config.seed, "augment.X", sample_index), crop)?);
            ys.push(augment(y, &mut seed::indexed_stream(config.seed, "augment.Y", sample_index), crop)?);
        }
        let samples: Vec<Sample<'_>> = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| match kind {
                ModelKind::Temporal => Sample::Temporal(x, y),
                ModelKind::Baseline => Sample::Baseline(&x.frames[2], &y.frames[2]),
            })
            .collect();
        let report = state.train_batch(&samples)?;
        writeln!(log, "{}", report.csv_row()).map_err(io_err(&log_path))?;

        state.step_in_epoch += 1;
        if state.step_in_epoch == steps_per_epoch {
            state.step_in_epoch = 0;
            state.epoch += 1;
            log::info!(
                "epoch {} done at step {}: G total {:.4}, D total {:.4}",
                state.epoch,
                state.step,
                report.total_generators,
                report.total_discriminators
            );
        } else {
            log::debug!("step {}: {}", state.step, report.json_line());
        }
        reports.push(report);

        if config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0 {
            log.flush().map_err(io_err(&log_path))?;
            let path = checkpoint_path(out_dir, state.step);
            state.save(&path)?;
            last_saved = Some(path);
        }
    }
    log.flush().map_err(io_err(&log_path))?;
    let final_checkpoint = checkpoint_path(out_dir, state.step);
    if last_saved.as_ref() != Some(&final_checkpoint) {
        state.save(&final_checkpoint)?;
    }
    Ok(TrainOutcome {
        final_checkpoint,
        loss_log: log_path,
        reports,
        state,
    })
}

fn check_resumable(state: &TrainState, config: &TrainConfig, kind: ModelKind) -> Result<()> {
    if state.kind != kind {
        return Err(Error::Config(format!(
            "checkpoint holds a {} model, requested {kind}",
            state.kind
        )));
    }
    let mut saved = state.config.clone();
    saved.epochs = config.epochs;
    saved.checkpoint_every = config.checkpoint_every;
    if &saved != config {
        return Err(Error::Config(
            "config differs from the checkpoint's (only epochs and checkpoint_every may change)"
                .into(),
        ));
    }
    Ok(())
}

/// Opens the loss log for appending after `step` completed steps, dropping
/// any rows past that point from an earlier run.
fn open_loss_log(path: &Path, step: u64) -> Result<BufWriter<fs::File>> {
    let header = LossReport::csv_header();
    let mut kept = vec![header.clone()];
    if step > 0 {
        if let Ok(text) = fs::read_to_string(path) {
            let mut lines = text.lines();
            if lines.next() == Some(header.as_str()) {
                kept.extend(
                    lines
                        .filter(|l| {
                            l.split(',')
                                .next()
                                .and_then(|s| s.parse::<u64>().ok())
                                .is_some_and(|s| s <= step)
                        })
                        .map(str::to_string),
                );
            }
        }
    }
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    for line in kept {
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    Ok(w)
}
