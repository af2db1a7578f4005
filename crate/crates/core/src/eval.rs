//! Temporal-stability and reconstruction metrics, and model comparison.
//!
//! Flicker of a translated sequence `g` against its source `x`:
//! `mean over t >= 1 of mean |(g_t - g_{t-1}) - (x_t - x_{t-1})|`, in the
//! normalized `[-1, 1]` pixel scale.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::data::VideoDataset;
use crate::error::{io_err, Error, Result};
use crate::infer::{translate_frames, Direction, Translator};
use crate::nets::{Frame, FramePair, PairTranslator};

/// Version of the CSV layouts written by this module.
pub const EVAL_REPORT_SCHEMA_VERSION: u32 = 1;

/// Per-step residuals `mean |(g_t - g_{t-1}) - (x_t - x_{t-1})|` for `t >= 1`.
pub fn flicker_residuals(source: &[Frame], translated: &[Frame]) -> Result<Vec<f64>> {
    if source.len() != translated.len() {
        return Err(Error::Shape(format!(
            "{} source frames vs {} translated frames",
            source.len(),
            translated.len()
        )));
    }
    if source.len() < 2 {
        return Err(Error::TooFewFrames {
            needed: 2,
            got: source.len(),
        });
    }
    if let Some(f) = source.iter().chain(translated).find(|f| !f.same_size(&source[0])) {
        return Err(Error::Shape(format!(
            "frame {}x{} differs from {}x{}",
            f.height(),
            f.width(),
            source[0].height(),
            source[0].width()
        )));
    }
    Ok((1..source.len())
        .map(|t| {
            let (x0, x1) = (source[t - 1].tensor().data(), source[t].tensor().data());
            let (g0, g1) = (translated[t - 1].tensor().data(), translated[t].tensor().data());
            let sum: f64 = (0..x0.len())
                .map(|i| {
                    let dg = g1[i] as f64 - g0[i] as f64;
                    let dx = x1[i] as f64 - x0[i] as f64;
                    (dg - dx).abs()
                })
                .sum();
            sum / x0.len() as f64
        })
        .collect())
}

pub fn flicker_score(source: &[Frame], translated: &[Frame]) -> Result<f64> {
    let r = flicker_residuals(source, translated)?;
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}

/// Flicker of one translated video.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlickerReport {
    pub model_id: String,
    pub dataset_id: String,
    pub video_id: String,
    pub residuals: Vec<f64>,
    /// Mean of `residuals`.
    pub score: f64,
}

impl FlickerReport {
    pub fn new(
        model_id: impl Into<String>,
        dataset_id: impl Into<String>,
        video_id: impl Into<String>,
        source: &[Frame],
        translated: &[Frame],
    ) -> Result<Self> {
        let residuals = flicker_residuals(source, translated)?;
        let score = residuals.iter().sum::<f64>() / residuals.len() as f64;
        Ok(Self {
            model_id: model_id.into(),
            dataset_id: dataset_id.into(),
            video_id: video_id.into(),
            residuals,
            score,
        })
    }
}

/// Mean L1 between each frame `x_t` (`t >= 1`) and the later output of
/// `back(forward(x_{t-1}, x_t))`.
pub fn cycle_reconstruction_error<G, F>(forward: &G, back: &F, frames: &[Frame]) -> Result<f64>
where
    G: PairTranslator + ?Sized,
    F: PairTranslator + ?Sized,
{
    if frames.len() < 3 {
        return Err(Error::TooFewFrames {
            needed: 3,
            got: frames.len(),
        });
    }
    let mut total = 0.0;
    for t in 1..frames.len() {
        let pair = FramePair::new(frames[t - 1].clone(), frames[t].clone())?;
        let rec = back.translate_pair(&forward.translate_pair(&pair)?)?;
        total += rec.later.mean_abs_diff(&frames[t])?;
    }
    Ok(total / (frames.len() - 1) as f64)
}

fn load_video_frames(t: &Translator, dataset: &VideoDataset) -> Result<Vec<(String, Vec<Frame>)>> {
    if dataset.videos.is_empty() {
        return Err(Error::EmptyDataset(format!("no videos in {}", dataset.root.display())));
    }
    dataset
        .videos
        .iter()
        .map(|v| {
            let frames = v.frames.iter().map(|p| t.load_input(p)).collect::<Result<Vec<_>>>()?;
            Ok((v.id.clone(), frames))
        })
        .collect()
}

fn dataset_id(dataset: &VideoDataset) -> String {
    dataset.root.display().to_string()
}

/// Per-video metrics of one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub video_id: String,
    pub frames: usize,
    pub flicker: f64,
    pub cycle_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelEvaluation {
    pub model_id: String,
    pub dataset_id: String,
    pub direction: String,
    pub rows: Vec<EvalRow>,
    pub mean_flicker: f64,
    pub mean_cycle_error: f64,
}

pub const EVAL_CSV_COLUMNS: [&str; 5] = ["video", "frames", "flicker", "cycle_error", "schema"];

impl ModelEvaluation {
    pub fn to_csv(&self) -> String {
        let mut s = EVAL_CSV_COLUMNS.join(",");
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.video_id, r.frames, r.flicker, r.cycle_error, EVAL_REPORT_SCHEMA_VERSION
            );
        }
        s
    }
}

/// Flicker and cycle error of a checkpoint on every video of `dataset`.
pub fn evaluate_model(checkpoint: &Path, dataset: &VideoDataset, direction: Direction) -> Result<ModelEvaluation> {
    let forward = Translator::load(checkpoint, direction)?;
    let back_dir = match direction {
        Direction::XToY => Direction::YToX,
        Direction::YToX => Direction::XToY,
    };
    let back = Translator::load(checkpoint, back_dir)?;
    let mut rows = Vec::new();
    for (id, frames) in load_video_frames(&forward, dataset)? {
        let translated = translate_frames(&forward.generator, &frames)?;
        rows.push(EvalRow {
            video_id: id,
            frames: frames.len(),
            flicker: flicker_score(&frames, &translated)?,
            cycle_error: cycle_reconstruction_error(&forward.generator, &back.generator, &frames)?,
        });
    }
    let n = rows.len() as f64;
    Ok(ModelEvaluation {
        model_id: checkpoint.display().to_string(),
        dataset_id: dataset_id(dataset),
        direction: direction.to_string(),
        mean_flicker: rows.iter().map(|r| r.flicker).sum::<f64>() / n,
        mean_cycle_error: rows.iter().map(|r| r.cycle_error).sum::<f64>() / n,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub video_id: String,
    pub frames: usize,
    pub flicker_candidate: f64,
    pub flicker_baseline: f64,
}

/// Flicker of a candidate model against a baseline on the same videos.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub candidate_id: String,
    pub baseline_id: String,
    pub dataset_id: String,
    pub direction: String,
    pub rows: Vec<ComparisonRow>,
    pub mean_candidate: f64,
    pub mean_baseline: f64,
    /// `mean_candidate / mean_baseline`; below 1 means the candidate flickers less.
    pub ratio: f64,
}

pub const COMPARISON_CSV_COLUMNS: [&str; 5] =
    ["video", "frames", "flicker_candidate", "flicker_baseline", "schema"];

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut s = COMPARISON_CSV_COLUMNS.join(",");
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.video_id, r.frames, r.flicker_candidate, r.flicker_baseline, EVAL_REPORT_SCHEMA_VERSION
            );
        }
        s
    }

    pub fn summary_json(&self) -> String {
        serde_json::json!({
            "schema": EVAL_REPORT_SCHEMA_VERSION,
            "candidate": self.candidate_id,
            "baseline": self.baseline_id,
            "dataset": self.dataset_id,
            "direction": self.direction,
            "videos": self.rows.len(),
            "mean_flicker_candidate": self.mean_candidate,
            "mean_flicker_baseline": self.mean_baseline,
            "ratio": self.ratio,
        })
        .to_string()
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

/// Translates every test video with both checkpoints and compares flicker.
pub fn compare_models(
    candidate: &Path,
    baseline: &Path,
    test_set: &VideoDataset,
    direction: Direction,
) -> Result<ComparisonReport> {
    let a = Translator::load(candidate, direction)?;
    let b = Translator::load(baseline, direction)?;
    if a.image_size() != b.image_size() {
        return Err(Error::Config(format!(
            "incompatible image sizes: {} vs {}",
            a.image_size(),
            b.image_size()
        )));
    }
    let videos_a = load_video_frames(&a, test_set)?;
    let videos_b = if a.header.config.effective_load_size() == b.header.config.effective_load_size() {
        None
    } else {
        Some(load_video_frames(&b, test_set)?)
    };
    let mut rows = Vec::new();
    for (i, (id, frames)) in videos_a.iter().enumerate() {
        let frames_b = videos_b.as_ref().map_or(frames, |v| &v[i].1);
        let fa = flicker_score(frames, &translate_frames(&a.generator, frames)?)?;
        let fb = flicker_score(frames_b, &translate_frames(&b.generator, frames_b)?)?;
        log::info!("{id}: flicker {fa:.5} vs {fb:.5}");
        rows.push(ComparisonRow {
            video_id: id.clone(),
            frames: frames.len(),
            flicker_candidate: fa,
            flicker_baseline: fb,
        });
    }
    let n = rows.len() as f64;
    let mean_candidate = rows.iter().map(|r| r.flicker_candidate).sum::<f64>() / n;
    let mean_baseline = rows.iter().map(|r| r.flicker_baseline).sum::<f64>() / n;
    Ok(ComparisonReport {
        candidate_id: candidate.display().to_string(),
        baseline_id: baseline.display().to_string(),
        dataset_id: dataset_id(test_set),
        direction: direction.to_string(),
        rows,
        mean_candidate,
        mean_baseline,
        ratio: ratio(mean_candidate, mean_baseline),
    })
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_report(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}
