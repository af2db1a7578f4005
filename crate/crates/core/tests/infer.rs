//! Streaming translation from checkpoints.

use std::fs;
use std::path::{Path, PathBuf};

use tempcycle::data::*;
use tempcycle::infer::*;
use tempcycle::nets::{Frame, FramePair, PairTranslator};
use tempcycle::trainer::{ModelKind, TrainConfig, TrainState};
use tempfile::TempDir;

fn checkpoint(dir: &Path, kind: ModelKind, seed: u64) -> PathBuf {
    let path = dir.join(format!("{kind}-{seed}.ckpt"));
    TrainState::new(TrainConfig { seed, ..TrainConfig::smoke() }, kind)
        .unwrap()
        .save(&path)
        .unwrap();
    path
}

fn videos(root: &Path, n_videos: usize, frames: usize) -> VideoDataset {
    let cfg = SynthConfig { seed: 4, n_videos, frames_per_video: frames, size: 36 };
    synth_generate(root, Domain::X, Split::Test, &cfg).unwrap().dataset
}

fn frames(t: &Translator, video: &Video) -> Vec<Frame> {
    video.frames.iter().map(|p| t.load_input(p).unwrap()).collect()
}

#[test]
fn direction_names() {
    assert_eq!("x2y".parse::<Direction>().unwrap(), Direction::XToY);
    assert_eq!("y2x".parse::<Direction>().unwrap(), Direction::YToX);
    assert!("xy".parse::<Direction>().is_err());
    assert_eq!(Direction::default().to_string(), "x2y");
    assert_eq!(Direction::YToX.generator_section(), "F");
}

#[test]
fn one_output_per_input_frame() {
    let dir = TempDir::new().unwrap();
    let data = videos(&dir.path().join("data"), 1, 30);
    let ckpt = checkpoint(dir.path(), ModelKind::Temporal, 1);
    let out_dir = dir.path().join("out");
    let written = translate_video(&ckpt, &data.videos[0].dir, &out_dir, Direction::XToY).unwrap();
    assert_eq!(written.len(), 30);
    let names = |paths: &[PathBuf]| paths.iter().map(|p| p.file_name().unwrap().to_owned()).collect::<Vec<_>>();
    assert_eq!(names(&written), names(&data.videos[0].frames));
    for p in &written {
        let img = load_rgb(p).unwrap();
        assert_eq!(img.dimensions(), (32, 32));
    }
}

#[test]
fn first_frame_is_paired_with_itself() {
    let dir = TempDir::new().unwrap();
    let data = videos(&dir.path().join("data"), 1, 4);
    let t = Translator::load(&checkpoint(dir.path(), ModelKind::Temporal, 2), Direction::XToY).unwrap();
    let xs = frames(&t, &data.videos[0]);
    let mut session = t.session();
    assert!(!session.has_context());
    let outs: Vec<Frame> = xs.iter().map(|f| session.push_frame(f.clone()).unwrap()).collect();
    assert_eq!(session.emitted(), 4);

    let later = |a: &Frame, b: &Frame| t.generator.translate_pair(&FramePair::new(a.clone(), b.clone()).unwrap()).unwrap().later;
    assert_eq!(outs[0], later(&xs[0], &xs[0]));
    for i in 1..4 {
        assert_eq!(outs[i], later(&xs[i - 1], &xs[i]));
    }
    assert_eq!(translate_frames(&t.generator, &xs).unwrap(), outs);
}

#[test]
fn translation_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = videos(&dir.path().join("data"), 1, 6);
    let ckpt = checkpoint(dir.path(), ModelKind::Temporal, 3);
    let a = translate_video(&ckpt, &data.videos[0].dir, &dir.path().join("a"), Direction::XToY).unwrap();
    let b = translate_video(&ckpt, &data.videos[0].dir, &dir.path().join("b"), Direction::XToY).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(fs::read(p).unwrap(), fs::read(q).unwrap());
    }
}

#[test]
fn temporal_and_baseline_outputs_differ() {
    let dir = TempDir::new().unwrap();
    let data = videos(&dir.path().join("data"), 1, 5);
    let temporal = checkpoint(dir.path(), ModelKind::Temporal, 4);
    let baseline = checkpoint(dir.path(), ModelKind::Baseline, 4);
    let a = translate_video(&temporal, &data.videos[0].dir, &dir.path().join("t"), Direction::XToY).unwrap();
    let b = translate_video(&baseline, &data.videos[0].dir, &dir.path().join("b"), Direction::XToY).unwrap();
    assert!(a.iter().zip(&b).any(|(p, q)| fs::read(p).unwrap() != fs::read(q).unwrap()));
}

#[test]
fn baseline_translates_each_frame_alone() {
    let dir = TempDir::new().unwrap();
    let data = videos(&dir.path().join("data"), 1, 4);
    let t = Translator::load(&checkpoint(dir.path(), ModelKind::Baseline, 5), Direction::YToX).unwrap();
    let xs = frames(&t, &data.videos[0]);
    let outs = translate_frames(&t.generator, &xs).unwrap();
    for (x, y) in xs.iter().zip(&outs) {
        let alone = t.generator.apply(x.tensor()).unwrap();
        assert_eq!(y.tensor(), &alone);
    }
}

#[test]
fn interleaved_sessions_are_independent() {
    let dir = TempDir::new().unwrap();
    let data = videos(&dir.path().join("data"), 2, 5);
    let t = Translator::load(&checkpoint(dir.path(), ModelKind::Temporal, 6), Direction::XToY).unwrap();
    let a = frames(&t, &data.videos[0]);
    let b = frames(&t, &data.videos[1]);
    let (mut sa, mut sb) = (t.session(), t.session());
    let mut out_a = Vec::new();
    let mut out_b = Vec::new();
    for i in 0..5 {
        out_a.push(sa.push_frame(a[i].clone()).unwrap());
        out_b.push(sb.push_frame(b[i].clone()).unwrap());
    }
    assert_eq!(out_a, translate_frames(&t.generator, &a).unwrap());
    assert_eq!(out_b, translate_frames(&t.generator, &b).unwrap());
}

#[test]
fn empty_directory_reports_no_frames() {
    let dir = TempDir::new().unwrap();
    let ckpt = checkpoint(dir.path(), ModelKind::Temporal, 7);
    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let err = translate_video(&ckpt, &empty, &dir.path().join("out"), Direction::XToY).unwrap_err();
    assert!(err.to_string().contains("no frames found"), "{err}");
}

#[test]
fn wrong_frame_size_is_rejected() {
    let dir = TempDir::new().unwrap();
    let t = Translator::load(&checkpoint(dir.path(), ModelKind::Temporal, 8), Direction::XToY).unwrap();
    let mut session = t.session();
    assert!(session.push_frame(Frame::filled(16, 16, 0.0).unwrap()).is_err());
    assert_eq!(session.emitted(), 0);
}

#[test]
fn bad_checkpoint_is_rejected() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("junk");
    fs::write(&path, b"not a checkpoint").unwrap();
    assert!(Translator::load(&path, Direction::XToY).is_err());
    assert!(Translator::load(&dir.path().join("missing"), Direction::XToY).is_err());
}

#[test]
fn loaded_generator_matches_saved_state() {
    let dir = TempDir::new().unwrap();
    let state = TrainState::new(TrainConfig::smoke(), ModelKind::Temporal).unwrap();
    let path = dir.path().join("ckpt");
    state.save(&path).unwrap();
    assert_eq!(Translator::load(&path, Direction::XToY).unwrap().generator.params(), state.g.params());
    assert_eq!(Translator::load(&path, Direction::YToX).unwrap().generator.params(), state.f.params());
}
