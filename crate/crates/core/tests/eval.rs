//! Flicker and cycle-reconstruction metrics and model comparison.

use std::path::{Path, PathBuf};

use proptest::prelude::*;
use tempcycle::data::*;
use tempcycle::eval::*;
use tempcycle::infer::{translate_frames, Direction, Translator};
use tempcycle::nets::{Frame, FramePair, PairTranslator};
use tempcycle::trainer::{train, ModelKind, TrainConfig, TrainData, TrainState};
use tempcycle::Result;
use tempcycle_autograd::Tensor;
use tempfile::TempDir;

fn constant(v: f32) -> Frame {
    Frame::filled(4, 4, v).unwrap()
}

fn frame_from(values: Vec<f32>, size: usize) -> Frame {
    Frame::new(Tensor::new(vec![3, size, size], values).unwrap()).unwrap()
}

#[test]
fn identical_sequences_do_not_flicker() {
    let src: Vec<Frame> = (0..5).map(|i| constant(0.1 * i as f32)).collect();
    assert_eq!(flicker_score(&src, &src).unwrap(), 0.0);
}

#[test]
fn static_output_on_static_input_does_not_flicker() {
    let src = vec![constant(0.3); 6];
    let out = vec![constant(-0.7); 6];
    assert_eq!(flicker_score(&src, &out).unwrap(), 0.0);
}

#[test]
fn alternating_output_flickers_by_twice_the_amplitude() {
    let src = vec![constant(0.0); 7];
    let out: Vec<Frame> = (0..7).map(|i| constant(if i % 2 == 0 { 0.1 } else { -0.1 })).collect();
    let r = flicker_residuals(&src, &out).unwrap();
    assert_eq!(r.len(), 6);
    for v in r {
        assert!((v - 0.2).abs() < 1e-6);
    }
    assert!((flicker_score(&src, &out).unwrap() - 0.2).abs() < 1e-6);
}

#[test]
fn flicker_input_errors() {
    let a = vec![constant(0.0); 3];
    assert!(flicker_score(&a, &a[..2]).is_err());
    assert!(flicker_score(&a[..1], &a[..1]).is_err());
    let mut b = a.clone();
    b[1] = Frame::filled(8, 8, 0.0).unwrap();
    assert!(flicker_score(&a, &b).is_err());
}

#[test]
fn flicker_report_carries_ids() {
    let src = vec![constant(0.0); 3];
    let out = vec![constant(0.0), constant(0.5), constant(0.5)];
    let r = FlickerReport::new("m", "d", "v", &src, &out).unwrap();
    assert_eq!((r.model_id.as_str(), r.dataset_id.as_str(), r.video_id.as_str()), ("m", "d", "v"));
    assert_eq!(r.residuals.len(), 2);
    assert!((r.score - 0.25).abs() < 1e-6);
}

fn sequence(seed: u64, n: usize, size: usize, amp: f32) -> Vec<Frame> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| frame_from((0..3 * size * size).map(|_| rng.random_range(-amp..amp)).collect(), size))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flicker_invariant_to_constant_shift(seed in 0u64..10_000, c in -0.4f32..0.4) {
        let src = sequence(seed, 5, 3, 0.5);
        let out = sequence(seed + 1, 5, 3, 0.5);
        let shifted: Vec<Frame> = out
            .iter()
            .map(|f| Frame::new(f.tensor().map(|v| v + c)).unwrap())
            .collect();
        let a = flicker_score(&src, &out).unwrap();
        let b = flicker_score(&src, &shifted).unwrap();
        prop_assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn flicker_symmetric_under_time_reversal(seed in 0u64..10_000, n in 2usize..8) {
        let src = sequence(seed, n, 3, 1.0);
        let out = sequence(seed + 7, n, 3, 1.0);
        let rev = |v: &[Frame]| v.iter().rev().cloned().collect::<Vec<_>>();
        let a = flicker_score(&src, &out).unwrap();
        let b = flicker_score(&rev(&src), &rev(&out)).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn identity_translation_never_flickers(seed in 0u64..10_000, n in 2usize..8) {
        let src = sequence(seed, n, 3, 1.0);
        prop_assert_eq!(flicker_score(&src, &src).unwrap(), 0.0);
    }
}

struct Identity;

impl PairTranslator for Identity {
    fn translate_pair(&self, pair: &FramePair) -> Result<FramePair> {
        Ok(pair.clone())
    }
}

#[test]
fn perfect_reconstruction_has_zero_cycle_error() {
    let frames = sequence(1, 5, 4, 1.0);
    assert_eq!(cycle_reconstruction_error(&Identity, &Identity, &frames).unwrap(), 0.0);
    assert!(cycle_reconstruction_error(&Identity, &Identity, &frames[..2]).is_err());
}

/// Reconstruction of `x_t` from the stacked pair, written without the library's pair types.
fn brute_force_cycle_error(t: &Translator, back: &Translator, frames: &[Frame]) -> f64 {
    let mut total = 0.0;
    for i in 1..frames.len() {
        let stacked = Tensor::concat_channels(&[frames[i - 1].tensor(), frames[i].tensor()]).unwrap();
        let y = t.generator.apply(&stacked).unwrap();
        let r = back.generator.apply(&y).unwrap();
        let later = &r.data()[r.numel() / 2..];
        let diff: f64 = later
            .iter()
            .zip(frames[i].tensor().data())
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum();
        total += diff / later.len() as f64;
    }
    total / (frames.len() - 1) as f64
}

fn untrained(dir: &Path, kind: ModelKind) -> PathBuf {
    let path = dir.join(format!("{kind}.ckpt"));
    TrainState::new(TrainConfig::smoke(), kind).unwrap().save(&path).unwrap();
    path
}

fn test_videos(root: &Path, n: usize) -> VideoDataset {
    let cfg = SynthConfig { seed: 8, n_videos: n, frames_per_video: 6, size: 36 };
    synth_generate(root, Domain::X, Split::Test, &cfg).unwrap().dataset
}

#[test]
fn cycle_error_matches_brute_force() {
    let dir = TempDir::new().unwrap();
    let ckpt = untrained(dir.path(), ModelKind::Temporal);
    let data = test_videos(&dir.path().join("data"), 1);
    let g = Translator::load(&ckpt, Direction::XToY).unwrap();
    let f = Translator::load(&ckpt, Direction::YToX).unwrap();
    let frames: Vec<Frame> = data.videos[0].frames.iter().map(|p| g.load_input(p).unwrap()).collect();
    let got = cycle_reconstruction_error(&g.generator, &f.generator, &frames).unwrap();
    let expected = brute_force_cycle_error(&g, &f, &frames);
    assert!((got - expected).abs() <= 1e-9 * expected, "{got} vs {expected}");
}

#[test]
fn evaluation_has_one_row_per_video() {
    let dir = TempDir::new().unwrap();
    let ckpt = untrained(dir.path(), ModelKind::Temporal);
    let data = test_videos(&dir.path().join("data"), 3);
    let e = evaluate_model(&ckpt, &data, Direction::XToY).unwrap();
    assert_eq!(e.rows.len(), 3);
    assert!(e.rows.iter().all(|r| r.frames == 6 && r.flicker > 0.0 && r.cycle_error > 0.0));
    let csv = e.to_csv();
    assert_eq!(csv.lines().count(), 4);
    assert_eq!(csv.lines().next().unwrap(), EVAL_CSV_COLUMNS.join(","));
    let mean = e.rows.iter().map(|r| r.flicker).sum::<f64>() / 3.0;
    assert!((e.mean_flicker - mean).abs() < 1e-12);
}

#[test]
fn same_checkpoint_compares_to_ratio_one() {
    let dir = TempDir::new().unwrap();
    let ckpt = untrained(dir.path(), ModelKind::Temporal);
    let data = test_videos(&dir.path().join("data"), 2);
    let r = compare_models(&ckpt, &ckpt, &data, Direction::XToY).unwrap();
    assert_eq!(r.ratio, 1.0);
    assert_eq!(r.rows.len(), 2);
    assert_eq!(r.to_csv().lines().count(), 3);
    let summary: serde_json::Value = serde_json::from_str(&r.summary_json()).unwrap();
    assert_eq!(summary["ratio"], 1.0);
    assert_eq!(summary["videos"], 2);
}

#[test]
fn comparison_against_baseline() {
    let dir = TempDir::new().unwrap();
    let temporal = untrained(dir.path(), ModelKind::Temporal);
    let baseline = untrained(dir.path(), ModelKind::Baseline);
    let data = test_videos(&dir.path().join("data"), 2);
    let r = compare_models(&temporal, &baseline, &data, Direction::XToY).unwrap();
    assert!((r.ratio - r.mean_candidate / r.mean_baseline).abs() < 1e-12);

    let big = dir.path().join("big.ckpt");
    TrainState::new(TrainConfig { image_size: 64, ..TrainConfig::smoke() }, ModelKind::Baseline)
        .unwrap()
        .save(&big)
        .unwrap();
    assert!(compare_models(&temporal, &big, &data, Direction::XToY).is_err());
}

#[test]
fn baseline_flicker_matches_per_frame_translation() {
    let dir = TempDir::new().unwrap();
    let ckpt = untrained(dir.path(), ModelKind::Baseline);
    let data = test_videos(&dir.path().join("data"), 1);
    let t = Translator::load(&ckpt, Direction::XToY).unwrap();
    let frames: Vec<Frame> = data.videos[0].frames.iter().map(|p| t.load_input(p).unwrap()).collect();
    let out: Vec<Frame> = frames
        .iter()
        .map(|f| Frame::new(t.generator.apply(f.tensor()).unwrap()).unwrap())
        .collect();
    assert_eq!(translate_frames(&t.generator, &frames).unwrap(), out);
    let e = evaluate_model(&ckpt, &data, Direction::XToY).unwrap();
    assert!((e.rows[0].flicker - flicker_score(&frames, &out).unwrap()).abs() < 1e-12);
}

#[test]
fn training_lowers_cycle_error() {
    let dir = TempDir::new().unwrap();
    // 200 steps: enough to reconstruct better than the near-zero output of fresh weights
    let cfg = TrainConfig { stride_x: 2, stride_y: 2, seed: 2, epochs: 20, ..TrainConfig::smoke() };
    let corpus = SynthConfig { seed: 8, n_videos: 5, frames_per_video: 6, size: 36 };
    let x = synth_generate(&dir.path().join("train"), Domain::X, Split::Train, &corpus).unwrap().dataset;
    let y = synth_generate(&dir.path().join("train"), Domain::Y, Split::Train, &corpus).unwrap().dataset;
    let data = TrainData::load(&x, &y, &cfg).unwrap();
    let out = train(&cfg, ModelKind::Temporal, &data, &dir.path().join("run"), None).unwrap();

    let fresh = dir.path().join("fresh.ckpt");
    TrainState::new(cfg.clone(), ModelKind::Temporal).unwrap().save(&fresh).unwrap();
    let test = test_videos(&dir.path().join("test"), 2);
    let trained = evaluate_model(&out.final_checkpoint, &test, Direction::XToY).unwrap();
    let initial = evaluate_model(&fresh, &test, Direction::XToY).unwrap();
    assert!(
        trained.mean_cycle_error < initial.mean_cycle_error,
        "trained {} vs untrained {}",
        trained.mean_cycle_error,
        initial.mean_cycle_error
    );
}

#[test]
fn report_is_written_with_parents() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("a/b/report.csv");
    write_report(&path, "x\n").unwrap();
    assert_eq!(std::fs::read_to_string(path).unwrap(), "x\n");
}
