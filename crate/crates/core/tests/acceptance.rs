//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs the seed-pinned comparative protocol (two 1000-step trainings at
//! 64x64), so expect about half an hour on a single core.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use tempcycle::data::*;
use tempcycle::eval::compare_models;
use tempcycle::infer::Direction;
use tempcycle::losses::*;
use tempcycle::nets::*;
use tempcycle::seed;
use tempcycle::trainer::*;
use tempcycle_autograd::{Graph, Tensor, Var};
use tempfile::TempDir;

/// Master seed of the comparative and smoke protocols.
const PROTOCOL_SEED: u64 = 7;
const FLICKER_RATIO_BOUND: f64 = 0.8;
const COMPARATIVE_BUDGET: Duration = Duration::from_secs(2 * 3600);
const GRADIENT_REL_TOL: f64 = 1e-3;
const GRADIENT_BUDGET: Duration = Duration::from_secs(60);
const TOTAL_TOL: f64 = 1e-6;
const BUFFER_CAPACITY: usize = 50;
const BUFFER_TRIALS: usize = 10_000;
const BUFFER_TOL: f64 = 0.02;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---- gradients ----

fn value(inputs: &[Tensor<f64>], build: &dyn Fn(&mut Graph<'_, f64>, &[Var]) -> Var) -> f64 {
    let mut g = Graph::inference();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = build(&mut g, &vars);
    g.value(out).item()
}

/// Largest relative error between analytic and central-difference gradients.
fn worst_gradient_error(inputs: Vec<Tensor<f64>>, build: &dyn Fn(&mut Graph<'_, f64>, &[Var]) -> Var) -> f64 {
    const EPS: f64 = 1e-6;
    let mut g = Graph::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, &leaves);
    let grads = g.backward(out).expect("backward");
    let mut worst: f64 = 0.0;
    for (li, leaf) in leaves.iter().enumerate() {
        let analytic = grads.get_or_zeros(*leaf, &inputs[li]);
        for i in 0..inputs[li].numel() {
            let mut plus = inputs.clone();
            plus[li].data_mut()[i] += EPS;
            let mut minus = inputs.clone();
            minus[li].data_mut()[i] -= EPS;
            let numeric = (value(&plus, build) - value(&minus, build)) / (2.0 * EPS);
            let a = analytic.data()[i];
            let scale = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    worst
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let rand = |shape: &[usize], i: u64| Tensor::<f64>::randn(shape, 1.0, &mut seed::indexed_stream(1, "accept.grad", i));
    let frame = |i: u64| rand(&[3, 4, 4], i);
    let score = |i: u64| rand(&[1, 4, 4], 100 + i);
    let cases: [(&str, Vec<Tensor<f64>>, &dyn Fn(&mut Graph<'_, f64>, &[Var]) -> Var); 4] = [
        ("cycle", vec![frame(0), frame(1), frame(2), frame(3)], &|g, v| {
            cycle_loss(g, PairVars::new(v[0], v[1]), PairVars::new(v[2], v[3]), 10.0).unwrap()
        }),
        ("temporal_match", vec![frame(4), frame(5)], &|g, v| temporal_match_loss(g, v[0], v[1]).unwrap()),
        ("lsgan_d", vec![score(0), score(1)], &|g, v| lsgan_d_loss(g, v[0], v[1]).unwrap()),
        ("lsgan_g", vec![score(2)], &|g, v| lsgan_g_loss(g, v[0]).unwrap()),
    ];
    let mut details = Vec::new();
    for (name, inputs, build) in cases {
        let worst = worst_gradient_error(inputs, build);
        ensure(worst <= GRADIENT_REL_TOL, format!("{name}: relative error {worst:.2e}"))?;
        details.push(format!("{name} {worst:.1e}"));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < GRADIENT_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!("max rel err {} in {:.2?}", details.join(", "), elapsed))
}

// ---- loss identities ----

fn loss_identities() -> Check {
    let a = Tensor::<f64>::randn(&[3, 4, 4], 1.0, &mut seed::stream(2, "accept.a"));
    let b = Tensor::<f64>::randn(&[3, 4, 4], 1.0, &mut seed::stream(2, "accept.b"));
    for lambda in [0.0, 1.0, 10.0] {
        let c = value(&[a.clone(), b.clone()], &|g, v| {
            cycle_loss(g, PairVars::new(v[0], v[1]), PairVars::new(v[0], v[1]), lambda).unwrap()
        });
        ensure(c == 0.0, format!("cycle_loss(a, a, {lambda}) = {c}"))?;
    }
    let ones = Tensor::<f64>::ones(&[1, 4, 4]);
    let zeros = Tensor::<f64>::zeros(&[1, 4, 4]);
    let d = value(&[ones, zeros], &|g, v| lsgan_d_loss(g, v[0], v[1]).unwrap());
    ensure(d == 0.0, format!("lsgan_d_loss(1, 0) = {d}"))?;

    // dyadic scores keep every intermediate exact
    let real = Tensor::new(vec![1, 2, 2], vec![0.5, 1.0, 1.5, 0.25]).unwrap();
    let fake = Tensor::new(vec![1, 2, 2], vec![0.0, -0.5, 0.75, 1.0]).unwrap();
    let unhalved = real.data().iter().map(|r| (r - 1.0) * (r - 1.0)).sum::<f64>() / 4.0
        + fake.data().iter().map(|f| f * f).sum::<f64>() / 4.0;
    let halved = value(&[real, fake], &|g, v| lsgan_d_loss(g, v[0], v[1]).unwrap());
    ensure(halved == 0.5 * unhalved, format!("D objective {halved} vs 0.5 x {unhalved}"))?;

    let terms = GeneratorTerms {
        g_adv: 0.31,
        f_adv: 0.27,
        g_temp_adv: Some(0.45),
        f_temp_adv: Some(0.12),
        cycle_x: 0.52,
        cycle_y: 0.48,
        temporal_match_x: Some(0.07),
        temporal_match_y: Some(0.09),
        identity: Some(0.2),
    };
    let w = LossWeights { lambda: 10.0, mu: 10.0, identity: 0.5 };
    let (total, _) = ok(assemble_generator_objective(&terms, &w))?;
    let by_hand = 0.31 + 0.27 + 0.45 + 0.12 + 10.0 * (0.52 + 0.48) + 10.0 * (0.07 + 0.09) + 0.5 * 0.2;
    ensure((total - by_hand).abs() <= TOTAL_TOL, format!("total {total} vs hand sum {by_hand}"))?;
    Ok(format!("halved D exact, total {total:.4} = hand sum"))
}

// ---- architecture ----

fn architecture_conformance() -> Check {
    let g = ok(Generator::<f32>::new(GeneratorConfig::temporal(1.0), &mut seed::stream(3, "accept.G")))?;
    ensure(g.residual_block_count() == 8, format!("{} residual blocks", g.residual_block_count()))?;
    ensure(g.input_channels() == 6 && g.output_channels() == 6, "generator I/O is not 6 channels")?;
    let mut rfs = Vec::new();
    for size in [32, 64, 256] {
        for cfg in [DiscriminatorConfig::per_frame(size, 1.0), DiscriminatorConfig::temporal(size, 1.0)] {
            ensure(cfg.receptive_field() >= size, format!("receptive field {} < {size}", cfg.receptive_field()))?;
        }
        let dt = ok(Discriminator::<f32>::new(DiscriminatorConfig::temporal(size, 0.25), &mut seed::stream(3, "accept.D")))?;
        ensure(dt.input_channels() == 6, "temporal discriminator input is not 6 channels")?;
        rfs.push(format!("{size}->{}", DiscriminatorConfig::per_frame(size, 1.0).receptive_field()));
    }
    Ok(format!("8 residual blocks, 6-channel I/O, receptive fields {}", rfs.join(" ")))
}

// ---- replay buffer ----

fn replay_buffer() -> Check {
    let mut buf = ReplayBuffer::new(BUFFER_CAPACITY, seed::stream(PROTOCOL_SEED, "accept.pool"));
    for i in 0..BUFFER_CAPACITY {
        ensure(buf.query(i) == i, "filling buffer did not return the incoming item")?;
    }
    let mut fresh = 0;
    for i in 0..BUFFER_TRIALS {
        let item = 1_000_000 + i;
        if buf.query(item) == item {
            fresh += 1;
        }
        ensure(buf.len() <= BUFFER_CAPACITY, format!("buffer grew to {}", buf.len()))?;
    }
    let p = fresh as f64 / BUFFER_TRIALS as f64;
    ensure((p - 0.5).abs() <= BUFFER_TOL, format!("incoming returned with frequency {p}"))?;
    Ok(format!("capacity {BUFFER_CAPACITY} held, incoming frequency {p:.4}"))
}

// ---- data pipeline ----

fn sentinel(id: usize, size: usize) -> Frame {
    let n = size * size;
    let mut data = vec![0f32; 3 * n];
    for i in 0..n {
        data[i] = (id as f32 - 1.0) * 0.5;
        data[n + i] = (i / size) as f32 / size as f32;
        data[2 * n + i] = (i % size) as f32 / size as f32;
    }
    Frame::new(Tensor::new(vec![3, size, size], data).unwrap()).unwrap()
}

fn data_pipeline() -> Check {
    for n in 0..=1000 {
        for stride in [1, 120, 240] {
            let expected: Vec<usize> = (0..n).filter(|s| s % stride == 0 && s + 2 < n).collect();
            let got = ok(triplet_starts(n, stride))?;
            ensure(got == expected, format!("triplets differ for n={n} stride={stride}"))?;
        }
    }

    let t = ok(FrameTriplet::new([sentinel(0, 40), sentinel(1, 40), sentinel(2, 40)], "v", 0))?;
    for s in 0..200 {
        let out = ok(augment(&t, &mut seed::indexed_stream(PROTOCOL_SEED, "accept.aug", s), 32))?;
        let coords = |f: &Frame| f.tensor().data()[32 * 32..].to_vec();
        let first = coords(&out.frames[0]);
        ensure(
            first == coords(&out.frames[1]) && first == coords(&out.frames[2]),
            format!("draw {s}: crop or flip differs across the triplet"),
        )?;
    }

    let img = image::RgbImage::from_fn(4, 2, |x, _| if x % 2 == 0 { image::Rgb([0, 0, 0]) } else { image::Rgb([255, 255, 255]) });
    let f = frame_from_rgb(&img);
    for (i, v) in f.tensor().data().iter().enumerate() {
        let x = i % 4;
        let expected = if x % 2 == 0 { -1.0 } else { 1.0 };
        ensure(*v == expected, format!("pixel maps to {v}, expected {expected}"))?;
    }
    Ok("enumeration oracle N<=1000, shared crop/flip, 0->-1 and 255->1 exact".into())
}

// ---- smoke protocol: determinism and training progress ----

struct Smoke {
    _dir: TempDir,
    data: TrainData,
    config: TrainConfig,
    root: std::path::PathBuf,
}

/// The `--smoke` corpus and preset.
fn smoke() -> Smoke {
    let dir = TempDir::new().unwrap();
    let root = dir.path().to_path_buf();
    let corpus = SynthConfig { seed: PROTOCOL_SEED, n_videos: 4, frames_per_video: 12, size: 36 };
    let x = synth_generate(&root.join("data"), Domain::X, Split::Train, &corpus).unwrap().dataset;
    let y = synth_generate(&root.join("data"), Domain::Y, Split::Train, &corpus).unwrap().dataset;
    let config = TrainConfig { seed: PROTOCOL_SEED, ..TrainConfig::smoke() };
    let data = TrainData::load(&x, &y, &config).unwrap();
    Smoke { _dir: dir, data, config, root }
}

fn determinism(s: &Smoke) -> Check {
    let a = ok(train(&s.config, ModelKind::Temporal, &s.data, &s.root.join("a"), None))?;
    let b = ok(train(&s.config, ModelKind::Temporal, &s.data, &s.root.join("b"), None))?;
    let log_a = ok(fs::read(&a.loss_log))?;
    ensure(log_a == ok(fs::read(&b.loss_log))?, "loss logs differ between identical runs")?;
    ensure(
        ok(fs::read(&a.final_checkpoint))? == ok(fs::read(&b.final_checkpoint))?,
        "final checkpoints differ between identical runs",
    )?;

    let every = TrainConfig { checkpoint_every: 10, ..s.config.clone() };
    let full = ok(train(&every, ModelKind::Temporal, &s.data, &s.root.join("full"), None))?;
    let mid = checkpoint_path(&s.root.join("full"), 10);
    let resumed = ok(train(&every, ModelKind::Temporal, &s.data, &s.root.join("resumed"), Some(&mid)))?;
    ensure(resumed.reports == full.reports[10..], "resumed losses differ from the uninterrupted run")?;
    ensure(
        ok(fs::read(&resumed.final_checkpoint))? == ok(fs::read(&full.final_checkpoint))?,
        "resumed final checkpoint differs",
    )?;
    Ok(format!("{} steps twice bit-identical; resume from step 10 bit-identical", a.reports.len()))
}

fn training_progress(s: &Smoke) -> Check {
    let out = ok(train(&s.config, ModelKind::Temporal, &s.data, &s.root.join("progress"), None))?;
    let n = out.reports.len();
    let k = (n / 10).max(1);
    let mean = |r: &[LossReport]| r.iter().map(|r| r.cycle_error()).sum::<f64>() / r.len() as f64;
    let (first, last) = (mean(&out.reports[..k]), mean(&out.reports[n - k..]));
    ensure(last < first, format!("cycle error first {first:.4}, last {last:.4} over {k} of {n} steps"))?;
    Ok(format!("cycle error {first:.4} -> {last:.4} (first/last {k} of {n} steps)"))
}

// ---- comparative reproduction ----

fn comparative_reproduction() -> Check {
    let start = Instant::now();
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    let train_corpus = SynthConfig { seed: PROTOCOL_SEED, n_videos: 10, frames_per_video: 15, size: 72 };
    let test_corpus = SynthConfig { seed: PROTOCOL_SEED, n_videos: 4, frames_per_video: 30, size: 72 };
    let data_root = root.join("data");
    let x = ok(synth_generate(&data_root, Domain::X, Split::Train, &train_corpus))?.dataset;
    let y = ok(synth_generate(&data_root, Domain::Y, Split::Train, &train_corpus))?.dataset;
    let test = ok(synth_generate(&data_root, Domain::X, Split::Test, &test_corpus))?.dataset;

    let config = protocol_config();
    let data = ok(TrainData::load(&x, &y, &config))?;
    ensure(data.x.len() == 50 && data.y.len() == 50, format!("{} / {} triplets", data.x.len(), data.y.len()))?;
    let temporal = ok(train(&config, ModelKind::Temporal, &data, &root.join("temporal"), None))?;
    eprintln!("  temporal model trained in {:.0?}", start.elapsed());
    let baseline = ok(train(&config, ModelKind::Baseline, &data, &root.join("baseline"), None))?;
    eprintln!("  baseline model trained in {:.0?}", start.elapsed());
    let report = ok(compare_models(&temporal.final_checkpoint, &baseline.final_checkpoint, &test, Direction::XToY))?;
    let elapsed = start.elapsed();
    let detail = format!(
        "flicker {:.5} vs baseline {:.5}, ratio {:.4} (bound {FLICKER_RATIO_BOUND}), {} videos, {:.0?}",
        report.mean_candidate,
        report.mean_baseline,
        report.ratio,
        report.rows.len(),
        elapsed
    );
    ensure(report.mean_candidate < report.mean_baseline, detail.clone())?;
    ensure(report.ratio <= FLICKER_RATIO_BOUND, detail.clone())?;
    ensure(elapsed <= COMPARATIVE_BUDGET, detail.clone())?;
    Ok(detail)
}

/// 64x64, width 0.5, 20 epochs over 50 triplets per domain (stride 3 on 15-frame videos).
fn protocol_config() -> TrainConfig {
    TrainConfig {
        image_size: 64,
        width_multiplier: 0.5,
        epochs: 20,
        stride_x: 3,
        stride_y: 3,
        seed: PROTOCOL_SEED,
        ..TrainConfig::default()
    }
}

fn run(name: &str, check: impl FnOnce() -> Check) -> bool {
    let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match result {
        Ok(detail) => {
            println!("PASS {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL {name}: {detail}");
            false
        }
    }
}

fn main() -> ExitCode {
    let smoke = smoke();
    let results = [
        run("gradient correctness", gradient_correctness),
        run("loss identities", loss_identities),
        run("architecture conformance", architecture_conformance),
        run("replay buffer", replay_buffer),
        run("data pipeline", data_pipeline),
        run("determinism", || determinism(&smoke)),
        run("comparative reproduction", comparative_reproduction),
        run("training progress", || training_progress(&smoke)),
    ];
    let failed = results.iter().filter(|r| !**r).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    // The report is the product; set ACCEPTANCE_STRICT=1 to turn failures into a non-zero exit.
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
