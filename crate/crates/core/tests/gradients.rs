//! Parameter gradients of composed objectives (networks + losses) against
//! central differences, in f64 on 8x8 frames with narrow networks.

use rand::Rng;
use tempcycle::losses::*;
use tempcycle::nets::*;
use tempcycle::seed;
use tempcycle_autograd::{Graph, Tensor, Var};

const SIZE: usize = 8;
const EPS: f64 = 1e-6;
const REL: f64 = 1e-3;
const SAMPLES_PER_NET: usize = 24;

#[derive(Clone)]
struct Nets {
    g: Generator<f64>,
    f: Generator<f64>,
    d_y: Discriminator<f64>,
    d_ty: Discriminator<f64>,
}

fn nets() -> Nets {
    let gen_cfg = GeneratorConfig {
        base_width: 2,
        ..GeneratorConfig::temporal(1.0)
    };
    let d_cfg = |frames| DiscriminatorConfig {
        frames,
        image_size: SIZE,
        base_width: 2,
        width_multiplier: 1.0,
    };
    let mut rng = seed::stream(21, "gradcheck");
    let mut nets = Nets {
        g: Generator::new(gen_cfg, &mut rng).unwrap(),
        f: Generator::new(gen_cfg, &mut rng).unwrap(),
        d_y: Discriminator::new(d_cfg(1), &mut rng).unwrap(),
        d_ty: Discriminator::new(d_cfg(2), &mut rng).unwrap(),
    };
    // Larger weights than the training init so gradients are not vanishingly small.
    for set in [nets.g.params_mut(), nets.f.params_mut(), nets.d_y.params_mut(), nets.d_ty.params_mut()] {
        for t in set.tensors_mut() {
            if t.shape().len() == 4 {
                t.scale_assign(10.0);
            }
        }
    }
    nets
}

fn frames() -> Vec<Tensor<f64>> {
    (0..4)
        .map(|i| Tensor::uniform(&[3, SIZE, SIZE], -1.0, 1.0, &mut seed::indexed_stream(22, "frame", i)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Objective {
    /// Adversarial (per-frame and temporal), cycle and temporal-matching terms.
    Generator,
    /// Halved discriminator loss on the frame of interest.
    Discriminator,
}

/// Builds the objective; returns it with bound handles in order G, F, D_Y, D_TY.
fn build<'a>(g: &mut Graph<'a, f64>, n: &'a Nets, x: &[Tensor<f64>], which: Objective, train: bool) -> (Var, Vec<Vec<Var>>) {
    let bg = n.g.params().bind(g, train);
    let bf = n.f.params().bind(g, train);
    let bdy = n.d_y.params().bind(g, train);
    let bdty = n.d_ty.params().bind(g, train);
    let xs: Vec<Var> = x.iter().map(|t| g.input(t.clone())).collect();

    // run 1 on (t-2, t-1), run 2 on (t-1, t)
    let (a1, a2) = n.g.forward_pair(g, &bg, xs[0], xs[1]).unwrap();
    let (b1, b2) = n.g.forward_pair(g, &bg, xs[1], xs[2]).unwrap();

    let loss = match which {
        Objective::Generator => {
            let s = n.d_y.forward(g, &bdy, a2).unwrap();
            let adv = lsgan_g_loss(g, s).unwrap();
            let pair = g.concat_channels(&[a2, b2]).unwrap();
            let st = n.d_ty.forward(g, &bdty, pair).unwrap();
            let temp_adv = lsgan_g_loss(g, st).unwrap();
            let (r1, r2) = n.f.forward_pair(g, &bf, a1, a2).unwrap();
            let cyc = cycle_loss(g, PairVars::new(xs[0], xs[1]), PairVars::new(r1, r2), 1.0).unwrap();
            let tm = temporal_match_loss(g, a2, b1).unwrap();
            let terms = GeneratorTerms {
                g_adv: adv,
                f_adv: adv,
                g_temp_adv: Some(temp_adv),
                f_temp_adv: None,
                cycle_x: cyc,
                cycle_y: cyc,
                temporal_match_x: Some(tm),
                temporal_match_y: None,
                identity: None,
            };
            assemble_generator_objective_graph(g, &terms, &LossWeights::default()).unwrap()
        }
        Objective::Discriminator => {
            let real = n.d_y.forward(g, &bdy, xs[3]).unwrap();
            let fake = n.d_y.forward(g, &bdy, a2).unwrap();
            let d = lsgan_d_loss(g, real, fake).unwrap();
            let real_pair = g.concat_channels(&[xs[2], xs[3]]).unwrap();
            let fake_pair = g.concat_channels(&[a2, b2]).unwrap();
            let rt = n.d_ty.forward(g, &bdty, real_pair).unwrap();
            let ft = n.d_ty.forward(g, &bdty, fake_pair).unwrap();
            let dt = lsgan_d_loss(g, rt, ft).unwrap();
            g.add(d, dt).unwrap()
        }
    };
    let handles = [bg, bf, bdy, bdty].iter().map(|b| b.vars().to_vec()).collect();
    (loss, handles)
}

fn value(n: &Nets, x: &[Tensor<f64>], which: Objective) -> f64 {
    let mut g = Graph::inference();
    let (loss, _) = build(&mut g, n, x, which, false);
    g.value(loss).item()
}

fn params_mut(n: &mut Nets, net: usize) -> &mut ParamSet<f64> {
    match net {
        0 => n.g.params_mut(),
        1 => n.f.params_mut(),
        2 => n.d_y.params_mut(),
        _ => n.d_ty.params_mut(),
    }
}

fn check(which: Objective, nets_to_check: &[usize]) {
    let base = nets();
    let x = frames();
    let mut g = Graph::new();
    let (loss, handles) = build(&mut g, &base, &x, which, true);
    let grads = g.backward(loss).unwrap();

    let mut rng = seed::stream(23, "pick");
    let mut checked = 0;
    for &net in nets_to_check {
        let mut probe = base.clone();
        let n_tensors = params_mut(&mut probe, net).len();
        for _ in 0..SAMPLES_PER_NET {
            let ti = rng.random_range(0..n_tensors);
            let numel = params_mut(&mut probe, net).tensors()[ti].numel();
            let ei = rng.random_range(0..numel);
            let like = params_mut(&mut probe, net).tensors()[ti].clone();
            let analytic = grads.get_or_zeros(handles[net][ti], &like).data()[ei];

            let orig = like.data()[ei];
            let mut shifted = |delta: f64| {
                params_mut(&mut probe, net).tensors_mut()[ti].data_mut()[ei] = orig + delta;
                value(&probe, &x, which)
            };
            let numeric = (shifted(EPS) - shifted(-EPS)) / (2.0 * EPS);
            params_mut(&mut probe, net).tensors_mut()[ti].data_mut()[ei] = orig;

            let name = &params_mut(&mut probe, net).names()[ti];
            assert!(
                (analytic - numeric).abs() <= REL * analytic.abs().max(numeric.abs()) + 1e-8,
                "{which:?} net {net} {name}[{ei}]: analytic {analytic} numeric {numeric}"
            );
            checked += 1;
        }
    }
    assert!(checked >= 20);
}

#[test]
fn generator_objective_gradients() {
    check(Objective::Generator, &[0, 1]);
}

#[test]
fn generator_objective_gradients_reach_critics() {
    check(Objective::Generator, &[2, 3]);
}

#[test]
fn discriminator_objective_gradients() {
    check(Objective::Discriminator, &[0, 2, 3]);
}

/// Both runs bind the same parameter handles, so the gradient of a sum over
/// runs equals the sum of the per-run gradients.
#[test]
fn shared_weights_accumulate_both_runs() {
    let n = nets();
    let x = frames();
    let grad_of = |runs: &[usize]| {
        let mut g = Graph::new();
        let bound = n.g.params().bind(&mut g, true);
        let xs: Vec<Var> = x.iter().map(|t| g.input(t.clone())).collect();
        let mut parts = Vec::new();
        for &r in runs {
            let (_, later) = n.g.forward_pair(&mut g, &bound, xs[r], xs[r + 1]).unwrap();
            let s = g.square(later);
            parts.push(g.mean(s));
        }
        let loss = g.sum_all(&parts).unwrap();
        let grads = g.backward(loss).unwrap();
        bound
            .vars()
            .iter()
            .zip(n.g.params().tensors())
            .map(|(v, t)| grads.get_or_zeros(*v, t))
            .collect::<Vec<_>>()
    };
    let both = grad_of(&[0, 1]);
    let first = grad_of(&[0]);
    let second = grad_of(&[1]);
    assert_eq!(both.len(), n.g.params().len());
    for ((b, f), s) in both.iter().zip(&first).zip(&second) {
        for ((b, f), s) in b.data().iter().zip(f.data()).zip(s.data()) {
            assert!((b - (f + s)).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }
}
