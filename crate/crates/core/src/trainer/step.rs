use tempcycle_autograd::{Adam, Gradients, Graph, Tensor, Var};

use super::buffer::FakePair;
use super::state::{ModelKind, TrainState};
use crate::data::FrameTriplet;
use crate::error::{Error, Result};
use crate::losses::{
    assemble_generator_objective, assemble_generator_objective_graph, cycle_loss, l1,
    lsgan_d_loss, lsgan_g_loss, temporal_match_loss, GeneratorTerms, LossReport, LossWeights,
    PairVars,
};
use crate::nets::{BoundParams, Discriminator, Frame, Generator, ParamSet};

/// One training example.
#[derive(Debug, Clone, Copy)]
pub enum Sample<'s> {
    Temporal(&'s FrameTriplet, &'s FrameTriplet),
    Baseline(&'s Frame, &'s Frame),
}

/// Generated samples the discriminators see after the generator update.
struct Fakes {
    /// Frames of interest in X (from F) and Y (from G).
    x: Vec<Tensor<f32>>,
    y: Vec<Tensor<f32>>,
    /// `[y'_{t-1}, y''_t]`-style pairs, temporal mode only.
    pair_x: Option<[Tensor<f32>; 2]>,
    pair_y: Option<[Tensor<f32>; 2]>,
}

struct GeneratorPass {
    terms: GeneratorTerms<f64>,
    grad_g: Vec<Tensor<f32>>,
    grad_f: Vec<Tensor<f32>>,
    fakes: Fakes,
}

/// Networks of one translation direction.
struct Direction<'n> {
    gen: &'n Generator,
    gen_p: &'n BoundParams,
    back: &'n Generator,
    back_p: &'n BoundParams,
    critic: &'n Discriminator,
    critic_p: &'n BoundParams,
    temporal_critic: Option<(&'n Discriminator, &'n BoundParams)>,
}

struct CycleOut {
    adv: Var,
    temp_adv: Option<Var>,
    cycle: Option<Var>,
    match_generated: Option<Var>,
    match_reconstructed: Option<Var>,
    interest: Vec<Var>,
    interest_pair: Option<[Var; 2]>,
}

fn collect_grads(grads: &Gradients<f32>, bound: &BoundParams, params: &ParamSet<f32>) -> Vec<Tensor<f32>> {
    bound
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(v, t)| grads.get_or_zeros(*v, t))
        .collect()
}

fn accumulate(acc: &mut Option<Vec<Tensor<f32>>>, grads: Vec<Tensor<f32>>) -> Result<()> {
    match acc {
        None => *acc = Some(grads),
        Some(sum) => {
            for (s, g) in sum.iter_mut().zip(&grads) {
                s.add_assign(g)?;
            }
        }
    }
    Ok(())
}

fn averaged(acc: Option<Vec<Tensor<f32>>>, n: usize) -> Vec<Tensor<f32>> {
    let mut grads = acc.unwrap_or_default();
    if n > 1 {
        for g in &mut grads {
            g.scale_assign(1.0 / n as f32);
        }
    }
    grads
}

fn apply_update(opt: &mut Adam<f32>, params: &mut ParamSet<f32>, grads: &[Tensor<f32>]) -> Result<()> {
    opt.update(&mut params.tensors_mut(), grads)?;
    Ok(())
}

fn value(g: &Graph<'_, f32>, v: Var) -> f64 {
    g.value(v).item() as f64
}

fn zero(g: &mut Graph<'_, f32>) -> Var {
    g.input(Tensor::scalar(0.0))
}

fn sum_opt(g: &mut Graph<'_, f32>, parts: &[Option<Var>]) -> Result<Option<Var>> {
    let present: Vec<Var> = parts.iter().flatten().copied().collect();
    Ok(match present.len() {
        0 => None,
        1 => Some(present[0]),
        _ => Some(g.sum_all(&present)?),
    })
}

fn mean_of(g: &mut Graph<'_, f32>, parts: &[Var]) -> Result<Var> {
    let s = g.sum_all(parts)?;
    Ok(g.scale(s, 1.0 / parts.len() as f64))
}

/// X -> Y -> X on a triplet: two generator runs, their reconstructions and
/// the adversarial and matching terms of this direction.
fn temporal_cycle(g: &mut Graph<'_, f32>, n: &Direction<'_>, src: [Var; 3], w: &LossWeights) -> Result<CycleOut> {
    let (e1, l1_) = n.gen.forward_pair(g, n.gen_p, src[0], src[1])?;
    let (e2, l2) = n.gen.forward_pair(g, n.gen_p, src[1], src[2])?;
    let mut adv = Vec::new();
    for frame in [l1_, l2] {
        let score = n.critic.forward(g, n.critic_p, frame)?;
        adv.push(lsgan_g_loss(g, score)?);
    }
    let adv = mean_of(g, &adv)?;
    let temp_adv = match n.temporal_critic {
        Some((d, p)) => {
            let pair = g.concat_channels(&[l1_, l2])?;
            let score = d.forward(g, p, pair)?;
            Some(lsgan_g_loss(g, score)?)
        }
        None => None,
    };
    let match_generated = temporal_match_loss(g, l1_, e2)?;
    let (mut cycle, mut match_reconstructed) = (None, None);
    if w.lambda > 0.0 || w.mu > 0.0 {
        let (re1, rl1) = n.back.forward_pair(g, n.back_p, e1, l1_)?;
        let (re2, rl2) = n.back.forward_pair(g, n.back_p, e2, l2)?;
        if w.lambda > 0.0 {
            let c1 = cycle_loss(g, PairVars::new(src[0], src[1]), PairVars::new(re1, rl1), 1.0)?;
            let c2 = cycle_loss(g, PairVars::new(src[1], src[2]), PairVars::new(re2, rl2), 1.0)?;
            cycle = Some(mean_of(g, &[c1, c2])?);
        }
        match_reconstructed = Some(temporal_match_loss(g, rl1, re2)?);
    }
    Ok(CycleOut {
        adv,
        temp_adv,
        cycle,
        match_generated: Some(match_generated),
        match_reconstructed,
        interest: vec![l1_, l2],
        interest_pair: Some([l1_, l2]),
    })
}

/// Single-frame X -> Y -> X.
fn baseline_cycle(g: &mut Graph<'_, f32>, n: &Direction<'_>, src: Var, w: &LossWeights) -> Result<CycleOut> {
    let fake = n.gen.forward(g, n.gen_p, src)?;
    let score = n.critic.forward(g, n.critic_p, fake)?;
    let adv = lsgan_g_loss(g, score)?;
    let cycle = if w.lambda > 0.0 {
        let rec = n.back.forward(g, n.back_p, fake)?;
        Some(l1(g, src, rec)?)
    } else {
        None
    };
    Ok(CycleOut {
        adv,
        temp_adv: None,
        cycle,
        match_generated: None,
        match_reconstructed: None,
        interest: vec![fake],
        interest_pair: None,
    })
}

/// `mean |gen(real) - real|`: the generator applied to its own target domain.
fn identity_term(g: &mut Graph<'_, f32>, gen: &Generator, p: &BoundParams, real: &[Var]) -> Result<Var> {
    let (input, out) = match real {
        [a, b] => {
            let (e, l) = gen.forward_pair(g, p, *a, *b)?;
            (g.concat_channels(&[*a, *b])?, g.concat_channels(&[e, l])?)
        }
        [a] => (*a, gen.forward(g, p, *a)?),
        _ => unreachable!("one or two frames"),
    };
    l1(g, out, input)
}

impl TrainState {
    /// One temporal step on an X triplet and a Y triplet.
    pub fn train_step(&mut self, x: &FrameTriplet, y: &FrameTriplet) -> Result<LossReport> {
        self.train_batch(&[Sample::Temporal(x, y)])
    }

    /// One per-frame step on an X frame and a Y frame.
    pub fn train_step_baseline(&mut self, x: &Frame, y: &Frame) -> Result<LossReport> {
        self.train_batch(&[Sample::Baseline(x, y)])
    }

    /// Generator update followed by D_X, D_Y, D_TX, D_TY updates. Gradients
    /// are averaged over the samples.
    pub fn train_batch(&mut self, samples: &[Sample<'_>]) -> Result<LossReport> {
        if samples.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        for s in samples {
            self.check_sample(s)?;
        }
        let weights = self.config.weights();
        let mut passes = Vec::with_capacity(samples.len());
        let (mut acc_g, mut acc_f) = (None, None);
        for s in samples {
            let pass = self.generator_pass(s, &weights)?;
            accumulate(&mut acc_g, pass.grad_g)?;
            accumulate(&mut acc_f, pass.grad_f)?;
            passes.push((pass.terms, pass.fakes));
        }
        let n = samples.len();
        apply_update(&mut self.opt_g, self.g.params_mut(), &averaged(acc_g, n))?;
        apply_update(&mut self.opt_f, self.f.params_mut(), &averaged(acc_f, n))?;

        let terms = mean_terms(passes.iter().map(|(t, _)| t));
        let (_, mut report) = assemble_generator_objective(&terms, &weights)?;

        // Fakes go through the histories in sample order so buffer draws are reproducible.
        let mut dx_batch = Vec::new();
        let mut dy_batch = Vec::new();
        let mut dtx_batch = Vec::new();
        let mut dty_batch = Vec::new();
        for (s, (_, fakes)) in samples.iter().zip(passes) {
            let (real_x, real_y) = real_frames(s);
            let hx = fakes.x.into_iter().map(|t| self.pool_x_query(t)).collect::<Result<Vec<_>>>()?;
            let hy = fakes.y.into_iter().map(|t| self.pool_y_query(t)).collect::<Result<Vec<_>>>()?;
            dx_batch.push(real_x.into_iter().zip(hx).collect::<Vec<_>>());
            dy_batch.push(real_y.into_iter().zip(hy).collect::<Vec<_>>());
            if let (Some(t), Sample::Temporal(xt, yt)) = (self.temporal.as_mut(), s) {
                for (fake, triplet, pool, batch) in [
                    (fakes.pair_x, *xt, &mut t.pool_tx, &mut dtx_batch),
                    (fakes.pair_y, *yt, &mut t.pool_ty, &mut dty_batch),
                ] {
                    let [a, b] = fake.expect("temporal pass yields pairs");
                    let item = pool.query(FakePair::of_interest(Frame::new(a)?, Frame::new(b)?)?);
                    let real = Tensor::concat_channels(&[
                        triplet.frames[1].tensor(),
                        triplet.frames[2].tensor(),
                    ])?;
                    batch.push(vec![(real, item.pair.stacked())]);
                }
            }
        }
        report.d_x = discriminator_update(&mut self.d_x, &mut self.opt_d_x, &dx_batch)?;
        report.d_y = discriminator_update(&mut self.d_y, &mut self.opt_d_y, &dy_batch)?;
        if let Some(t) = self.temporal.as_mut() {
            report.d_tx = Some(discriminator_update(&mut t.d_tx, &mut t.opt_d_tx, &dtx_batch)?);
            report.d_ty = Some(discriminator_update(&mut t.d_ty, &mut t.opt_d_ty, &dty_batch)?);
        }
        report.total_discriminators =
            report.d_x + report.d_y + report.d_tx.unwrap_or(0.0) + report.d_ty.unwrap_or(0.0);

        self.check_finite_params()?;
        self.step += 1;
        report.step = self.step;
        report.epoch = self.epoch;
        Ok(report)
    }

    fn pool_x_query(&mut self, t: Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.pool_x.query(Frame::new(t)?).into_tensor())
    }

    fn pool_y_query(&mut self, t: Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.pool_y.query(Frame::new(t)?).into_tensor())
    }

    fn check_sample(&self, s: &Sample<'_>) -> Result<()> {
        let size = self.config.image_size;
        let (kind_ok, (hx, wx), (hy, wy)) = match s {
            Sample::Temporal(x, y) => (self.kind == ModelKind::Temporal, x.size(), y.size()),
            Sample::Baseline(x, y) => (
                self.kind == ModelKind::Baseline,
                (x.height(), x.width()),
                (y.height(), y.width()),
            ),
        };
        if !kind_ok {
            return Err(Error::Config(format!(
                "sample type does not match {} training state",
                self.kind
            )));
        }
        if (hx, wx) != (size, size) || (hy, wy) != (size, size) {
            return Err(Error::Shape(format!(
                "training frames must be {size}x{size}, got X {hx}x{wx} and Y {hy}x{wy}"
            )));
        }
        Ok(())
    }

    fn check_finite_params(&self) -> Result<()> {
        let mut nets: Vec<(&str, &ParamSet<f32>)> = vec![
            ("G", self.g.params()),
            ("F", self.f.params()),
            ("D_X", self.d_x.params()),
            ("D_Y", self.d_y.params()),
        ];
        if let Some(t) = &self.temporal {
            nets.push(("D_TX", t.d_tx.params()));
            nets.push(("D_TY", t.d_ty.params()));
        }
        match nets.into_iter().find(|(_, p)| !p.all_finite()) {
            Some((name, _)) => Err(Error::NonFinite {
                component: format!("{name} parameters"),
            }),
            None => Ok(()),
        }
    }

    fn generator_pass(&self, s: &Sample<'_>, w: &LossWeights) -> Result<GeneratorPass> {
        let mut g = Graph::new();
        let pg = self.g.params().bind(&mut g, true);
        let pf = self.f.params().bind(&mut g, true);
        let pdx = self.d_x.params().bind(&mut g, false);
        let pdy = self.d_y.params().bind(&mut g, false);
        let temporal = self
            .temporal
            .as_ref()
            .map(|t| (t, t.d_tx.params().bind(&mut g, false), t.d_ty.params().bind(&mut g, false)));
        let forward = Direction {
            gen: &self.g,
            gen_p: &pg,
            back: &self.f,
            back_p: &pf,
            critic: &self.d_y,
            critic_p: &pdy,
            temporal_critic: temporal.as_ref().map(|(t, _, p)| (&t.d_ty, p)),
        };
        let reverse = Direction {
            gen: &self.f,
            gen_p: &pf,
            back: &self.g,
            back_p: &pg,
            critic: &self.d_x,
            critic_p: &pdx,
            temporal_critic: temporal.as_ref().map(|(t, p, _)| (&t.d_tx, p)),
        };

        let (fwd, rev, real_x, real_y) = match s {
            Sample::Temporal(x, y) => {
                let xs = x.frames.each_ref().map(|f| g.input(f.tensor().clone()));
                let ys = y.frames.each_ref().map(|f| g.input(f.tensor().clone()));
                let fwd = temporal_cycle(&mut g, &forward, xs, w)?;
                let rev = temporal_cycle(&mut g, &reverse, ys, w)?;
                (fwd, rev, vec![xs[1], xs[2]], vec![ys[1], ys[2]])
            }
            Sample::Baseline(x, y) => {
                let xv = g.input(x.tensor().clone());
                let yv = g.input(y.tensor().clone());
                let fwd = baseline_cycle(&mut g, &forward, xv, w)?;
                let rev = baseline_cycle(&mut g, &reverse, yv, w)?;
                (fwd, rev, vec![xv], vec![yv])
            }
        };

        let identity = if w.identity > 0.0 {
            let a = identity_term(&mut g, &self.g, &pg, &real_y)?;
            let b = identity_term(&mut g, &self.f, &pf, &real_x)?;
            Some(g.add(a, b)?)
        } else {
            None
        };
        let cycle_x = match fwd.cycle {
            Some(v) => v,
            None => zero(&mut g),
        };
        let cycle_y = match rev.cycle {
            Some(v) => v,
            None => zero(&mut g),
        };
        // Matching terms are grouped by the domain of the compared frames.
        let match_y = sum_opt(&mut g, &[fwd.match_generated, rev.match_reconstructed])?;
        let match_x = sum_opt(&mut g, &[rev.match_generated, fwd.match_reconstructed])?;
        let vars = GeneratorTerms {
            g_adv: fwd.adv,
            f_adv: rev.adv,
            g_temp_adv: fwd.temp_adv,
            f_temp_adv: rev.temp_adv,
            cycle_x,
            cycle_y,
            temporal_match_x: match_x,
            temporal_match_y: match_y,
            identity,
        };
        let total = assemble_generator_objective_graph(&mut g, &vars, w)?;
        let grads = g.backward(total)?;

        let opt = |v: Option<Var>| v.map(|v| value(&g, v));
        let terms = GeneratorTerms {
            g_adv: value(&g, vars.g_adv),
            f_adv: value(&g, vars.f_adv),
            g_temp_adv: opt(vars.g_temp_adv),
            f_temp_adv: opt(vars.f_temp_adv),
            cycle_x: value(&g, vars.cycle_x),
            cycle_y: value(&g, vars.cycle_y),
            temporal_match_x: opt(vars.temporal_match_x),
            temporal_match_y: opt(vars.temporal_match_y),
            identity: opt(vars.identity),
        };
        let take = |vs: &[Var]| vs.iter().map(|v| g.value(*v).clone()).collect::<Vec<_>>();
        let pair = |p: Option<[Var; 2]>| p.map(|[a, b]| [g.value(a).clone(), g.value(b).clone()]);
        let fakes = Fakes {
            x: take(&rev.interest),
            y: take(&fwd.interest),
            pair_x: pair(rev.interest_pair),
            pair_y: pair(fwd.interest_pair),
        };
        Ok(GeneratorPass {
            grad_g: collect_grads(&grads, &pg, self.g.params()),
            grad_f: collect_grads(&grads, &pf, self.f.params()),
            terms,
            fakes,
        })
    }
}

/// Real frames shown to D_X and D_Y: the two latest frames of each triplet,
/// matching the two frames of interest.
fn real_frames(s: &Sample<'_>) -> (Vec<Tensor<f32>>, Vec<Tensor<f32>>) {
    match s {
        Sample::Temporal(x, y) => (
            vec![x.frames[1].tensor().clone(), x.frames[2].tensor().clone()],
            vec![y.frames[1].tensor().clone(), y.frames[2].tensor().clone()],
        ),
        Sample::Baseline(x, y) => (vec![x.tensor().clone()], vec![y.tensor().clone()]),
    }
}

/// Halved least-squares update over `(real, fake)` pairs, averaged per sample
/// and across the batch. Returns the mean loss.
fn discriminator_update(
    d: &mut Discriminator,
    opt: &mut Adam<f32>,
    batch: &[Vec<(Tensor<f32>, Tensor<f32>)>],
) -> Result<f64> {
    let mut acc = None;
    let mut total = 0.0;
    for pairs in batch {
        let mut g = Graph::new();
        let p = d.params().bind(&mut g, true);
        let mut losses = Vec::new();
        for (real, fake) in pairs {
            let r = g.input(real.clone());
            let f = g.input(fake.clone());
            let rs = d.forward(&mut g, &p, r)?;
            let fs = d.forward(&mut g, &p, f)?;
            losses.push(lsgan_d_loss(&mut g, rs, fs)?);
        }
        let loss = mean_of(&mut g, &losses)?;
        total += value(&g, loss);
        let grads = g.backward(loss)?;
        accumulate(&mut acc, collect_grads(&grads, &p, d.params()))?;
    }
    let grads = averaged(acc, batch.len());
    apply_update(opt, d.params_mut(), &grads)?;
    Ok(total / batch.len() as f64)
}

fn mean_terms<'t>(terms: impl Iterator<Item = &'t GeneratorTerms<f64>>) -> GeneratorTerms<f64> {
    let all: Vec<_> = terms.collect();
    let n = all.len() as f64;
    let mean = |f: &dyn Fn(&GeneratorTerms<f64>) -> f64| all.iter().map(|t| f(t)).sum::<f64>() / n;
    let mean_opt = |f: &dyn Fn(&GeneratorTerms<f64>) -> Option<f64>| {
        all.iter().map(|t| f(t)).sum::<Option<f64>>().map(|s| s / n)
    };
    GeneratorTerms {
        g_adv: mean(&|t| t.g_adv),
        f_adv: mean(&|t| t.f_adv),
        g_temp_adv: mean_opt(&|t| t.g_temp_adv),
        f_temp_adv: mean_opt(&|t| t.f_temp_adv),
        cycle_x: mean(&|t| t.cycle_x),
        cycle_y: mean(&|t| t.cycle_y),
        temporal_match_x: mean_opt(&|t| t.temporal_match_x),
        temporal_match_y: mean_opt(&|t| t.temporal_match_y),
        identity: mean_opt(&|t| t.identity),
    }
}
