use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tempcycle_autograd::{Adam, AdamConfig, Tensor};

use super::buffer::{FakePair, FrameOrigin, ReplayBuffer};
use super::config::TrainConfig;
use crate::checkpoint::{checkpoint_error, Container, Section};
use crate::error::{Error, Result};
use crate::nets::{
    Discriminator, DiscriminatorConfig, Frame, FramePair, Generator, GeneratorConfig, ParamSet,
};
use crate::seed::{self, RngSnapshot};

/// Which model family is being trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Two-frame generators plus temporal discriminators.
    Temporal,
    /// Per-frame generators, no temporal terms.
    Baseline,
}

impl ModelKind {
    pub fn frames(self) -> usize {
        match self {
            ModelKind::Temporal => 2,
            ModelKind::Baseline => 1,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Temporal => "temporal",
            ModelKind::Baseline => "baseline",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temporal" => Ok(ModelKind::Temporal),
            "baseline" => Ok(ModelKind::Baseline),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Temporal discriminators with their optimizers and pair histories.
#[derive(Debug, Clone)]
pub struct TemporalCritics {
    pub d_tx: Discriminator,
    pub d_ty: Discriminator,
    pub opt_d_tx: Adam<f32>,
    pub opt_d_ty: Adam<f32>,
    pub pool_tx: ReplayBuffer<FakePair>,
    pub pool_ty: ReplayBuffer<FakePair>,
}

/// Everything needed to continue training bit-identically.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub kind: ModelKind,
    /// X -> Y generator.
    pub g: Generator,
    /// Y -> X generator.
    pub f: Generator,
    pub d_x: Discriminator,
    pub d_y: Discriminator,
    pub opt_g: Adam<f32>,
    pub opt_f: Adam<f32>,
    pub opt_d_x: Adam<f32>,
    pub opt_d_y: Adam<f32>,
    pub pool_x: ReplayBuffer<Frame>,
    pub pool_y: ReplayBuffer<Frame>,
    /// `None` for the baseline.
    pub temporal: Option<TemporalCritics>,
    /// Completed steps.
    pub step: u64,
    /// Zero-based epoch of the next step.
    pub epoch: u32,
    /// Steps already taken in the current epoch.
    pub step_in_epoch: u64,
}

fn adam_for(config: AdamConfig, params: &ParamSet<f32>) -> Adam<f32> {
    Adam::new(config, &params.tensors().iter().collect::<Vec<_>>())
}

impl TrainState {
    pub fn new(config: TrainConfig, kind: ModelKind) -> Result<Self> {
        config.validate()?;
        let s = config.seed;
        let gen_cfg = generator_config(&config, kind);
        let g = Generator::new(gen_cfg, &mut seed::stream(s, "init.G"))?;
        let f = Generator::new(gen_cfg, &mut seed::stream(s, "init.F"))?;
        let per_frame = DiscriminatorConfig::per_frame(config.image_size, config.width_multiplier);
        let d_x = Discriminator::new(per_frame, &mut seed::stream(s, "init.D_X"))?;
        let d_y = Discriminator::new(per_frame, &mut seed::stream(s, "init.D_Y"))?;
        let adam = config.adam();
        let cap = config.buffer_capacity;
        let temporal = match kind {
            ModelKind::Baseline => None,
            ModelKind::Temporal => {
                let tcfg = DiscriminatorConfig::temporal(config.image_size, config.width_multiplier);
                let d_tx = Discriminator::new(tcfg, &mut seed::stream(s, "init.D_TX"))?;
                let d_ty = Discriminator::new(tcfg, &mut seed::stream(s, "init.D_TY"))?;
                Some(TemporalCritics {
                    opt_d_tx: adam_for(adam, d_tx.params()),
                    opt_d_ty: adam_for(adam, d_ty.params()),
                    d_tx,
                    d_ty,
                    pool_tx: ReplayBuffer::new(cap, seed::stream(s, "pool.TX")),
                    pool_ty: ReplayBuffer::new(cap, seed::stream(s, "pool.TY")),
                })
            }
        };
        Ok(Self {
            opt_g: adam_for(adam, g.params()),
            opt_f: adam_for(adam, f.params()),
            opt_d_x: adam_for(adam, d_x.params()),
            opt_d_y: adam_for(adam, d_y.params()),
            pool_x: ReplayBuffer::new(cap, seed::stream(s, "pool.X")),
            pool_y: ReplayBuffer::new(cap, seed::stream(s, "pool.Y")),
            config,
            kind,
            g,
            f,
            d_x,
            d_y,
            temporal,
            step: 0,
            epoch: 0,
            step_in_epoch: 0,
        })
    }

    pub fn all_params_finite(&self) -> bool {
        let mut ok = self.g.params().all_finite()
            && self.f.params().all_finite()
            && self.d_x.params().all_finite()
            && self.d_y.params().all_finite();
        if let Some(t) = &self.temporal {
            ok &= t.d_tx.params().all_finite() && t.d_ty.params().all_finite();
        }
        ok
    }

    pub fn to_container(&self) -> Container {
        let mut sections = vec![
            Section::from_params("G", self.g.params()),
            Section::from_params("F", self.f.params()),
            Section::from_params("D_X", self.d_x.params()),
            Section::from_params("D_Y", self.d_y.params()),
        ];
        let mut adam_steps = vec![
            ("G".to_string(), self.opt_g.step),
            ("F".to_string(), self.opt_f.step),
            ("D_X".to_string(), self.opt_d_x.step),
            ("D_Y".to_string(), self.opt_d_y.step),
        ];
        sections.push(adam_section("G", &self.opt_g));
        sections.push(adam_section("F", &self.opt_f));
        sections.push(adam_section("D_X", &self.opt_d_x));
        sections.push(adam_section("D_Y", &self.opt_d_y));
        sections.push(frame_pool_section("X", &self.pool_x));
        sections.push(frame_pool_section("Y", &self.pool_y));
        let mut pools = vec![
            pool_header("X", &self.pool_x, Vec::new()),
            pool_header("Y", &self.pool_y, Vec::new()),
        ];
        if let Some(t) = &self.temporal {
            sections.push(Section::from_params("D_TX", t.d_tx.params()));
            sections.push(Section::from_params("D_TY", t.d_ty.params()));
            sections.push(adam_section("D_TX", &t.opt_d_tx));
            sections.push(adam_section("D_TY", &t.opt_d_ty));
            adam_steps.push(("D_TX".into(), t.opt_d_tx.step));
            adam_steps.push(("D_TY".into(), t.opt_d_ty.step));
            for (name, pool) in [("TX", &t.pool_tx), ("TY", &t.pool_ty)] {
                let mut s = Section::new(format!("pool.{name}"));
                for (i, item) in pool.items().iter().enumerate() {
                    s.push(format!("item.{i}"), &item.pair.stacked());
                }
                sections.push(s);
                let origins = pool
                    .items()
                    .iter()
                    .map(|p| p.origin.map(|o| [o.run, o.slot]))
                    .collect();
                pools.push(pool_header(name, pool, origins));
            }
        }
        let header = CheckpointHeader {
            kind: self.kind,
            generator: *self.g.config(),
            config: self.config.clone(),
            step: self.step,
            epoch: self.epoch,
            step_in_epoch: self.step_in_epoch,
            adam_steps,
            pools,
        };
        Container {
            header: serde_json::to_value(&header).expect("header serializes"),
            sections,
        }
    }

    pub fn from_container(c: &Container, path: &Path) -> Result<Self> {
        let bad = |reason: String| checkpoint_error(path, reason);
        let header = CheckpointHeader::from_container(c, path)?;
        let mut state = Self::new(header.config.clone(), header.kind)?;
        state.step = header.step;
        state.epoch = header.epoch;
        state.step_in_epoch = header.step_in_epoch;
        load_net(c, "G", state.g.params_mut(), path)?;
        load_net(c, "F", state.f.params_mut(), path)?;
        load_net(c, "D_X", state.d_x.params_mut(), path)?;
        load_net(c, "D_Y", state.d_y.params_mut(), path)?;
        let adam_step = |name: &str| {
            header
                .adam_steps
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, s)| *s)
                .ok_or_else(|| bad(format!("missing optimizer step for {name}")))
        };
        load_adam(c, "G", adam_step("G")?, &mut state.opt_g, path)?;
        load_adam(c, "F", adam_step("F")?, &mut state.opt_f, path)?;
        load_adam(c, "D_X", adam_step("D_X")?, &mut state.opt_d_x, path)?;
        load_adam(c, "D_Y", adam_step("D_Y")?, &mut state.opt_d_y, path)?;
        let pool_meta = |name: &str| {
            header
                .pools
                .iter()
                .find(|p| p.name == name)
                .ok_or_else(|| bad(format!("missing pool metadata for {name}")))
        };
        state.pool_x = load_frame_pool(c, pool_meta("X")?, path)?;
        state.pool_y = load_frame_pool(c, pool_meta("Y")?, path)?;
        if let Some(t) = state.temporal.as_mut() {
            load_net(c, "D_TX", t.d_tx.params_mut(), path)?;
            load_net(c, "D_TY", t.d_ty.params_mut(), path)?;
            load_adam(c, "D_TX", adam_step("D_TX")?, &mut t.opt_d_tx, path)?;
            load_adam(c, "D_TY", adam_step("D_TY")?, &mut t.opt_d_ty, path)?;
            t.pool_tx = load_pair_pool(c, pool_meta("TX")?, path)?;
            t.pool_ty = load_pair_pool(c, pool_meta("TY")?, path)?;
        }
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?, path)
    }
}

pub(crate) fn generator_config(config: &TrainConfig, kind: ModelKind) -> GeneratorConfig {
    GeneratorConfig {
        frames: kind.frames(),
        residual_blocks: config.residual_blocks,
        ..GeneratorConfig::temporal(config.width_multiplier)
    }
}

/// JSON header stored in every training checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    pub generator: GeneratorConfig,
    pub config: TrainConfig,
    pub step: u64,
    pub epoch: u32,
    pub step_in_epoch: u64,
    pub adam_steps: Vec<(String, u64)>,
    pub pools: Vec<PoolHeader>,
}

impl CheckpointHeader {
    pub fn from_container(c: &Container, path: &Path) -> Result<Self> {
        serde_json::from_value(c.header.clone())
            .map_err(|e| checkpoint_error(path, format!("header: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolHeader {
    pub name: String,
    pub capacity: usize,
    pub len: usize,
    pub rng: RngSnapshot,
    /// `[run, slot]` tags per stored pair; empty for single-frame pools.
    pub origins: Vec<[[u8; 2]; 2]>,
}

fn pool_header<I: Clone>(name: &str, pool: &ReplayBuffer<I>, origins: Vec<[[u8; 2]; 2]>) -> PoolHeader {
    PoolHeader {
        name: name.to_string(),
        capacity: pool.capacity(),
        len: pool.len(),
        rng: pool.rng_snapshot(),
        origins,
    }
}

fn adam_section(name: &str, opt: &Adam<f32>) -> Section {
    let mut s = Section::new(format!("adam.{name}"));
    for (i, (m, v)) in opt.first_moments.iter().zip(&opt.second_moments).enumerate() {
        s.push(format!("m.{i}"), m);
        s.push(format!("v.{i}"), v);
    }
    s
}

fn frame_pool_section(name: &str, pool: &ReplayBuffer<Frame>) -> Section {
    let mut s = Section::new(format!("pool.{name}"));
    for (i, item) in pool.items().iter().enumerate() {
        s.push(format!("item.{i}"), item.tensor());
    }
    s
}

fn section<'c>(c: &'c Container, name: &str, path: &Path) -> Result<&'c Section> {
    c.section(name)
        .ok_or_else(|| checkpoint_error(path, format!("missing section {name}")))
}

fn load_net(c: &Container, name: &str, params: &mut ParamSet<f32>, path: &Path) -> Result<()> {
    let loaded = section(c, name, path)?
        .to_params()
        .map_err(|e| checkpoint_error(path, e))?;
    params
        .load_from(&loaded)
        .map_err(|e| checkpoint_error(path, format!("{name}: {e}")))
}

fn load_adam(c: &Container, name: &str, step: u64, opt: &mut Adam<f32>, path: &Path) -> Result<()> {
    let s = section(c, &format!("adam.{name}"), path)?;
    let n = opt.first_moments.len();
    if s.arrays.len() != 2 * n {
        return Err(checkpoint_error(
            path,
            format!("adam.{name}: {} arrays for {n} parameters", s.arrays.len()),
        ));
    }
    for i in 0..n {
        for (key, slot) in [("m", &mut opt.first_moments[i]), ("v", &mut opt.second_moments[i])] {
            let t: Tensor<f32> = s
                .get(&format!("{key}.{i}"))
                .ok_or_else(|| checkpoint_error(path, format!("adam.{name}: missing {key}.{i}")))?
                .to_tensor()
                .map_err(|e| checkpoint_error(path, e))?;
            if t.shape() != slot.shape() {
                return Err(checkpoint_error(path, format!("adam.{name}: {key}.{i} shape")));
            }
            *slot = t;
        }
    }
    opt.step = step;
    Ok(())
}

fn pool_tensors(c: &Container, meta: &PoolHeader, path: &Path) -> Result<(Vec<Tensor<f32>>, rand_chacha::ChaCha8Rng)> {
    let s = section(c, &format!("pool.{}", meta.name), path)?;
    if s.arrays.len() != meta.len || meta.len > meta.capacity {
        return Err(checkpoint_error(path, format!("pool.{} length", meta.name)));
    }
    let items = (0..meta.len)
        .map(|i| {
            s.get(&format!("item.{i}"))
                .ok_or_else(|| checkpoint_error(path, format!("pool.{}: item.{i}", meta.name)))?
                .to_tensor()
                .map_err(|e| checkpoint_error(path, e))
        })
        .collect::<Result<Vec<_>>>()?;
    let rng = meta
        .rng
        .restore()
        .ok_or_else(|| checkpoint_error(path, format!("pool.{}: bad rng state", meta.name)))?;
    Ok((items, rng))
}

fn load_frame_pool(c: &Container, meta: &PoolHeader, path: &Path) -> Result<ReplayBuffer<Frame>> {
    let (tensors, rng) = pool_tensors(c, meta, path)?;
    let items = tensors.into_iter().map(Frame::new).collect::<Result<Vec<_>>>()?;
    Ok(ReplayBuffer::restore(meta.capacity, items, rng))
}

fn load_pair_pool(c: &Container, meta: &PoolHeader, path: &Path) -> Result<ReplayBuffer<FakePair>> {
    let (tensors, rng) = pool_tensors(c, meta, path)?;
    if meta.origins.len() != tensors.len() {
        return Err(checkpoint_error(path, format!("pool.{}: origin tags", meta.name)));
    }
    let items = tensors
        .iter()
        .zip(&meta.origins)
        .map(|(t, o)| {
            Ok(FakePair {
                pair: FramePair::from_stacked(t)?,
                origin: o.map(|[run, slot]| FrameOrigin { run, slot }),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplayBuffer::restore(meta.capacity, items, rng))
}
