use rand::Rng;
use serde::{Deserialize, Serialize};
use tempcycle_autograd::{Graph, Scalar, Tensor, Var};

use super::frame::{Frame, FramePair};
use super::params::{BoundParams, ParamCursor, ParamSet};
use super::scaled_width;
use crate::error::{Error, Result};

pub(crate) const NORM_EPS: f64 = 1e-5;
pub(crate) const INIT_STD: f64 = 0.02;

/// Encoder / residual / decoder generator layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Frames per input (and output): 2 for the temporal model, 1 for the baseline.
    pub frames: usize,
    pub base_width: usize,
    pub width_multiplier: f64,
    pub residual_blocks: usize,
}

impl GeneratorConfig {
    pub fn temporal(width_multiplier: f64) -> Self {
        Self {
            frames: 2,
            base_width: 64,
            width_multiplier,
            residual_blocks: 8,
        }
    }

    pub fn per_frame(width_multiplier: f64) -> Self {
        Self {
            frames: 1,
            ..Self::temporal(width_multiplier)
        }
    }

    pub fn io_channels(&self) -> usize {
        3 * self.frames
    }

    /// Feature widths of the stem, first and second downsampling stages.
    pub fn widths(&self) -> [usize; 3] {
        [
            scaled_width(self.base_width, self.width_multiplier),
            scaled_width(self.base_width * 2, self.width_multiplier),
            scaled_width(self.base_width * 4, self.width_multiplier),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.frames) {
            return Err(Error::Config(format!(
                "generator frames must be 1 or 2, got {}",
                self.frames
            )));
        }
        if !(self.width_multiplier > 0.0) || self.base_width == 0 {
            return Err(Error::Config("generator width must be positive".into()));
        }
        Ok(())
    }
}

/// c7s1-w, d2w, d4w, R x n, u2w, uw, c7s1-out with tanh.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T = f32> {
    config: GeneratorConfig,
    params: ParamSet<T>,
}

fn conv_weight<T: Scalar, R: Rng + ?Sized>(o: usize, i: usize, k: usize, rng: &mut R) -> Tensor<T> {
    Tensor::randn(&[o, i, k, k], INIT_STD, rng)
}

fn push_norm<T: Scalar>(p: &mut ParamSet<T>, prefix: &str, c: usize) {
    p.push(format!("{prefix}.norm.gamma"), Tensor::ones(&[c]));
    p.push(format!("{prefix}.norm.beta"), Tensor::zeros(&[c]));
}

impl<T: Scalar> Generator<T> {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let io = config.io_channels();
        let [w1, w2, w3] = config.widths();
        let mut p = ParamSet::default();
        p.push("stem.weight", conv_weight(w1, io, 7, rng));
        push_norm(&mut p, "stem", w1);
        p.push("down1.weight", conv_weight(w2, w1, 3, rng));
        push_norm(&mut p, "down1", w2);
        p.push("down2.weight", conv_weight(w3, w2, 3, rng));
        push_norm(&mut p, "down2", w3);
        for r in 0..config.residual_blocks {
            for c in 1..=2 {
                let prefix = format!("res{r}.conv{c}");
                p.push(format!("{prefix}.weight"), conv_weight(w3, w3, 3, rng));
                push_norm(&mut p, &prefix, w3);
            }
        }
        // transposed weights are [in, out, k, k]
        p.push("up1.weight", Tensor::randn(&[w3, w2, 3, 3], INIT_STD, rng));
        push_norm(&mut p, "up1", w2);
        p.push("up2.weight", Tensor::randn(&[w2, w1, 3, 3], INIT_STD, rng));
        push_norm(&mut p, "up2", w1);
        p.push("head.weight", conv_weight(io, w1, 7, rng));
        p.push("head.bias", Tensor::zeros(&[io]));
        Ok(Self { config, params: p })
    }

    /// Rebuilds a generator around existing weights, checking names and shapes.
    pub fn from_params(config: GeneratorConfig, params: ParamSet<T>) -> Result<Self> {
        let mut template = Self::new(config, &mut crate::seed::stream(0, "template"))?;
        template.params.load_from(&params)?;
        Ok(template)
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn residual_block_count(&self) -> usize {
        (0..)
            .take_while(|r| self.params.get(&format!("res{r}.conv1.weight")).is_some())
            .count()
    }

    /// Input channels read off the stem weights.
    pub fn input_channels(&self) -> usize {
        self.params.get("stem.weight").expect("stem").shape()[1]
    }

    /// Output channels read off the head weights.
    pub fn output_channels(&self) -> usize {
        self.params.get("head.weight").expect("head").shape()[0]
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let io = self.config.io_channels();
        if shape.len() != 3 || shape[0] != io {
            return Err(Error::Shape(format!(
                "generator expects [{io}, H, W], got {shape:?}"
            )));
        }
        let (h, w) = (shape[1], shape[2]);
        if h % 4 != 0 || w % 4 != 0 || h < 8 || w < 8 {
            return Err(Error::Shape(format!(
                "generator input {h}x{w} must be at least 8x8 and divisible by 4"
            )));
        }
        Ok(())
    }

    /// Forward pass on a stacked `[3 * frames, H, W]` input.
    pub fn forward<'a>(&self, g: &mut Graph<'a, T>, p: &BoundParams, x: Var) -> Result<Var> {
        self.check_input(g.value(x).shape())?;
        let mut c = p.cursor();
        let h = g.reflect_pad(x, 3)?;
        let h = g.conv2d(h, c.take(), None, 1, 0)?;
        let h = norm_relu(g, h, &mut c)?;
        let h = g.conv2d(h, c.take(), None, 2, 1)?;
        let h = norm_relu(g, h, &mut c)?;
        let h = g.conv2d(h, c.take(), None, 2, 1)?;
        let mut h = norm_relu(g, h, &mut c)?;
        for _ in 0..self.config.residual_blocks {
            let r = g.reflect_pad(h, 1)?;
            let r = g.conv2d(r, c.take(), None, 1, 0)?;
            let r = norm_relu(g, r, &mut c)?;
            let r = g.reflect_pad(r, 1)?;
            let r = g.conv2d(r, c.take(), None, 1, 0)?;
            let r = norm(g, r, &mut c)?;
            h = g.add(h, r)?;
        }
        let h = g.conv_transpose2d(h, c.take(), None, 2, 1, 1)?;
        let h = norm_relu(g, h, &mut c)?;
        let h = g.conv_transpose2d(h, c.take(), None, 2, 1, 1)?;
        let h = norm_relu(g, h, &mut c)?;
        let h = g.reflect_pad(h, 3)?;
        let w = c.take();
        let b = c.take();
        let h = g.conv2d(h, w, Some(b), 1, 0)?;
        c.finish();
        Ok(g.tanh(h))
    }

    /// Runs the generator on an in-graph pair, returning the split outputs.
    pub fn forward_pair<'a>(
        &self,
        g: &mut Graph<'a, T>,
        p: &BoundParams,
        earlier: Var,
        later: Var,
    ) -> Result<(Var, Var)> {
        match self.config.frames {
            2 => {
                let x = g.concat_channels(&[earlier, later])?;
                let y = self.forward(g, p, x)?;
                Ok((g.slice_channels(y, 0, 3)?, g.slice_channels(y, 3, 3)?))
            }
            _ => Ok((self.forward(g, p, earlier)?, self.forward(g, p, later)?)),
        }
    }

    /// Inference on one stacked input tensor.
    pub fn apply(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::inference();
        let p = self.params.bind(&mut g, false);
        let x = g.input(input.clone());
        let y = self.forward(&mut g, &p, x)?;
        Ok(g.value(y).clone())
    }
}

fn norm<T: Scalar>(g: &mut Graph<'_, T>, h: Var, c: &mut ParamCursor<'_>) -> Result<Var> {
    let gamma = c.take();
    let beta = c.take();
    Ok(g.instance_norm(h, gamma, beta, NORM_EPS)?)
}

fn norm_relu<T: Scalar>(g: &mut Graph<'_, T>, h: Var, c: &mut ParamCursor<'_>) -> Result<Var> {
    let h = norm(g, h, c)?;
    Ok(g.relu(h))
}

/// Anything that maps a frame pair to a translated frame pair.
pub trait PairTranslator<T: Scalar = f32> {
    fn translate_pair(&self, pair: &FramePair<T>) -> Result<FramePair<T>>;
}

impl<T: Scalar> PairTranslator<T> for Generator<T> {
    fn translate_pair(&self, pair: &FramePair<T>) -> Result<FramePair<T>> {
        match self.config.frames {
            2 => FramePair::from_stacked(&self.apply(&pair.stacked())?),
            _ => FramePair::new(
                Frame::new(self.apply(pair.earlier.tensor())?)?,
                Frame::new(self.apply(pair.later.tensor())?)?,
            ),
        }
    }
}
