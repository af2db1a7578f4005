use rand::Rng;
use serde::{Deserialize, Serialize};
use tempcycle_autograd::{Graph, Scalar, Tensor, Var};

use super::generator::{INIT_STD, NORM_EPS};
use super::params::{BoundParams, ParamSet};
use super::scaled_width;
use crate::error::{Error, Result};

const LEAKY_SLOPE: f64 = 0.2;
const MAX_WIDTH: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    /// 1 for the per-frame critics, 2 for the temporal critics.
    pub frames: usize,
    /// Training image side; the receptive field must cover it.
    pub image_size: usize,
    pub base_width: usize,
    pub width_multiplier: f64,
}

/// One convolution of the discriminator stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub norm: bool,
    pub activation: bool,
}

impl DiscriminatorConfig {
    pub fn per_frame(image_size: usize, width_multiplier: f64) -> Self {
        Self {
            frames: 1,
            image_size,
            base_width: 64,
            width_multiplier,
        }
    }

    pub fn temporal(image_size: usize, width_multiplier: f64) -> Self {
        Self {
            frames: 2,
            ..Self::per_frame(image_size, width_multiplier)
        }
    }

    pub fn in_channels(&self) -> usize {
        3 * self.frames
    }

    fn stack(&self, downsampling: usize) -> Vec<ConvLayerSpec> {
        let width = |i: u32| scaled_width((self.base_width << i).min(MAX_WIDTH), self.width_multiplier);
        let mut layers = Vec::new();
        let mut c_in = self.in_channels();
        for i in 0..downsampling {
            let c_out = width(i as u32);
            layers.push(ConvLayerSpec {
                in_channels: c_in,
                out_channels: c_out,
                kernel: 4,
                stride: 2,
                padding: 1,
                norm: i > 0,
                activation: true,
            });
            c_in = c_out;
        }
        let c_out = width(downsampling as u32);
        layers.push(ConvLayerSpec {
            in_channels: c_in,
            out_channels: c_out,
            kernel: 4,
            stride: 1,
            padding: 1,
            norm: true,
            activation: true,
        });
        layers.push(ConvLayerSpec {
            in_channels: c_out,
            out_channels: 1,
            kernel: 4,
            stride: 1,
            padding: 1,
            norm: false,
            activation: false,
        });
        layers
    }

    /// Fewest stride-2 layers whose stack sees the whole image.
    pub fn downsampling_layers(&self) -> usize {
        (1..)
            .find(|&n| receptive_field(&self.stack(n)) >= self.image_size)
            .expect("receptive field grows without bound")
    }

    pub fn layers(&self) -> Vec<ConvLayerSpec> {
        self.stack(self.downsampling_layers())
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(&self.layers())
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.frames) {
            return Err(Error::Config(format!(
                "discriminator frames must be 1 or 2, got {}",
                self.frames
            )));
        }
        if self.image_size < 8 || !(self.width_multiplier > 0.0) {
            return Err(Error::Config(format!(
                "discriminator needs image_size >= 8 and positive width (got {}, {})",
                self.image_size, self.width_multiplier
            )));
        }
        Ok(())
    }
}

/// Receptive field of one output unit of a sequential conv stack.
pub(crate) fn receptive_field(layers: &[ConvLayerSpec]) -> usize {
    layers
        .iter()
        .rev()
        .fold(1, |r, l| (r - 1) * l.stride + l.kernel)
}

/// Convolutional critic with a raw single-channel score map.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T = f32> {
    config: DiscriminatorConfig,
    layers: Vec<ConvLayerSpec>,
    params: ParamSet<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new<R: Rng + ?Sized>(config: DiscriminatorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layers = config.layers();
        let mut p = ParamSet::default();
        for (i, l) in layers.iter().enumerate() {
            let name = if i + 1 == layers.len() {
                "head".to_string()
            } else {
                format!("conv{i}")
            };
            p.push(
                format!("{name}.weight"),
                Tensor::randn(&[l.out_channels, l.in_channels, l.kernel, l.kernel], INIT_STD, rng),
            );
            if l.norm {
                p.push(format!("{name}.norm.gamma"), Tensor::ones(&[l.out_channels]));
                p.push(format!("{name}.norm.beta"), Tensor::zeros(&[l.out_channels]));
            } else {
                p.push(format!("{name}.bias"), Tensor::zeros(&[l.out_channels]));
            }
        }
        Ok(Self {
            config,
            layers,
            params: p,
        })
    }

    pub fn from_params(config: DiscriminatorConfig, params: ParamSet<T>) -> Result<Self> {
        let mut template = Self::new(config, &mut crate::seed::stream(0, "template"))?;
        template.params.load_from(&params)?;
        Ok(template)
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn layers(&self) -> &[ConvLayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn input_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn forward<'a>(&self, g: &mut Graph<'a, T>, p: &BoundParams, x: Var) -> Result<Var> {
        let shape = g.value(x).shape();
        if shape.len() != 3 || shape[0] != self.input_channels() {
            return Err(Error::Shape(format!(
                "discriminator expects [{}, H, W], got {shape:?}",
                self.input_channels()
            )));
        }
        let mut c = p.cursor();
        let mut h = x;
        for l in &self.layers {
            let w = c.take();
            if l.norm {
                h = g.conv2d(h, w, None, l.stride, l.padding)?;
                let gamma = c.take();
                let beta = c.take();
                h = g.instance_norm(h, gamma, beta, NORM_EPS)?;
            } else {
                let b = c.take();
                h = g.conv2d(h, w, Some(b), l.stride, l.padding)?;
            }
            if l.activation {
                h = g.leaky_relu(h, LEAKY_SLOPE);
            }
        }
        c.finish();
        Ok(h)
    }

    /// Score map for a standalone input (a frame or a stacked pair).
    pub fn score(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::inference();
        let p = self.params.bind(&mut g, false);
        let x = g.input(input.clone());
        let y = self.forward(&mut g, &p, x)?;
        Ok(g.value(y).clone())
    }
}
