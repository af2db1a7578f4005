//! The six networks of the training graph and the frame types they consume.
//!
//! Generators map two stacked RGB frames (6 channels) to two frames; the
//! per-frame baseline uses the same stack with 3-channel I/O. Discriminators
//! grow stride-2 layers until one output unit sees the whole training image.

mod discriminator;
mod frame;
mod generator;
mod params;

pub use discriminator::{ConvLayerSpec, Discriminator, DiscriminatorConfig};
pub use frame::{Frame, FramePair};
pub use generator::{Generator, GeneratorConfig, PairTranslator};
pub use params::{count_parameters, BoundParams, ParamSet};

/// Channels → output width after applying the multiplier (never below 1).
pub(crate) fn scaled_width(base: usize, multiplier: f64) -> usize {
    ((base as f64 * multiplier).round() as usize).max(1)
}
