use rand::Rng;
use tempcycle_autograd::Tensor;

use super::triplets::FrameTriplet;
use crate::error::{Error, Result};
use crate::nets::Frame;

/// One crop window and flip decision, shared by all frames of a triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentDraw {
    pub offset_x: usize,
    pub offset_y: usize,
    pub flip: bool,
}

impl AugmentDraw {
    /// Offsets uniform over `[0, load - crop]`, horizontal flip with p = 0.5.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, load: (usize, usize), crop: usize) -> Result<Self> {
        let (h, w) = load;
        if h < crop || w < crop {
            return Err(Error::Shape(format!(
                "frames {h}x{w} are smaller than the {crop}x{crop} crop"
            )));
        }
        let offset_x = rng.random_range(0..=w - crop);
        let offset_y = rng.random_range(0..=h - crop);
        let flip = rng.random_bool(0.5);
        Ok(Self {
            offset_x,
            offset_y,
            flip,
        })
    }
}

fn crop_frame(frame: &Frame, draw: AugmentDraw, crop: usize) -> Result<Frame> {
    let (h, w) = (frame.height(), frame.width());
    if draw.offset_y + crop > h || draw.offset_x + crop > w {
        return Err(Error::Shape(format!(
            "crop {crop} at ({}, {}) exceeds {h}x{w}",
            draw.offset_x, draw.offset_y
        )));
    }
    let src = frame.tensor().data();
    let mut out = Vec::with_capacity(3 * crop * crop);
    for c in 0..3 {
        for y in 0..crop {
            let row = (c * h + y + draw.offset_y) * w + draw.offset_x;
            let row = &src[row..row + crop];
            if draw.flip {
                out.extend(row.iter().rev());
            } else {
                out.extend_from_slice(row);
            }
        }
    }
    Frame::new(Tensor::new(vec![3, crop, crop], out)?)
}

pub fn apply_augment(triplet: &FrameTriplet, draw: AugmentDraw, crop: usize) -> Result<FrameTriplet> {
    let [a, b, c] = &triplet.frames;
    FrameTriplet::new(
        [
            crop_frame(a, draw, crop)?,
            crop_frame(b, draw, crop)?,
            crop_frame(c, draw, crop)?,
        ],
        triplet.video_id.clone(),
        triplet.start,
    )
}

/// Random crop and flip applied identically to the three frames.
pub fn augment<R: Rng + ?Sized>(
    triplet: &FrameTriplet,
    rng: &mut R,
    crop: usize,
) -> Result<FrameTriplet> {
    let draw = AugmentDraw::sample(rng, triplet.size(), crop)?;
    apply_augment(triplet, draw, crop)
}

/// Deterministic centered crop, used at inference.
pub fn center_crop(frame: &Frame, crop: usize) -> Result<Frame> {
    let (h, w) = (frame.height(), frame.width());
    if h < crop || w < crop {
        return Err(Error::Shape(format!("frame {h}x{w} smaller than crop {crop}")));
    }
    crop_frame(
        frame,
        AugmentDraw {
            offset_x: (w - crop) / 2,
            offset_y: (h - crop) / 2,
            flip: false,
        },
        crop,
    )
}
