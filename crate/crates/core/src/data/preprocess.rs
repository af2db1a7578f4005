use std::path::Path;

use image::imageops::{self, FilterType};
use image::{ImageReader, RgbImage};
use tempcycle_autograd::Tensor;

use crate::error::{Error, Result};
use crate::nets::Frame;

/// Side length frames are rescaled to before random cropping.
pub const DEFAULT_LOAD_SIZE: usize = 286;

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let invalid = |reason: String| Error::InvalidImage {
        path: path.to_path_buf(),
        reason,
    };
    let img = ImageReader::open(path)
        .map_err(|e| invalid(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| invalid(e.to_string()))?
        .decode()
        .map_err(|e| invalid(e.to_string()))?;
    let channels = img.color().channel_count();
    if channels != 3 {
        return Err(invalid(format!("expected 3 color channels, found {channels}")));
    }
    Ok(img.to_rgb8())
}

/// `[0, 255]` pixels to a `[-1, 1]` frame, no resampling.
pub fn frame_from_rgb(img: &RgbImage) -> Frame {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0f32; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = px.0[c] as f32 / 127.5 - 1.0;
        }
    }
    Frame::new(Tensor::new(vec![3, h, w], data).expect("sized buffer")).expect("values in range")
}

/// Center square crop, bilinear rescale to `size x size`, map to `[-1, 1]`.
pub fn preprocess(img: &RgbImage, size: usize) -> Result<Frame> {
    if size == 0 {
        return Err(Error::Config("preprocess size must be positive".into()));
    }
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::Shape("empty image".into()));
    }
    let side = w.min(h);
    let square = imageops::crop_imm(img, (w - side) / 2, (h - side) / 2, side, side).to_image();
    let resized = if side as usize == size {
        square
    } else {
        imageops::resize(&square, size as u32, size as u32, FilterType::Triangle)
    };
    Ok(frame_from_rgb(&resized))
}

pub fn load_frame(path: &Path, size: usize) -> Result<Frame> {
    preprocess(&load_rgb(path)?, size)
}

/// `[-1, 1]` to `[0, 255]`, rounding half away from zero.
pub fn denormalize(frame: &Frame) -> RgbImage {
    let (h, w) = (frame.height(), frame.width());
    let data = frame.tensor().data();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |c: usize| {
            let v = data[(c * h + y as usize) * w + x as usize];
            ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
        };
        image::Rgb([px(0), px(1), px(2)])
    })
}

pub fn save_frame(frame: &Frame, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(crate::error::io_err(parent))?;
    }
    denormalize(frame)
        .save(path)
        .map_err(|e| Error::InvalidImage {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}
