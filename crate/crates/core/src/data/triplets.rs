use std::path::PathBuf;

use super::dataset::VideoDataset;
use super::preprocess::load_frame;
use crate::error::{Error, Result};
use crate::nets::Frame;

/// Start indices `0, stride, 2*stride, ...` whose triplet fits in `frame_count` frames.
pub fn triplet_starts(frame_count: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::Config("triplet stride must be at least 1".into()));
    }
    Ok((0..frame_count.saturating_sub(2)).step_by(stride).collect())
}

/// Three consecutive frame files of one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletRef {
    pub video_id: String,
    pub start: usize,
    pub paths: [PathBuf; 3],
}

/// Frames at `t-2`, `t-1`, `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTriplet {
    pub frames: [Frame; 3],
    pub video_id: String,
    pub start: usize,
}

impl FrameTriplet {
    pub fn new(frames: [Frame; 3], video_id: impl Into<String>, start: usize) -> Result<Self> {
        if !(frames[0].same_size(&frames[1]) && frames[1].same_size(&frames[2])) {
            return Err(Error::Shape("triplet frames differ in size".into()));
        }
        Ok(Self {
            frames,
            video_id: video_id.into(),
            start,
        })
    }

    pub fn size(&self) -> (usize, usize) {
        (self.frames[0].height(), self.frames[0].width())
    }
}

/// Triplets of one dataset, sampled per video with a fixed phase at frame 0.
pub fn sample_triplets(dataset: &VideoDataset, stride: usize) -> Result<Vec<TripletRef>> {
    let mut out = Vec::new();
    for video in &dataset.videos {
        for start in triplet_starts(video.frames.len(), stride)? {
            out.push(TripletRef {
                video_id: video.id.clone(),
                start,
                paths: [
                    video.frames[start].clone(),
                    video.frames[start + 1].clone(),
                    video.frames[start + 2].clone(),
                ],
            });
        }
    }
    Ok(out)
}

/// Decodes and preprocesses every sampled triplet to `load_size`.
pub fn load_triplets(refs: &[TripletRef], load_size: usize) -> Result<Vec<FrameTriplet>> {
    refs.iter()
        .map(|r| {
            let [a, b, c] = &r.paths;
            FrameTriplet::new(
                [
                    load_frame(a, load_size)?,
                    load_frame(b, load_size)?,
                    load_frame(c, load_size)?,
                ],
                r.video_id.clone(),
                r.start,
            )
        })
        .collect()
}
