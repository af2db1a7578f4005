use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

pub const NOMINAL_FPS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    X,
    Y,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::X => "X",
            Domain::Y => "Y",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// One video: its directory name and frame files in index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Video {
    pub id: String,
    pub dir: PathBuf,
    pub frames: Vec<PathBuf>,
}

/// Videos of one domain and split.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoDataset {
    pub root: PathBuf,
    pub domain: Option<Domain>,
    pub fps: f64,
    pub videos: Vec<Video>,
}

impl VideoDataset {
    pub fn dir(root: &Path, domain: Domain, split: Split) -> PathBuf {
        root.join(domain.to_string()).join(split.to_string())
    }

    /// Opens a directory whose subdirectories are videos.
    pub fn open(dir: &Path, domain: Option<Domain>) -> Result<Self> {
        let mut video_dirs: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        video_dirs.sort();
        let videos = video_dirs
            .into_iter()
            .map(|d| {
                let frames = list_frames(&d)?;
                let id = d
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok(Video { id, dir: d, frames })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            root: dir.to_path_buf(),
            domain,
            fps: NOMINAL_FPS,
            videos,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.videos.iter().map(|v| v.frames.len()).sum()
    }
}

fn frame_index(path: &Path) -> Option<usize> {
    let name = path.file_name()?.to_str()?;
    let stem = name.strip_suffix(".png")?;
    if stem.len() == 6 && stem.bytes().all(|b| b.is_ascii_digit()) {
        stem.parse().ok()
    } else {
        None
    }
}

/// Frame files `%06d.png` of one video directory, checked to run 0, 1, 2, ...
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames: Vec<(usize, PathBuf)> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| frame_index(&p).map(|i| (i, p)))
        .collect();
    if frames.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    frames.sort();
    for (expected, (idx, path)) in frames.iter().enumerate() {
        if *idx != expected {
            return Err(Error::FrameSequence {
                path: dir.to_path_buf(),
                reason: format!("expected frame {expected:06}, found {}", path.display()),
            });
        }
    }
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}
