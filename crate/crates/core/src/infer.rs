//! Streaming translation with one frame of temporal context.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::checkpoint::{checkpoint_error, Container};
use crate::data::{center_crop, list_frames, load_frame, save_frame};
use crate::error::{io_err, Error, Result};
use crate::nets::{Frame, FramePair, Generator, PairTranslator};
use crate::trainer::CheckpointHeader;

/// Translation direction between the two domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    /// X -> Y with generator G.
    #[default]
    XToY,
    /// Y -> X with generator F.
    YToX,
}

impl Direction {
    pub fn generator_section(self) -> &'static str {
        match self {
            Direction::XToY => "G",
            Direction::YToX => "F",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::XToY => "x2y",
            Direction::YToX => "y2x",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x2y" => Ok(Direction::XToY),
            "y2x" => Ok(Direction::YToX),
            other => Err(Error::Config(format!("unknown direction {other:?}, expected x2y or y2x"))),
        }
    }
}

/// A generator restored from a training checkpoint plus the preprocessing it expects.
#[derive(Debug, Clone)]
pub struct Translator {
    pub generator: Generator,
    pub header: CheckpointHeader,
    pub direction: Direction,
}

impl Translator {
    pub fn load(path: &Path, direction: Direction) -> Result<Self> {
        let c = Container::load(path)?;
        let header = CheckpointHeader::from_container(&c, path)?;
        let name = direction.generator_section();
        let params = c
            .section(name)
            .ok_or_else(|| checkpoint_error(path, format!("missing section {name}")))?
            .to_params()
            .map_err(|e| checkpoint_error(path, e))?;
        let generator = Generator::from_params(header.generator, params)
            .map_err(|e| checkpoint_error(path, e.to_string()))?;
        Ok(Self {
            generator,
            header,
            direction,
        })
    }

    pub fn image_size(&self) -> usize {
        self.header.config.image_size
    }

    /// Resize to the training load size, then center-crop to the training size.
    pub fn load_input(&self, path: &Path) -> Result<Frame> {
        let frame = load_frame(path, self.header.config.effective_load_size())?;
        center_crop(&frame, self.image_size())
    }

    pub fn session(&self) -> StreamSession<'_> {
        StreamSession::new(&self.generator, Some(self.image_size()))
    }
}

/// Translates a stream one frame at a time, emitting the frame of interest.
///
/// The first frame is paired with itself; afterwards each frame is paired
/// with its predecessor.
#[derive(Debug, Clone)]
pub struct StreamSession<'g> {
    generator: &'g Generator,
    expected_size: Option<usize>,
    previous: Option<Frame>,
    emitted: u64,
}

impl<'g> StreamSession<'g> {
    pub fn new(generator: &'g Generator, expected_size: Option<usize>) -> Self {
        Self {
            generator,
            expected_size,
            previous: None,
            emitted: 0,
        }
    }

    pub fn push_frame(&mut self, frame: Frame) -> Result<Frame> {
        if let Some(s) = self.expected_size {
            if (frame.height(), frame.width()) != (s, s) {
                return Err(Error::Shape(format!(
                    "checkpoint expects {s}x{s} frames, got {}x{}",
                    frame.height(),
                    frame.width()
                )));
            }
        }
        let earlier = self.previous.take().unwrap_or_else(|| frame.clone());
        let pair = FramePair::new(earlier, frame)?;
        let out = self.generator.translate_pair(&pair)?.later;
        self.previous = Some(pair.later);
        self.emitted += 1;
        Ok(out)
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub fn has_context(&self) -> bool {
        self.previous.is_some()
    }
}

/// Translates a whole in-memory sequence with a fresh session.
pub fn translate_frames(generator: &Generator, frames: &[Frame]) -> Result<Vec<Frame>> {
    let mut session = StreamSession::new(generator, None);
    frames.iter().map(|f| session.push_frame(f.clone())).collect()
}

/// Translates every `%06d.png` frame of `in_dir` into `out_dir` under the same names.
pub fn translate_video(
    checkpoint: &Path,
    in_dir: &Path,
    out_dir: &Path,
    direction: Direction,
) -> Result<Vec<PathBuf>> {
    let translator = Translator::load(checkpoint, direction)?;
    let inputs = list_frames(in_dir)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut session = translator.session();
    let mut written = Vec::with_capacity(inputs.len());
    for path in inputs {
        let out = session.push_frame(translator.load_input(&path)?)?;
        let dest = out_dir.join(path.file_name().expect("frame file name"));
        save_frame(&out, &dest)?;
        written.push(dest);
    }
    log::info!(
        "translated {} frames from {} ({direction})",
        written.len(),
        in_dir.display()
    );
    Ok(written)
}
