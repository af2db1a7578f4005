//! Procedural two-domain videos.
//!
//! Both domains share one motion model: 2-4 ellipses or regular polygons
//! drifting and rotating slowly, bouncing off the borders. Domain X renders
//! them flat-shaded on a plain background (few distinct colors); domain Y
//! renders the same kind of scene with static procedural texture, per-video
//! color jitter and drifting specular highlights (many distinct colors).
//! No point of any shape moves more than `3 * size / 128` pixels per frame.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use image::RgbImage;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{Domain, Split, VideoDataset};
use crate::error::{io_err, Error, Result};
use crate::seed;

/// Domain X frames have fewer distinct RGB colors than this, domain Y frames more.
pub const FLAT_COLOR_THRESHOLD: usize = 16;

/// Mean absolute difference (pixel values scaled to `[0, 1]`) separating
/// consecutive frames of one video (below) from frames of different videos (above).
pub const TEMPORAL_SMOOTHNESS_BOUND: f64 = 0.03;

/// Translation speed limit at size 128, in pixels per frame.
const MAX_DRIFT_128: f64 = 2.0;
/// Speed limit of a shape's rim due to rotation, at size 128.
const MAX_SPIN_128: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_videos: usize,
    pub frames_per_video: usize,
    pub size: usize,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 8 || self.size % 4 != 0 {
            return Err(Error::Config(format!(
                "synthetic frame size {} must be >= 8 and divisible by 4",
                self.size
            )));
        }
        Ok(())
    }
}

/// Generated dataset plus `(path relative to root, sha256)` of every file.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: VideoDataset,
    pub files: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
struct ValueNoise {
    cells: usize,
    values: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, cells: usize) -> Self {
        let n = (cells + 1) * (cells + 1);
        Self {
            cells,
            values: (0..n).map(|_| rng.random::<f64>()).collect(),
        }
    }

    /// Smooth value in `[0, 1]` at `(u, v)` in unit coordinates.
    fn sample(&self, u: f64, v: f64) -> f64 {
        let n = self.cells;
        let fx = u.clamp(0.0, 1.0) * n as f64;
        let fy = v.clamp(0.0, 1.0) * n as f64;
        let (x0, y0) = ((fx as usize).min(n - 1), (fy as usize).min(n - 1));
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(fx - x0 as f64), smooth(fy - y0 as f64));
        let at = |x: usize, y: usize| self.values[y * (n + 1) + x];
        let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
        let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    fn fractal(a: &Self, b: &Self, u: f64, v: f64) -> f64 {
        (a.sample(u, v) * 2.0 + b.sample(u, v)) / 3.0
    }
}

#[derive(Debug, Clone, Copy)]
enum Outline {
    Ellipse { rx: f64, ry: f64 },
    Polygon { radius: f64, sides: usize },
}

impl Outline {
    fn bound(&self) -> f64 {
        match *self {
            Outline::Ellipse { rx, ry } => rx.max(ry),
            Outline::Polygon { radius, .. } => radius,
        }
    }

    fn contains(&self, lx: f64, ly: f64) -> bool {
        match *self {
            Outline::Ellipse { rx, ry } => (lx / rx).powi(2) + (ly / ry).powi(2) <= 1.0,
            Outline::Polygon { radius, sides } => {
                let sector = 2.0 * PI / sides as f64;
                let theta = ly.atan2(lx).rem_euclid(sector) - sector / 2.0;
                (lx * lx + ly * ly).sqrt() * theta.cos() <= radius * (sector / 2.0).cos()
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Body {
    outline: Outline,
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    angle: f64,
    omega: f64,
    color: [f64; 3],
    texture: Option<(ValueNoise, ValueNoise)>,
}

impl Body {
    fn local(&self, px: f64, py: f64) -> (f64, f64) {
        let (dx, dy) = (px - self.cx, py - self.cy);
        let (s, c) = self.angle.sin_cos();
        (dx * c + dy * s, -dx * s + dy * c)
    }

    fn advance(&mut self, size: f64) {
        self.cx += self.vx;
        self.cy += self.vy;
        self.angle += self.omega;
        let r = self.outline.bound() * 0.5;
        if self.cx < r || self.cx > size - r {
            self.vx = -self.vx;
            self.cx = self.cx.clamp(r, size - r);
        }
        if self.cy < r || self.cy > size - r {
            self.vy = -self.vy;
            self.cy = self.cy.clamp(r, size - r);
        }
    }
}

#[derive(Debug, Clone)]
struct Highlight {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    sigma: f64,
    strength: f64,
}

#[derive(Debug, Clone)]
struct Scene {
    domain: Domain,
    size: f64,
    background: [f64; 3],
    background_texture: Option<(ValueNoise, ValueNoise)>,
    bodies: Vec<Body>,
    highlights: Vec<Highlight>,
}

const X_BACKGROUNDS: [[f64; 3]; 6] = [
    [205.0, 195.0, 180.0],
    [120.0, 130.0, 150.0],
    [235.0, 225.0, 160.0],
    [70.0, 80.0, 75.0],
    [170.0, 110.0, 100.0],
    [150.0, 200.0, 215.0],
];

const X_BODY_COLORS: [[f64; 3]; 5] = [
    [235.0, 140.0, 120.0],
    [245.0, 245.0, 245.0],
    [40.0, 150.0, 70.0],
    [60.0, 60.0, 190.0],
    [30.0, 30.0, 30.0],
];

const Y_BACKGROUNDS: [[f64; 3]; 6] = [
    [170.0, 45.0, 40.0],
    [120.0, 30.0, 35.0],
    [205.0, 110.0, 95.0],
    [150.0, 70.0, 40.0],
    [95.0, 20.0, 60.0],
    [215.0, 160.0, 130.0],
];

const Y_BODY_COLORS: [[f64; 3]; 5] = [
    [225.0, 190.0, 130.0],
    [110.0, 15.0, 20.0],
    [200.0, 200.0, 205.0],
    [240.0, 120.0, 110.0],
    [80.0, 40.0, 30.0],
];

impl Scene {
    fn new(domain: Domain, size: usize, video_index: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = size as f64;
        let scale = s / 128.0;
        let textured = domain == Domain::Y;
        let (bg_palette, body_palette) = match domain {
            Domain::X => (&X_BACKGROUNDS, &X_BODY_COLORS),
            Domain::Y => (&Y_BACKGROUNDS, &Y_BODY_COLORS),
        };
        let mut background = bg_palette[video_index % bg_palette.len()];
        if textured {
            for c in &mut background {
                *c += rng.random_range(-15.0..15.0);
            }
        }
        let n_bodies = rng.random_range(2..=4);
        let bodies = (0..n_bodies)
            .map(|_| {
                let r = rng.random_range(0.08..0.18) * s;
                let outline = if rng.random_bool(0.5) {
                    Outline::Ellipse {
                        rx: r,
                        ry: r * rng.random_range(0.5..1.0),
                    }
                } else {
                    Outline::Polygon {
                        radius: r,
                        sides: rng.random_range(3..=6),
                    }
                };
                let speed = rng.random_range(0.3..1.0) * MAX_DRIFT_128 * scale;
                let heading = rng.random_range(0.0..2.0 * PI);
                let spin = rng.random_range(-1.0..1.0) * MAX_SPIN_128 * scale / r;
                let mut color = body_palette[rng.random_range(0..body_palette.len())];
                if textured {
                    for c in &mut color {
                        *c = (*c + rng.random_range(-20.0..20.0)).clamp(0.0, 255.0);
                    }
                }
                Body {
                    outline,
                    cx: rng.random_range(r..s - r),
                    cy: rng.random_range(r..s - r),
                    vx: speed * heading.cos(),
                    vy: speed * heading.sin(),
                    angle: rng.random_range(0.0..2.0 * PI),
                    omega: spin,
                    color,
                    texture: textured.then(|| (ValueNoise::new(rng, 3), ValueNoise::new(rng, 6))),
                }
            })
            .collect();
        let background_texture = textured.then(|| (ValueNoise::new(rng, 6), ValueNoise::new(rng, 14)));
        let highlights = if textured {
            (0..rng.random_range(1..=3))
                .map(|_| {
                    let heading = rng.random_range(0.0..2.0 * PI);
                    let speed = rng.random_range(0.2..1.0) * scale;
                    Highlight {
                        x: rng.random_range(0.0..s),
                        y: rng.random_range(0.0..s),
                        vx: speed * heading.cos(),
                        vy: speed * heading.sin(),
                        sigma: rng.random_range(0.02..0.05) * s,
                        strength: rng.random_range(0.4..0.8),
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        Self {
            domain,
            size: s,
            background,
            background_texture,
            bodies,
            highlights,
        }
    }

    fn advance(&mut self) {
        for b in &mut self.bodies {
            b.advance(self.size);
        }
        for h in &mut self.highlights {
            h.x += h.vx;
            h.y += h.vy;
            if h.x < 0.0 || h.x > self.size {
                h.vx = -h.vx;
            }
            if h.y < 0.0 || h.y > self.size {
                h.vy = -h.vy;
            }
        }
    }

    fn render(&self) -> RgbImage {
        let n = self.size as u32;
        RgbImage::from_fn(n, n, |x, y| {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut color = self.background;
            if let Some((a, b)) = &self.background_texture {
                let t = ValueNoise::fractal(a, b, px / self.size, py / self.size);
                color = color.map(|c| c * (0.6 + 0.7 * t));
            }
            for body in &self.bodies {
                let (lx, ly) = body.local(px, py);
                if body.outline.contains(lx, ly) {
                    color = body.color;
                    if let Some((a, b)) = &body.texture {
                        let r = body.outline.bound();
                        let (u, v) = ((lx / r + 1.0) / 2.0, (ly / r + 1.0) / 2.0);
                        let t = ValueNoise::fractal(a, b, u, v);
                        color = color.map(|c| c * (0.75 + 0.5 * t));
                    }
                }
            }
            for h in &self.highlights {
                let d2 = (px - h.x).powi(2) + (py - h.y).powi(2);
                let w = h.strength * (-d2 / (2.0 * h.sigma * h.sigma)).exp();
                color = color.map(|c| c + w * (255.0 - c));
            }
            debug_assert!(self.domain == Domain::Y || self.highlights.is_empty());
            image::Rgb(color.map(|c| c.round().clamp(0.0, 255.0) as u8))
        })
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Renders `n_videos` videos of `domain` into `root/<domain>/<split>/video_%04d/%06d.png`.
pub fn synth_generate(root: &Path, domain: Domain, split: Split, cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let dir = VideoDataset::dir(root, domain, split);
    let mut files = Vec::new();
    for v in 0..cfg.n_videos {
        let mut rng = seed::stream(cfg.seed, &format!("synth.{domain}.{split}.{v}"));
        let mut scene = Scene::new(domain, cfg.size, v, &mut rng);
        let vdir = dir.join(format!("video_{v:04}"));
        fs::create_dir_all(&vdir).map_err(io_err(&vdir))?;
        for f in 0..cfg.frames_per_video {
            let path = vdir.join(format!("{f:06}.png"));
            scene.render().save(&path).map_err(|e| Error::InvalidImage {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            files.push((relative(root, &path), sha256_hex(&bytes)));
            scene.advance();
        }
    }
    let dataset = if cfg.n_videos > 0 {
        VideoDataset::open(&dir, Some(domain))?
    } else {
        VideoDataset {
            root: dir,
            domain: Some(domain),
            fps: super::dataset::NOMINAL_FPS,
            videos: Vec::new(),
        }
    };
    Ok(SynthOutput { dataset, files })
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn count_distinct_colors(img: &RgbImage) -> usize {
    let mut colors: Vec<[u8; 3]> = img.pixels().map(|p| p.0).collect();
    colors.sort_unstable();
    colors.dedup();
    colors.len()
}

/// Mean absolute pixel difference with values scaled to `[0, 1]`.
pub fn mean_abs_frame_difference(a: &RgbImage, b: &RgbImage) -> f64 {
    assert_eq!(a.dimensions(), b.dimensions());
    let sum: u64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&p, &q)| (p as i32 - q as i32).unsigned_abs() as u64)
        .sum();
    sum as f64 / (a.as_raw().len() as f64 * 255.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vertex_positions(b: &Body) -> Vec<(f64, f64)> {
        let r = b.outline.bound();
        (0..16)
            .map(|i| {
                let a = b.angle + i as f64 * PI / 8.0;
                (b.cx + r * a.cos(), b.cy + r * a.sin())
            })
            .collect()
    }

    #[test]
    fn rim_displacement_is_bounded_at_size_128() {
        for domain in [Domain::X, Domain::Y] {
            for v in 0..6 {
                let mut rng = seed::stream(11, &format!("t{v}"));
                let mut scene = Scene::new(domain, 128, v, &mut rng);
                for _ in 0..200 {
                    let before: Vec<_> = scene.bodies.iter().map(vertex_positions).collect();
                    scene.advance();
                    for (b, prev) in scene.bodies.iter().zip(&before) {
                        for ((x1, y1), (x0, y0)) in vertex_positions(b).iter().zip(prev) {
                            let d = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
                            assert!(d <= 3.0 + 1e-9, "moved {d} px");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn polygon_contains_center_not_far_points() {
        let p = Outline::Polygon {
            radius: 10.0,
            sides: 4,
        };
        assert!(p.contains(0.0, 0.0));
        assert!(p.contains(6.0, 0.0));
        assert!(!p.contains(9.0, 9.0));
        assert!(!p.contains(11.0, 0.0));
    }

    #[test]
    fn invalid_size_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            seed: 1,
            n_videos: 1,
            frames_per_video: 1,
            size: 30,
        };
        assert!(synth_generate(dir.path(), Domain::X, Split::Train, &cfg).is_err());
    }
}
