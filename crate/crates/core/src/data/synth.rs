//! Stochastic bouncing-digit video synthesis.
//!
//! A digit moves in a straight line at constant speed. When it reaches a wall
//! it is clamped to the wall and leaves in a fresh direction drawn uniformly
//! from the half-plane pointing back into the canvas (the quadrant, for a
//! corner). Speed is preserved across bounces.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::Rng as _;

use super::glyphs::{Glyph, GlyphSet};
use super::{Split, Video, VideoDataset};
use crate::error::{NuqError, Result};
use crate::kv::{self, KvConfig};
use crate::seeding;

#[derive(Debug, Clone, PartialEq)]
pub enum DigitSource {
    Procedural,
    Idx(PathBuf),
}

impl fmt::Display for DigitSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DigitSource::Procedural => write!(f, "procedural"),
            DigitSource::Idx(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_videos: usize,
    pub seq_len: usize,
    pub canvas: usize,
    pub digit_size: usize,
    pub num_digits: usize,
    /// Pixels per frame.
    pub speed: f64,
    pub digit_source: DigitSource,
    pub seed: u64,
    pub split: Split,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_videos: 100,
            seq_len: 25,
            canvas: 48,
            digit_size: 28,
            num_digits: 1,
            speed: 3.0,
            digit_source: DigitSource::Procedural,
            seed: 1,
            split: Split::Train,
        }
    }
}

impl KvConfig for SynthConfig {
    fn key_docs() -> &'static [(&'static str, &'static str)] {
        &[
            ("num_videos", "number of videos to synthesize"),
            ("seq_len", "frames per video (T)"),
            ("canvas", "canvas side in pixels"),
            ("digit_size", "digit glyph side in pixels"),
            ("num_digits", "digits per video"),
            ("speed", "digit speed in pixels per frame"),
            ("digit_source", "`procedural` or path to an IDX3 glyph file"),
            ("seed", "master seed"),
            ("split", "split tag: train | val | test"),
        ]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "num_videos" => self.num_videos = kv::parse_value(key, value)?,
            "seq_len" => self.seq_len = kv::parse_value(key, value)?,
            "canvas" => self.canvas = kv::parse_value(key, value)?,
            "digit_size" => self.digit_size = kv::parse_value(key, value)?,
            "num_digits" => self.num_digits = kv::parse_value(key, value)?,
            "speed" => self.speed = kv::parse_value(key, value)?,
            "digit_source" => {
                self.digit_source = if value == "procedural" {
                    DigitSource::Procedural
                } else {
                    DigitSource::Idx(PathBuf::from(value))
                }
            }
            "seed" => self.seed = kv::parse_value(key, value)?,
            "split" => self.split = kv::parse_value(key, value)?,
            _ => return Err(kv::unknown_key(key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("num_videos", self.num_videos.to_string()),
            ("seq_len", self.seq_len.to_string()),
            ("canvas", self.canvas.to_string()),
            ("digit_size", self.digit_size.to_string()),
            ("num_digits", self.num_digits.to_string()),
            ("speed", kv::fmt_f64(self.speed)),
            ("digit_source", self.digit_source.to_string()),
            ("seed", self.seed.to_string()),
            ("split", self.split.to_string()),
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.num_videos == 0 {
            return Err(NuqError::config("num_videos", "must be at least 1"));
        }
        if self.seq_len < 2 {
            return Err(NuqError::config("seq_len", "must be at least 2"));
        }
        if self.digit_size == 0 {
            return Err(NuqError::config("digit_size", "must be positive"));
        }
        if self.canvas <= self.digit_size {
            return Err(NuqError::config(
                "canvas",
                format!("canvas ({}) must exceed digit_size ({})", self.canvas, self.digit_size),
            ));
        }
        if self.num_digits == 0 {
            return Err(NuqError::config("num_digits", "must be at least 1"));
        }
        if !(self.speed >= 1.0) || !self.speed.is_finite() {
            return Err(NuqError::config("speed", "must be a finite value >= 1"));
        }
        Ok(())
    }
}

/// Which wall (or corner) a bounce hit. Image coordinates: y grows downward,
/// so `Top` is y = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Wall {
    Left,
    Right,
    Top,
    Bottom,
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Wall {
    fn from_hits(x: Option<Wall>, y: Option<Wall>) -> Option<Wall> {
        use Wall::*;
        match (x, y) {
            (None, None) => None,
            (Some(w), None) | (None, Some(w)) => Some(w),
            (Some(Left), Some(Top)) => Some(TopLeft),
            (Some(Right), Some(Top)) => Some(TopRight),
            (Some(Left), Some(Bottom)) => Some(BottomLeft),
            (Some(Right), Some(Bottom)) => Some(BottomRight),
            _ => unreachable!("x hits are Left/Right, y hits are Top/Bottom"),
        }
    }

    /// Angular interval `[start, start + width)` of allowed outgoing
    /// directions, measured from +x toward +y.
    pub fn outgoing_arc(self) -> (f64, f64) {
        use Wall::*;
        match self {
            Left => (-FRAC_PI_2, PI),
            Right => (FRAC_PI_2, PI),
            Top => (0.0, PI),
            Bottom => (PI, PI),
            TopLeft => (0.0, FRAC_PI_2),
            TopRight => (FRAC_PI_2, FRAC_PI_2),
            BottomRight => (PI, FRAC_PI_2),
            BottomLeft => (-FRAC_PI_2, FRAC_PI_2),
        }
    }

    /// Unit vector pointing from the wall into the canvas.
    pub fn inward_normal(self) -> [f64; 2] {
        let (start, width) = self.outgoing_arc();
        let mid = start + width / 2.0;
        [mid.cos(), mid.sin()]
    }

    pub fn is_corner(self) -> bool {
        matches!(self, Wall::TopLeft | Wall::TopRight | Wall::BottomLeft | Wall::BottomRight)
    }
}

impl fmt::Display for Wall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Wall::Left => "left",
            Wall::Right => "right",
            Wall::Top => "top",
            Wall::Bottom => "bottom",
            Wall::TopLeft => "top-left",
            Wall::TopRight => "top-right",
            Wall::BottomLeft => "bottom-left",
            Wall::BottomRight => "bottom-right",
        };
        f.write_str(s)
    }
}

impl FromStr for Wall {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "left" => Wall::Left,
            "right" => Wall::Right,
            "top" => Wall::Top,
            "bottom" => Wall::Bottom,
            "top-left" => Wall::TopLeft,
            "top-right" => Wall::TopRight,
            "bottom-left" => Wall::BottomLeft,
            "bottom-right" => Wall::BottomRight,
            other => return Err(format!("unknown wall `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BounceEvent {
    pub frame: usize,
    pub wall: Wall,
    /// Unit outgoing direction.
    pub direction: [f64; 2],
}

/// Bounce events per video, in frame order. With several digits per video
/// the events of all digits are merged (frame order is then non-decreasing).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BounceLog {
    pub videos: Vec<Vec<BounceEvent>>,
}

impl BounceLog {
    pub fn total(&self) -> usize {
        self.videos.iter().map(Vec::len).sum()
    }

    pub fn frames(&self, video: usize) -> Vec<usize> {
        self.videos
            .get(video)
            .map(|v| v.iter().map(|e| e.frame).collect())
            .unwrap_or_default()
    }
}

/// Positions (top-left corner of the digit box) for frames `0..len` and the
/// bounce events, starting from `start` with velocity `velocity`.
/// `max_pos` is the largest admissible coordinate on each axis.
pub fn simulate_trajectory<R: rand::Rng + ?Sized>(
    start: [f64; 2],
    velocity: [f64; 2],
    len: usize,
    max_pos: f64,
    rng: &mut R,
) -> (Vec<[f64; 2]>, Vec<BounceEvent>) {
    let speed = (velocity[0].powi(2) + velocity[1].powi(2)).sqrt();
    let mut pos = start;
    let mut vel = velocity;
    let mut positions = Vec::with_capacity(len);
    let mut events = Vec::new();
    positions.push(pos);
    for frame in 1..len {
        pos = [pos[0] + vel[0], pos[1] + vel[1]];
        // x first, then y.
        let x_hit = if pos[0] < 0.0 {
            pos[0] = 0.0;
            Some(Wall::Left)
        } else if pos[0] > max_pos {
            pos[0] = max_pos;
            Some(Wall::Right)
        } else {
            None
        };
        let y_hit = if pos[1] < 0.0 {
            pos[1] = 0.0;
            Some(Wall::Top)
        } else if pos[1] > max_pos {
            pos[1] = max_pos;
            Some(Wall::Bottom)
        } else {
            None
        };
        if let Some(wall) = Wall::from_hits(x_hit, y_hit) {
            let (arc_start, width) = wall.outgoing_arc();
            // Open interval so the direction never runs parallel to the wall.
            let u: f64 = loop {
                let u = rng.random::<f64>();
                if u > 0.0 {
                    break u;
                }
            };
            let theta = arc_start + u * width;
            let dir = [theta.cos(), theta.sin()];
            vel = [speed * dir[0], speed * dir[1]];
            events.push(BounceEvent { frame, wall, direction: dir });
        }
        positions.push(pos);
    }
    (positions, events)
}

/// Max-composites `glyph` onto a `canvas`×`canvas` frame at the rounded
/// position.
fn paste(frame: &mut [f32], canvas: usize, glyph: &Glyph, pos: [f64; 2]) {
    let x0 = pos[0].round() as usize;
    let y0 = pos[1].round() as usize;
    for r in 0..glyph.size {
        for c in 0..glyph.size {
            let (y, x) = (y0 + r, x0 + c);
            if y < canvas && x < canvas {
                let dst = &mut frame[y * canvas + x];
                *dst = dst.max(glyph.at(r, c));
            }
        }
    }
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Synthesizes a dataset. Video `i` draws from its own substream of the
/// master seed, so any video can be reproduced independently.
pub fn synthesize_smmnist(cfg: &SynthConfig) -> Result<(VideoDataset, BounceLog)> {
    cfg.validate()?;
    let glyphs = match &cfg.digit_source {
        DigitSource::Procedural => GlyphSet::procedural(cfg.digit_size),
        DigitSource::Idx(path) => GlyphSet::from_idx(path, cfg.digit_size, 60_000)?,
    };
    let max_pos = (cfg.canvas - cfg.digit_size) as f64;
    let mut videos = Vec::with_capacity(cfg.num_videos);
    let mut log = BounceLog::default();
    for v in 0..cfg.num_videos {
        let mut rng = seeding::substream(cfg.seed, v as u64);
        let mut frames = vec![0.0f32; cfg.seq_len * cfg.canvas * cfg.canvas];
        let mut events = Vec::new();
        for _ in 0..cfg.num_digits {
            let glyph = &glyphs.glyphs[rng.random_range(0..glyphs.glyphs.len())];
            let start = [rng.random::<f64>() * max_pos, rng.random::<f64>() * max_pos];
            let theta = rng.random::<f64>() * 2.0 * PI;
            let velocity = [cfg.speed * theta.cos(), cfg.speed * theta.sin()];
            let (positions, ev) = simulate_trajectory(start, velocity, cfg.seq_len, max_pos, &mut rng);
            for (t, pos) in positions.iter().enumerate() {
                let n = cfg.canvas * cfg.canvas;
                paste(&mut frames[t * n..(t + 1) * n], cfg.canvas, glyph, *pos);
            }
            events.extend(ev);
        }
        events.sort_by_key(|e| e.frame);
        log.videos.push(events);
        videos.push(Video {
            len: cfg.seq_len,
            height: cfg.canvas,
            width: cfg.canvas,
            pixels: frames.into_iter().map(quantize).collect(),
        });
    }
    let ds = VideoDataset {
        videos,
        height: cfg.canvas,
        width: cfg.canvas,
        seq_len: cfg.seq_len,
        split: cfg.split,
        seed: cfg.seed,
        bounces: Some(log.clone()),
    };
    Ok((ds, log))
}
