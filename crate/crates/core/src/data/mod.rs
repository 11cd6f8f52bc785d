//! Synthetic bouncing-digit videos: generation, on-disk datasets and
//! training batches.

mod batch;
pub mod glyphs;
mod storage;
mod synth;

use std::fmt;
use std::str::FromStr;

pub use batch::{batch_iter, BatchIter, VideoBatch};
pub use storage::{load_dataset, load_frame_dir, save_dataset, save_frames, BOUNCE_FILE, MANIFEST_FILE};
pub use synth::{simulate_trajectory, synthesize_smmnist, BounceEvent, BounceLog, DigitSource, SynthConfig, Wall};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train, val or test)")),
        }
    }
}

/// One grayscale video stored as 8-bit pixels, frame-major `[T, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub len: usize,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl Video {
    pub fn frame(&self, t: usize) -> &[u8] {
        let n = self.height * self.width;
        &self.pixels[t * n..(t + 1) * n]
    }

    /// Frame `t` scaled to [0,1].
    pub fn frame_f32(&self, t: usize) -> Vec<f32> {
        self.frame(t).iter().map(|&p| p as f32 / 255.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoDataset {
    pub videos: Vec<Video>,
    pub height: usize,
    pub width: usize,
    /// Frames per video.
    pub seq_len: usize,
    pub split: Split,
    pub seed: u64,
    pub bounces: Option<BounceLog>,
}

impl VideoDataset {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    /// The first `n` videos (and their bounce annotations).
    pub fn head(&self, n: usize) -> VideoDataset {
        let n = n.min(self.videos.len());
        VideoDataset {
            videos: self.videos[..n].to_vec(),
            bounces: self.bounces.as_ref().map(|b| BounceLog {
                videos: b.videos.iter().take(n).cloned().collect(),
            }),
            ..self.clone()
        }
    }
}
