use rand::seq::SliceRandom;
use rand::Rng as _;

use super::VideoDataset;
use crate::error::{NuqError, Result};
use crate::seeding::{self, Rng};

/// A batch of equal-length windows, `[batch, time, 1, height, width]` in [0,1].
/// Frames `0..context` are conditioning frames; the rest are prediction
/// targets.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoBatch {
    pub frames: Vec<f32>,
    pub batch: usize,
    pub len: usize,
    pub height: usize,
    pub width: usize,
    pub context: usize,
    /// Dataset index of each row.
    pub videos: Vec<usize>,
    /// First frame of each row's window within its video.
    pub starts: Vec<usize>,
}

impl VideoBatch {
    pub fn is_context(&self, t: usize) -> bool {
        t < self.context
    }

    pub fn frame(&self, b: usize, t: usize) -> &[f32] {
        let n = self.height * self.width;
        let off = (b * self.len + t) * n;
        &self.frames[off..off + n]
    }

    /// Builds a batch from explicit windows `(video, start)`.
    pub fn from_windows(ds: &VideoDataset, windows: &[(usize, usize)], context: usize, len: usize) -> Result<Self> {
        let n = ds.height * ds.width;
        let mut frames = Vec::with_capacity(windows.len() * len * n);
        for &(v, start) in windows {
            let video = ds
                .videos
                .get(v)
                .ok_or_else(|| NuqError::config("video", format!("index {v} out of range")))?;
            if start + len > video.len {
                return Err(NuqError::config("total_len", format!("window {start}+{len} exceeds video length {}", video.len)));
            }
            for t in start..start + len {
                frames.extend(video.frame(t).iter().map(|&p| p as f32 / 255.0));
            }
        }
        Ok(VideoBatch {
            frames,
            batch: windows.len(),
            len,
            height: ds.height,
            width: ds.width,
            context,
            videos: windows.iter().map(|w| w.0).collect(),
            starts: windows.iter().map(|w| w.1).collect(),
        })
    }
}

/// One epoch over a dataset: a seeded permutation of the videos, one random
/// contiguous window per video, final partial batch included.
pub struct BatchIter<'a> {
    ds: &'a VideoDataset,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    context: usize,
    total_len: usize,
    rng: Rng,
}

pub fn batch_iter(
    ds: &VideoDataset,
    batch_size: usize,
    context: usize,
    total_len: usize,
    seed: u64,
) -> Result<BatchIter<'_>> {
    if batch_size == 0 {
        return Err(NuqError::config("batch_size", "must be at least 1"));
    }
    if context == 0 || context >= total_len {
        return Err(NuqError::config("F", format!("need 1 <= F < total_len, got F={context}, total_len={total_len}")));
    }
    if let Some(short) = ds.videos.iter().map(|v| v.len).filter(|&l| l < total_len).min() {
        return Err(NuqError::config("total_len", format!("{total_len} exceeds video length {short}")));
    }
    let mut rng = seeding::rng(seed);
    let mut order: Vec<usize> = (0..ds.videos.len()).collect();
    order.shuffle(&mut rng);
    Ok(BatchIter { ds, order, pos: 0, batch_size, context, total_len, rng })
}

impl Iterator for BatchIter<'_> {
    type Item = VideoBatch;

    fn next(&mut self) -> Option<VideoBatch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let windows: Vec<(usize, usize)> = self.order[self.pos..end]
            .iter()
            .map(|&v| {
                let slack = self.ds.videos[v].len - self.total_len;
                (v, self.rng.random_range(0..=slack))
            })
            .collect();
        self.pos = end;
        Some(
            VideoBatch::from_windows(self.ds, &windows, self.context, self.total_len)
                .expect("windows validated at construction"),
        )
    }
}
