//! Digit glyph sources: procedural anti-aliased stroke digits, or glyphs read
//! from an IDX image file.

use std::path::Path;

use crate::error::{NuqError, Result};

/// A square grayscale glyph in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    pub size: usize,
    pub pixels: Vec<f32>,
}

impl Glyph {
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.size + col]
    }
}

// Seven-segment endpoints in unit glyph coordinates (x, y), y downward.
const SEG_A: [(f32, f32); 2] = [(0.28, 0.14), (0.72, 0.14)];
const SEG_B: [(f32, f32); 2] = [(0.72, 0.14), (0.72, 0.5)];
const SEG_C: [(f32, f32); 2] = [(0.72, 0.5), (0.72, 0.86)];
const SEG_D: [(f32, f32); 2] = [(0.28, 0.86), (0.72, 0.86)];
const SEG_E: [(f32, f32); 2] = [(0.28, 0.5), (0.28, 0.86)];
const SEG_F: [(f32, f32); 2] = [(0.28, 0.14), (0.28, 0.5)];
const SEG_G: [(f32, f32); 2] = [(0.28, 0.5), (0.72, 0.5)];

fn segments(digit: usize) -> Vec<[(f32, f32); 2]> {
    match digit {
        1 => vec![[(0.5, 0.12), (0.5, 0.88)], [(0.36, 0.24), (0.5, 0.12)]],
        2 => vec![SEG_A, SEG_B, SEG_G, SEG_E, SEG_D],
        3 => vec![SEG_A, SEG_B, SEG_G, SEG_C, SEG_D],
        4 => vec![SEG_F, SEG_G, SEG_B, SEG_C],
        5 => vec![SEG_A, SEG_F, SEG_G, SEG_C, SEG_D],
        6 => vec![SEG_A, SEG_F, SEG_G, SEG_E, SEG_C, SEG_D],
        7 => vec![SEG_A, SEG_B, SEG_C],
        8 => vec![SEG_A, SEG_B, SEG_C, SEG_D, SEG_E, SEG_F, SEG_G],
        9 => vec![SEG_A, SEG_B, SEG_C, SEG_D, SEG_F, SEG_G],
        _ => vec![],
    }
}

fn dist_to_segment(p: (f32, f32), a: (f32, f32), b: (f32, f32)) -> f32 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Renders digit `digit` (0..=9) at `size`×`size` pixels. Zero is a ring
/// (difference of two discs); the others are capsule bars.
pub fn procedural_glyph(digit: usize, size: usize) -> Glyph {
    let s = size as f32;
    let half_width = (0.07 * s).max(0.9);
    let mut pixels = vec![0.0f32; size * size];
    for row in 0..size {
        for col in 0..size {
            let p = (col as f32 + 0.5, row as f32 + 0.5);
            // Signed distance (pixels) to the stroke boundary; negative inside.
            let d = if digit % 10 == 0 {
                let c = (0.5 * s, 0.5 * s);
                let (rx, ry) = (0.24 * s, 0.36 * s);
                let (nx, ny) = ((p.0 - c.0) / rx, (p.1 - c.1) / ry);
                let r = (nx * nx + ny * ny).sqrt();
                (r - 1.0).abs() * rx.min(ry) - half_width
            } else {
                segments(digit % 10)
                    .iter()
                    .map(|seg| {
                        let a = (seg[0].0 * s, seg[0].1 * s);
                        let b = (seg[1].0 * s, seg[1].1 * s);
                        dist_to_segment(p, a, b)
                    })
                    .fold(f32::INFINITY, f32::min)
                    - half_width
            };
            pixels[row * size + col] = (0.5 - d).clamp(0.0, 1.0);
        }
    }
    Glyph { size, pixels }
}

/// Glyphs available to the synthesizer.
#[derive(Debug, Clone)]
pub struct GlyphSet {
    pub glyphs: Vec<Glyph>,
}

impl GlyphSet {
    pub fn procedural(size: usize) -> Self {
        GlyphSet {
            glyphs: (0..10).map(|d| procedural_glyph(d, size)).collect(),
        }
    }

    /// Reads an IDX3 unsigned-byte image file (the layout used by the
    /// classic handwritten-digit distribution) and resamples each image to
    /// `size`×`size`. At most `limit` images are kept.
    pub fn from_idx(path: &Path, size: usize, limit: usize) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| NuqError::io(path, e))?;
        if bytes.len() < 16 {
            return Err(NuqError::format(path, "truncated IDX header"));
        }
        let word = |i: usize| u32::from_be_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as usize;
        if word(0) != 0x0803 {
            return Err(NuqError::format(path, "not an IDX3 unsigned-byte file"));
        }
        let (n, rows, cols) = (word(4), word(8), word(12));
        if bytes.len() < 16 + n * rows * cols {
            return Err(NuqError::format(path, "IDX payload shorter than header declares"));
        }
        let take = n.min(limit.max(1));
        let mut glyphs = Vec::with_capacity(take);
        for i in 0..take {
            let src = &bytes[16 + i * rows * cols..16 + (i + 1) * rows * cols];
            glyphs.push(resample(src, rows, cols, size));
        }
        if glyphs.is_empty() {
            return Err(NuqError::format(path, "IDX file holds no images"));
        }
        Ok(GlyphSet { glyphs })
    }
}

fn resample(src: &[u8], rows: usize, cols: usize, size: usize) -> Glyph {
    let mut pixels = vec![0.0f32; size * size];
    for r in 0..size {
        for c in 0..size {
            let y = ((r as f32 + 0.5) * rows as f32 / size as f32 - 0.5).clamp(0.0, (rows - 1) as f32);
            let x = ((c as f32 + 0.5) * cols as f32 / size as f32 - 0.5).clamp(0.0, (cols - 1) as f32);
            let (y0, x0) = (y.floor() as usize, x.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(rows - 1), (x0 + 1).min(cols - 1));
            let (fy, fx) = (y - y0 as f32, x - x0 as f32);
            let p = |yy: usize, xx: usize| src[yy * cols + xx] as f32 / 255.0;
            let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
            let bot = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
            pixels[r * size + c] = top * (1.0 - fy) + bot * fy;
        }
    }
    Glyph { size, pixels }
}
