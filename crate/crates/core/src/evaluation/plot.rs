//! Minimal raster line plots (no text): axes, horizontal grid, polylines
//! with point markers and vertical event markers.

use image::{Rgb, RgbImage};

pub const BLUE: [u8; 3] = [31, 90, 180];
pub const ORANGE: [u8; 3] = [230, 120, 20];
pub const RED: [u8; 3] = [200, 30, 30];

#[derive(Debug, Clone)]
pub struct Series {
    pub points: Vec<(f64, f64)>,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub series: Vec<Series>,
    /// x positions drawn as dashed vertical lines.
    pub markers: Vec<f64>,
    pub y_range: Option<(f64, f64)>,
}

const MARGIN: i64 = 24;

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, c);
        put(img, x, y + 1, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn draw_panel(img: &mut RgbImage, panel: &Panel, top: i64, height: i64) {
    let width = img.width() as i64;
    let (x0, x1) = (MARGIN, width - MARGIN);
    let (y0, y1) = (top + MARGIN / 2, top + height - MARGIN / 2);
    let all = || panel.series.iter().flat_map(|s| s.points.iter());
    let (xmin, xmax) = extent(all().map(|p| p.0).chain(panel.markers.iter().copied()));
    let (ymin, ymax) = panel.y_range.unwrap_or_else(|| extent(all().map(|p| p.1)));
    let px = |x: f64| x0 + ((x - xmin) / (xmax - xmin) * (x1 - x0) as f64).round() as i64;
    let py = |y: f64| y1 - ((y - ymin) / (ymax - ymin) * (y1 - y0) as f64).round() as i64;
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i / 4;
        for x in x0..=x1 {
            put(img, x, y, [225, 225, 225]);
        }
    }
    for &m in &panel.markers {
        let x = px(m);
        for y in (y0..=y1).filter(|y| (y / 3) % 2 == 0) {
            put(img, x, y, RED);
        }
    }
    line(img, (x0, y1), (x1, y1), [0, 0, 0]);
    line(img, (x0, y0), (x0, y1), [0, 0, 0]);
    for s in &panel.series {
        let pts: Vec<(i64, i64)> = s.points.iter().map(|&(x, y)| (px(x), py(y))).collect();
        for w in pts.windows(2) {
            line(img, w[0], w[1], s.color);
        }
        for &(x, y) in &pts {
            for d in -2..=2 {
                for e in -2..=2 {
                    put(img, x + d, y + e, s.color);
                }
            }
        }
    }
}

/// Panels stacked vertically.
pub fn render(panels: &[Panel], width: u32, panel_height: u32) -> RgbImage {
    let n = panels.len().max(1) as u32;
    let mut img = RgbImage::from_pixel(width, panel_height * n, Rgb([255, 255, 255]));
    for (i, p) in panels.iter().enumerate() {
        draw_panel(&mut img, p, (i as u32 * panel_height) as i64, panel_height as i64);
    }
    img
}
