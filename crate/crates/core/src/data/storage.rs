//! On-disk dataset layout:
//!
//! ```text
//! <dir>/manifest.txt          num_videos, T, H, W, seed, split (key=value)
//! <dir>/video_00000/frame_0000.pgm ...
//! <dir>/bounces.csv           video,frame,wall,dir_x,dir_y (optional)
//! ```

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma};

use super::{BounceEvent, BounceLog, Split, Video, VideoDataset, Wall};
use crate::error::{NuqError, Result};
use crate::kv;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const BOUNCE_FILE: &str = "bounces.csv";

fn video_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("video_{index:05}"))
}

fn frame_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("frame_{t:04}.pgm"))
}

fn write_gray(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let img: GrayImage = ImageBuffer::<Luma<u8>, _>::from_raw(width as u32, height as u32, pixels.to_vec())
        .ok_or_else(|| NuqError::Shape(format!("{} pixels for a {width}x{height} frame", pixels.len())))?;
    img.save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|source| NuqError::Image { path: path.to_path_buf(), source })
}

fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => NuqError::io(path, e),
        other => NuqError::Image { path: path.to_path_buf(), source: other },
    })?;
    Ok(img.into_luma8())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| NuqError::io(path, e))
}

/// Writes frames (each `height*width` values in [0,1]) as `frame_%04d.pgm`.
pub fn save_frames(dir: &Path, frames: &[Vec<f32>], height: usize, width: usize) -> Result<()> {
    create_dir(dir)?;
    for (t, f) in frames.iter().enumerate() {
        let px: Vec<u8> = f.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        write_gray(&frame_path(dir, t), width, height, &px)?;
    }
    Ok(())
}

/// Reads every `frame_%04d.pgm` in `dir`, in index order.
pub fn load_frame_dir(dir: &Path) -> Result<Video> {
    let mut frames = Vec::new();
    let (mut height, mut width) = (0, 0);
    loop {
        let path = frame_path(dir, frames.len());
        if !path.exists() {
            break;
        }
        let img = read_gray(&path)?;
        if frames.is_empty() {
            (width, height) = (img.width() as usize, img.height() as usize);
        } else if (img.width() as usize, img.height() as usize) != (width, height) {
            return Err(NuqError::format(&path, "frame size differs from the first frame"));
        }
        frames.push(img.into_raw());
    }
    if frames.is_empty() {
        return Err(NuqError::format(dir, "no frame_0000.pgm found"));
    }
    Ok(Video {
        len: frames.len(),
        height,
        width,
        pixels: frames.concat(),
    })
}

pub fn save_dataset(ds: &VideoDataset, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    for (i, video) in ds.videos.iter().enumerate() {
        if video.len != ds.seq_len || video.height != ds.height || video.width != ds.width {
            return Err(NuqError::Shape(format!("video {i} does not match the dataset shape")));
        }
        let vdir = video_dir(dir, i);
        create_dir(&vdir)?;
        for t in 0..video.len {
            write_gray(&frame_path(&vdir, t), video.width, video.height, video.frame(t))?;
        }
    }
    if let Some(log) = &ds.bounces {
        let path = dir.join(BOUNCE_FILE);
        let mut out = String::from("video,frame,wall,dir_x,dir_y\n");
        for (v, events) in log.videos.iter().enumerate() {
            for e in events {
                out.push_str(&format!(
                    "{v},{},{},{},{}\n",
                    e.frame,
                    e.wall,
                    kv::fmt_f64(e.direction[0]),
                    kv::fmt_f64(e.direction[1])
                ));
            }
        }
        fs::write(&path, out).map_err(|e| NuqError::io(&path, e))?;
    }
    // Manifest last: a directory with a manifest is complete.
    let path = dir.join(MANIFEST_FILE);
    let mut f = fs::File::create(&path).map_err(|e| NuqError::io(&path, e))?;
    write!(
        f,
        "num_videos={}\nT={}\nH={}\nW={}\nseed={}\nsplit={}\n",
        ds.videos.len(),
        ds.seq_len,
        ds.height,
        ds.width,
        ds.seed,
        ds.split
    )
    .map_err(|e| NuqError::io(&path, e))?;
    Ok(())
}

fn manifest_value<T: std::str::FromStr>(entries: &[(String, String)], key: &str, path: &Path) -> Result<T> {
    let raw = entries
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| NuqError::format(path, format!("missing key `{key}`")))?;
    raw.parse()
        .map_err(|_| NuqError::format(path, format!("bad value `{raw}` for `{key}`")))
}

fn load_bounces(path: &Path, num_videos: usize) -> Result<BounceLog> {
    let text = fs::read_to_string(path).map_err(|e| NuqError::io(path, e))?;
    let mut log = BounceLog { videos: vec![Vec::new(); num_videos] };
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| NuqError::format(path, format!("line {}: {what}", lineno + 1));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad("expected 5 columns"));
        }
        let video: usize = cols[0].parse().map_err(|_| bad("bad video index"))?;
        let frame: usize = cols[1].parse().map_err(|_| bad("bad frame index"))?;
        let wall: Wall = cols[2].parse().map_err(|e: String| bad(&e))?;
        let dx: f64 = cols[3].parse().map_err(|_| bad("bad dir_x"))?;
        let dy: f64 = cols[4].parse().map_err(|_| bad("bad dir_y"))?;
        let slot = log.videos.get_mut(video).ok_or_else(|| bad("video index out of range"))?;
        slot.push(BounceEvent { frame, wall, direction: [dx, dy] });
    }
    Ok(log)
}

pub fn load_dataset(dir: &Path) -> Result<VideoDataset> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| NuqError::io(&mpath, e))?;
    let entries = kv::parse_lines(&text, &mpath)?;
    let num_videos: usize = manifest_value(&entries, "num_videos", &mpath)?;
    let seq_len: usize = manifest_value(&entries, "T", &mpath)?;
    let height: usize = manifest_value(&entries, "H", &mpath)?;
    let width: usize = manifest_value(&entries, "W", &mpath)?;
    let seed: u64 = manifest_value(&entries, "seed", &mpath)?;
    let split: Split = manifest_value(&entries, "split", &mpath)?;

    let mut videos = Vec::with_capacity(num_videos);
    for i in 0..num_videos {
        let vdir = video_dir(dir, i);
        if !vdir.is_dir() {
            return Err(NuqError::format(
                &vdir,
                format!("manifest declares {num_videos} videos but this one is missing"),
            ));
        }
        let mut pixels = Vec::with_capacity(seq_len * height * width);
        for t in 0..seq_len {
            let path = frame_path(&vdir, t);
            if !path.exists() {
                return Err(NuqError::format(&path, format!("manifest declares T={seq_len} but this frame is missing")));
            }
            let img = read_gray(&path)?;
            if (img.height() as usize, img.width() as usize) != (height, width) {
                return Err(NuqError::format(
                    &path,
                    format!("frame is {}x{}, manifest says {height}x{width}", img.height(), img.width()),
                ));
            }
            pixels.extend_from_slice(img.as_raw());
        }
        if frame_path(&vdir, seq_len).exists() {
            return Err(NuqError::format(&vdir, format!("more than T={seq_len} frames present")));
        }
        videos.push(Video { len: seq_len, height, width, pixels });
    }
    let bpath = dir.join(BOUNCE_FILE);
    let bounces = if bpath.exists() {
        Some(load_bounces(&bpath, num_videos)?)
    } else {
        None
    };
    Ok(VideoDataset { videos, height, width, seq_len, split, seed, bounces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize_smmnist, SynthConfig};

    fn dataset(n: usize, canvas: usize) -> VideoDataset {
        let cfg = SynthConfig {
            num_videos: n,
            seq_len: 6,
            canvas,
            digit_size: canvas / 2,
            speed: 2.0,
            seed: 4,
            ..SynthConfig::default()
        };
        synthesize_smmnist(&cfg).unwrap().0
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dataset(3, 16);
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn missing_video_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dataset(5, 16);
        save_dataset(&ds, dir.path()).unwrap();
        fs::remove_dir_all(dir.path().join("video_00004")).unwrap();
        match load_dataset(dir.path()) {
            Err(NuqError::Format { path, .. }) => assert!(path.ends_with("video_00004")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_frame_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&dataset(2, 16), dir.path()).unwrap();
        fs::remove_file(dir.path().join("video_00001").join("frame_0005.pgm")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(NuqError::Format { .. })));
    }

    #[test]
    fn shape_comes_from_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dataset(2, 20);
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!((back.height, back.width), (20, 20));
    }

    #[test]
    fn corrupt_manifest_names_file() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&dataset(1, 16), dir.path()).unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "num_videos=x\nT=6\nH=16\nW=16\nseed=1\nsplit=train\n").unwrap();
        match load_dataset(dir.path()) {
            Err(NuqError::Format { path, .. }) => assert!(path.ends_with(MANIFEST_FILE)),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn frame_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let frames = vec![vec![0.0f32, 0.5, 1.0, 0.25], vec![1.0f32; 4]];
        save_frames(dir.path(), &frames, 2, 2).unwrap();
        let v = load_frame_dir(dir.path()).unwrap();
        assert_eq!(v.len, 2);
        assert_eq!(v.frame(0), &[0, 128, 255, 64]);
    }
}
