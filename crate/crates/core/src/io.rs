//! PNG / PPM reading and numbered frame sequences.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::Rgb8Image;

const IMAGE_EXTENSIONS: &[&str] = &["png", "ppm", "pnm"];

pub fn load_rgb(path: &Path) -> Result<Rgb8Image> {
    let img = image::open(path)
        .map_err(|source| Error::Decode {
            path: path.to_owned(),
            source,
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Rgb8Image::new(w as usize, h as usize, img.into_raw())
}

pub fn save_png(img: &Rgb8Image, path: &Path) -> Result<()> {
    let buf = image::RgbImage::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.as_raw().to_vec(),
    )
    .expect("dimensions checked at construction");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Decode {
            path: path.to_owned(),
            source,
        })
}

/// A frame file with the number parsed from the trailing digits of its stem
/// (`frame_000123.png` → 123).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameFile {
    pub number: u64,
    pub path: PathBuf,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Image files of a directory sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_image(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn trailing_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// Frames of a directory in numeric order. Files without a trailing number
/// are numbered by their 1-based position in name order.
pub fn list_frames(dir: &Path) -> Result<Vec<FrameFile>> {
    let paths = list_images(dir)?;
    let mut frames: Vec<FrameFile> = paths
        .into_iter()
        .enumerate()
        .map(|(k, path)| FrameFile {
            number: trailing_number(&path).unwrap_or(k as u64 + 1),
            path,
        })
        .collect();
    frames.sort_by(|a, b| a.number.cmp(&b.number).then_with(|| a.path.cmp(&b.path)));
    Ok(frames)
}

/// Keeps every `n`-th item starting with the first (`n = 25` turns 50 FPS
/// into 2 FPS).
pub fn keep_every<T: Clone>(items: &[T], n: usize) -> Vec<T> {
    items.iter().step_by(n.max(1)).cloned().collect()
}

pub fn frame_file_name(number: u64) -> String {
    format!("frame_{number:06}.png")
}
