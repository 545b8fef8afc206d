use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{extract_crop, rgb_to_cielab, Crop, CropWindow, LabImage};
use crate::io::{list_images, load_rgb};

/// Where a training crop came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropOrigin {
    pub image: usize,
    pub center: (usize, usize),
}

#[derive(Clone, Debug, Default)]
pub struct CropSet {
    pub crops: Vec<Crop>,
    pub origins: Vec<CropOrigin>,
    /// Images that were read (indexed by [`CropOrigin::image`]).
    pub images: Vec<PathBuf>,
    /// Files skipped because they were smaller than the window.
    pub skipped: Vec<PathBuf>,
}

/// Uniformly random valid centers, `crops_per_image` per image, drawn from a
/// single seeded stream in image order. Images smaller than the window are
/// skipped and reported by index.
pub fn sample_crops(
    images: &[LabImage],
    window: CropWindow,
    crops_per_image: usize,
    seed: u64,
) -> (Vec<Crop>, Vec<CropOrigin>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut crops = Vec::with_capacity(images.len() * crops_per_image);
    let mut origins = Vec::with_capacity(crops.capacity());
    let mut skipped = Vec::new();
    for (k, img) in images.iter().enumerate() {
        let (nx, ny) = window.valid_extent(img.width(), img.height());
        if nx == 0 || ny == 0 {
            skipped.push(k);
            continue;
        }
        for _ in 0..crops_per_image {
            let i = window.half_x() + rng.random_range(0..nx);
            let j = window.half_y() + rng.random_range(0..ny);
            crops.push(extract_crop(img, i, j, window).expect("center drawn from the valid region"));
            origins.push(CropOrigin {
                image: k,
                center: (i, j),
            });
        }
    }
    (crops, origins, skipped)
}

/// Samples training crops from every PNG/PPM file of `image_dir`.
pub fn sample_training_crops(
    image_dir: &Path,
    window: CropWindow,
    crops_per_image: usize,
    seed: u64,
) -> Result<CropSet> {
    let paths = list_images(image_dir)?;
    let mut images = Vec::with_capacity(paths.len());
    for p in &paths {
        images.push(rgb_to_cielab(&load_rgb(p)?));
    }
    let (crops, origins, skipped_idx) = sample_crops(&images, window, crops_per_image, seed);
    let skipped: Vec<PathBuf> = skipped_idx.iter().map(|&k| paths[k].clone()).collect();
    for (k, p) in skipped_idx.iter().zip(&skipped) {
        let e = Error::ImageTooSmall {
            width: images[*k].width(),
            height: images[*k].height(),
            w_x: window.w_x(),
            w_y: window.w_y(),
        };
        log::warn!("skipping {}: {e}", p.display());
    }
    Ok(CropSet {
        crops,
        origins,
        images: paths,
        skipped,
    })
}
