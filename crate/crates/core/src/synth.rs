//! Seeded synthetic imagery: continuous color textures for training, and a
//! video of a textured patch moving on a known subpixel path.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::Rgb8Image;

#[derive(Clone, Debug, PartialEq)]
enum Component {
    Grating { k: [f64; 2], phase: f64, color: [f64; 3] },
    Blob { center: [f64; 2], radius: f64, color: [f64; 3] },
    Edge { normal: [f64; 2], offset: f64, width: f64, color: [f64; 3] },
}

/// A smooth color field that can be sampled at any real position, so
/// translated copies are exact up to quantization.
#[derive(Clone, Debug, PartialEq)]
pub struct TextureField {
    base: [f64; 3],
    components: Vec<Component>,
}

fn random_color(rng: &mut ChaCha8Rng, amplitude: f64) -> [f64; 3] {
    [0; 3].map(|_| rng.random_range(-amplitude..amplitude))
}

impl TextureField {
    /// Random field covering roughly `extent × extent` pixels around the
    /// origin.
    pub fn random(seed: u64, extent: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = [0; 3].map(|_| rng.random_range(70.0..185.0));
        let mut components = Vec::new();
        for _ in 0..rng.random_range(3..6) {
            let period = rng.random_range(6.0..40.0);
            let angle = rng.random_range(0.0..PI);
            let k = [angle.cos() * 2.0 * PI / period, angle.sin() * 2.0 * PI / period];
            components.push(Component::Grating {
                k,
                phase: rng.random_range(0.0..2.0 * PI),
                color: random_color(&mut rng, 30.0),
            });
        }
        let blobs = (extent * extent / 500.0).clamp(4.0, 400.0) as usize;
        for _ in 0..blobs {
            components.push(Component::Blob {
                center: [rng.random_range(0.0..extent), rng.random_range(0.0..extent)],
                radius: rng.random_range(2.0..12.0),
                color: random_color(&mut rng, 70.0),
            });
        }
        for _ in 0..rng.random_range(2..6) {
            let angle = rng.random_range(0.0..2.0 * PI);
            components.push(Component::Edge {
                normal: [angle.cos(), angle.sin()],
                offset: rng.random_range(0.0..extent),
                width: rng.random_range(0.7..2.5),
                color: random_color(&mut rng, 40.0),
            });
        }
        Self { base, components }
    }

    /// Unclamped RGB value at `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> [f64; 3] {
        let mut c = self.base;
        for comp in &self.components {
            let (w, color) = match comp {
                Component::Grating { k, phase, color } => ((k[0] * x + k[1] * y + phase).sin(), color),
                Component::Blob { center, radius, color } => {
                    let d2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                    ((-d2 / (2.0 * radius * radius)).exp(), color)
                }
                Component::Edge { normal, offset, width, color } => {
                    let s = normal[0] * x + normal[1] * y - offset;
                    ((s / width).tanh(), color)
                }
            };
            for ch in 0..3 {
                c[ch] += w * color[ch];
            }
        }
        c
    }

    pub fn render(&self, width: usize, height: usize) -> Result<Rgb8Image> {
        Rgb8Image::from_fn(width, height, |x, y| quantize(self.eval(x as f64, y as f64)))
    }
}

fn quantize(c: [f64; 3]) -> [u8; 3] {
    c.map(|v| v.round().clamp(0.0, 255.0) as u8)
}

/// `count` seeded textures of `width × height`.
pub fn texture_corpus(count: usize, width: usize, height: usize, seed: u64) -> Result<Vec<Rgb8Image>> {
    let extent = width.max(height) as f64;
    (0..count)
        .map(|k| TextureField::random(seed.wrapping_mul(1_000_003).wrapping_add(k as u64), extent).render(width, height))
        .collect()
}

/// Parameters of the moving-patch sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Radius of the circular patch in pixels.
    pub patch_radius: f64,
    /// Peak displacement of the path from its start, per axis.
    pub amplitude: [f64; 2],
    /// Relative brightness change reached in the last frame.
    pub gain_drift: f64,
    /// Additive drift per channel reached in the last frame.
    pub offset_drift: f64,
    /// Standard deviation of the simulated manual relabeling.
    pub label_sigma: f64,
    pub seed: u64,
}

impl Default for VideoConfig {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            frames: 60,
            patch_radius: 22.0,
            amplitude: [14.0, 9.0],
            gain_drift: -0.08,
            offset_drift: 6.0,
            label_sigma: 1.0,
            seed: 7,
        }
    }
}

/// Frames (numbered from 1) with the exact patch-center position per frame.
#[derive(Clone, Debug)]
pub struct SyntheticVideo {
    pub frames: Vec<(u64, Rgb8Image)>,
    pub truth: Vec<(u64, (f64, f64))>,
    pub label_sigma: f64,
}

impl SyntheticVideo {
    /// Integer start position of the patch center.
    pub fn reference_point(&self) -> (usize, usize) {
        let (x, y) = self.truth[0].1;
        (x as usize, y as usize)
    }
}

/// Patch center at normalized time `s ∈ [0, 1]`, starting at `start`.
fn path(start: (f64, f64), amplitude: [f64; 2], s: f64) -> (f64, f64) {
    (
        start.0 + amplitude[0] * (2.0 * PI * s).sin() + 0.37 * amplitude[0] * s,
        start.1 + amplitude[1] * (1.0 - (3.0 * PI * s).cos()) * 0.5 - 0.41 * amplitude[1] * s * s,
    )
}

/// Renders the sequence: a textured disk with a soft rim composited over a
/// static background, then a global gain and offset that drift linearly.
pub fn moving_patch_video(cfg: &VideoConfig) -> Result<SyntheticVideo> {
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if cfg.frames < 2 || !positive(cfg.label_sigma) || !positive(cfg.patch_radius) {
        return Err(Error::InvalidConfig(
            "video needs at least 2 frames, positive label sigma and patch radius".into(),
        ));
    }
    let start = ((cfg.width / 2) as f64, (cfg.height / 2) as f64);
    let margin = cfg.patch_radius + 16.0;
    let extent = cfg.width.max(cfg.height) as f64;
    let background = TextureField::random(cfg.seed.wrapping_mul(2).wrapping_add(1), extent);
    let patch = TextureField::random(cfg.seed.wrapping_mul(2).wrapping_add(2), 2.0 * cfg.patch_radius);
    let r = cfg.patch_radius;
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut truth = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let s = t as f64 / (cfg.frames - 1) as f64;
        let (px, py) = path(start, cfg.amplitude, s);
        if px < margin || py < margin || px > cfg.width as f64 - margin || py > cfg.height as f64 - margin {
            return Err(Error::InvalidConfig(format!("patch path leaves the {}x{} frame", cfg.width, cfg.height)));
        }
        let gain = 1.0 + cfg.gain_drift * s;
        let offset = cfg.offset_drift * s;
        let img = Rgb8Image::from_fn(cfg.width, cfg.height, |x, y| {
            let (x, y) = (x as f64, y as f64);
            let (dx, dy) = (x - px, y - py);
            let alpha = 0.5 * (1.0 + ((r - dx.hypot(dy)) / 1.5).tanh());
            let fg = patch.eval(dx + r, dy + r);
            let bg = background.eval(x, y);
            quantize([0, 1, 2].map(|c| (alpha * fg[c] + (1.0 - alpha) * bg[c]) * gain + offset))
        })?;
        frames.push((t as u64 + 1, img));
        truth.push((t as u64 + 1, (px, py)));
    }
    Ok(SyntheticVideo {
        frames,
        truth,
        label_sigma: cfg.label_sigma,
    })
}

/// Simulated manual relabeling: `attempts` noisy copies of each point with
/// independent Gaussian errors of standard deviation `sigma` per axis.
pub fn relabel_points(points: &[(f64, f64)], attempts: usize, sigma: f64, seed: u64) -> Result<Vec<Vec<(f64, f64)>>> {
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(points
        .iter()
        .map(|&(x, y)| {
            (0..attempts)
                .map(|_| (x + noise.sample(&mut rng), y + noise.sample(&mut rng)))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textures_are_seeded_and_varied() {
        let a = texture_corpus(3, 64, 48, 5).unwrap();
        let b = texture_corpus(3, 64, 48, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        let img = &a[0];
        let lum: Vec<f64> = (0..img.height())
            .flat_map(|y| (0..img.width()).map(move |x| (x, y)))
            .map(|(x, y)| img.pixel(x, y).iter().map(|&v| v as f64).sum::<f64>())
            .collect();
        let mean = lum.iter().sum::<f64>() / lum.len() as f64;
        let var = lum.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / lum.len() as f64;
        assert!(var.sqrt() > 20.0, "texture too flat: {}", var.sqrt());
    }

    #[test]
    fn video_geometry_and_truth() {
        let cfg = VideoConfig { frames: 12, ..VideoConfig::default() };
        let v = moving_patch_video(&cfg).unwrap();
        assert_eq!(v.frames.len(), 12);
        assert_eq!(v.truth[0].1, (80.0, 60.0));
        assert_eq!(v.reference_point(), (80, 60));
        assert!(v.truth.iter().skip(1).any(|(_, (x, y))| x.fract() != 0.0 && y.fract() != 0.0));
        assert_eq!(v.frames[3].1.width(), 160);
        let w = moving_patch_video(&cfg).unwrap();
        assert_eq!(v.frames, w.frames);
    }

    #[test]
    fn path_outside_frame_is_rejected() {
        let cfg = VideoConfig { amplitude: [80.0, 0.0], ..VideoConfig::default() };
        assert!(moving_patch_video(&cfg).is_err());
    }

    #[test]
    fn relabels_have_requested_spread() {
        let pts = vec![(10.0, 20.0); 400];
        let r = relabel_points(&pts, 5, 2.0, 3).unwrap();
        let errs: Vec<f64> = r.iter().flatten().map(|p| p.0 - 10.0).collect();
        let sd = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
        assert!((sd - 2.0).abs() < 0.1, "{sd}");
    }
}
