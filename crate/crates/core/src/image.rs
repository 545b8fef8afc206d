//! Frame preparation: sRGB → CIELAB conversion, inter-area downscaling and
//! windowed crop extraction.
//!
//! Coordinates follow the image convention used throughout the crate: `i`
//! (or `x`) is the column, `j` (or `y`) the row, both 0-based.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// D65 sRGB → XYZ matrix (IEC 61966-2-1).
const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [3.240_454_2, -1.537_138_5, -0.498_531_4],
    [-0.969_266_0, 1.876_010_8, 0.041_556_0],
    [0.055_643_4, -0.204_025_9, 1.057_225_2],
];

const LAB_DELTA: f64 = 6.0 / 29.0;

/// 8-bit interleaved RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rgb8Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Rgb8Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }
}

/// CIELAB raster. Stores L in [0,100] and a, b in roughly [-128,128],
/// interleaved per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl LabImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} Lab image with {} values",
                data.len()
            )));
        }
        if let Some(bad) = data.chunks_exact(3).find(|p| !(0.0..=100.0).contains(&p[0])) {
            return Err(Error::InvalidImage(format!("L* out of range: {}", bad[0])));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn lab(&self, x: usize, y: usize) -> [f64; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    /// The pixel scaled to network range: `L/100`, `(a+128)/256`, `(b+128)/256`.
    pub fn normalized(&self, x: usize, y: usize) -> [f64; 3] {
        normalize_lab(self.lab(x, y))
    }

    pub fn as_raw(&self) -> &[f64] {
        &self.data
    }
}

pub fn normalize_lab(lab: [f64; 3]) -> [f64; 3] {
    [lab[0] / 100.0, (lab[1] + 128.0) / 256.0, (lab[2] + 128.0) / 256.0]
}

pub fn denormalize_lab(n: [f64; 3]) -> [f64; 3] {
    [n[0] * 100.0, n[1] * 256.0 - 128.0, n[2] * 256.0 - 128.0]
}

/// Odd-sized crop window `(w_x, w_y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "WindowRepr", into = "WindowRepr")]
pub struct CropWindow {
    w_x: usize,
    w_y: usize,
}

impl CropWindow {
    pub fn new(w_x: usize, w_y: usize) -> Result<Self> {
        if w_x < 3 || w_y < 3 || w_x.is_multiple_of(2) || w_y.is_multiple_of(2) {
            return Err(Error::InvalidWindow { w_x, w_y });
        }
        Ok(Self { w_x, w_y })
    }

    pub fn square(w: usize) -> Result<Self> {
        Self::new(w, w)
    }

    pub fn w_x(&self) -> usize {
        self.w_x
    }

    pub fn w_y(&self) -> usize {
        self.w_y
    }

    pub fn half_x(&self) -> usize {
        self.w_x / 2
    }

    pub fn half_y(&self) -> usize {
        self.w_y / 2
    }

    pub fn area(&self) -> usize {
        self.w_x * self.w_y
    }

    /// Whether `(i, j)` is a center whose whole window lies inside a
    /// `width × height` frame.
    pub fn is_valid_center(&self, i: usize, j: usize, width: usize, height: usize) -> bool {
        i >= self.half_x()
            && j >= self.half_y()
            && i + self.half_x() < width
            && j + self.half_y() < height
    }

    /// Number of valid centers along each axis (0 if the frame is too small).
    pub fn valid_extent(&self, width: usize, height: usize) -> (usize, usize) {
        (
            (width + 1).saturating_sub(self.w_x),
            (height + 1).saturating_sub(self.w_y),
        )
    }
}

impl Default for CropWindow {
    fn default() -> Self {
        Self { w_x: 31, w_y: 31 }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WindowRepr {
    Square(usize),
    Pair([usize; 2]),
}

impl TryFrom<WindowRepr> for CropWindow {
    type Error = Error;

    fn try_from(r: WindowRepr) -> Result<Self> {
        match r {
            WindowRepr::Square(w) => CropWindow::square(w),
            WindowRepr::Pair([x, y]) => CropWindow::new(x, y),
        }
    }
}

impl From<CropWindow> for WindowRepr {
    fn from(w: CropWindow) -> Self {
        if w.w_x == w.w_y {
            WindowRepr::Square(w.w_x)
        } else {
            WindowRepr::Pair([w.w_x, w.w_y])
        }
    }
}

/// A window of normalized CIELAB values, stored channel-major
/// (`3 × w_y × w_x`) so it can be fed to the network directly.
#[derive(Clone, Debug, PartialEq)]
pub struct Crop {
    window: CropWindow,
    data: Vec<f64>,
}

impl Crop {
    pub fn new(window: CropWindow, data: Vec<f64>) -> Result<Self> {
        if data.len() != window.area() * 3 {
            return Err(Error::ShapeMismatch(format!(
                "crop {}x{} needs {} values, got {}",
                window.w_x,
                window.w_y,
                window.area() * 3,
                data.len()
            )));
        }
        Ok(Self { window, data })
    }

    pub fn window(&self) -> CropWindow {
        self.window
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of channel `c` at column `m`, row `n` of the crop.
    pub fn get(&self, c: usize, m: usize, n: usize) -> f64 {
        self.data[(c * self.window.w_y + n) * self.window.w_x + m]
    }
}

fn srgb_linear_lut() -> &'static [f64; 256] {
    static LUT: OnceLock<[f64; 256]> = OnceLock::new();
    LUT.get_or_init(|| {
        let mut lut = [0.0; 256];
        for (v, out) in lut.iter_mut().enumerate() {
            let c = v as f64 / 255.0;
            *out = if c <= 0.040_45 {
                c / 12.92
            } else {
                ((c + 0.055) / 1.055).powf(2.4)
            };
        }
        lut
    })
}

fn white_point() -> [f64; 3] {
    // Row sums, so that (255,255,255) maps to exactly L*=100, a*=b*=0.
    let m = &SRGB_TO_XYZ;
    [
        m[0][0] + m[0][1] + m[0][2],
        m[1][0] + m[1][1] + m[1][2],
        m[2][0] + m[2][1] + m[2][2],
    ]
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_DELTA * LAB_DELTA * LAB_DELTA {
        t.cbrt()
    } else {
        t / (3.0 * LAB_DELTA * LAB_DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > LAB_DELTA {
        t * t * t
    } else {
        3.0 * LAB_DELTA * LAB_DELTA * (t - 4.0 / 29.0)
    }
}

/// Converts one sRGB pixel to CIELAB (D65), un-normalized.
pub fn srgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lut = srgb_linear_lut();
    let lin = [
        lut[rgb[0] as usize],
        lut[rgb[1] as usize],
        lut[rgb[2] as usize],
    ];
    let m = &SRGB_TO_XYZ;
    let xyz = [
        m[0][0] * lin[0] + m[0][1] * lin[1] + m[0][2] * lin[2],
        m[1][0] * lin[0] + m[1][1] * lin[1] + m[1][2] * lin[2],
        m[2][0] * lin[0] + m[2][1] * lin[1] + m[2][2] * lin[2],
    ];
    let w = white_point();
    let fx = lab_f(xyz[0] / w[0]);
    let fy = lab_f(xyz[1] / w[1]);
    let fz = lab_f(xyz[2] / w[2]);
    let l = (116.0 * fy - 16.0).clamp(0.0, 100.0);
    [l, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Inverse of [`srgb_to_lab`], rounding to the nearest 8-bit level.
pub fn lab_to_srgb(lab: [f64; 3]) -> [u8; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let w = white_point();
    let xyz = [w[0] * lab_f_inv(fx), w[1] * lab_f_inv(fy), w[2] * lab_f_inv(fz)];
    let m = &XYZ_TO_SRGB;
    let mut out = [0u8; 3];
    for (ch, row) in out.iter_mut().zip(m) {
        let lin = row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2];
        let c = if lin <= 0.003_130_8 {
            12.92 * lin
        } else {
            1.055 * lin.max(0.0).powf(1.0 / 2.4) - 0.055
        };
        *ch = (c * 255.0).round().clamp(0.0, 255.0) as u8;
    }
    out
}

pub fn rgb_to_cielab(img: &Rgb8Image) -> LabImage {
    let data = img
        .as_raw()
        .chunks_exact(3)
        .flat_map(|p| srgb_to_lab([p[0], p[1], p[2]]))
        .collect();
    LabImage {
        width: img.width,
        height: img.height,
        data,
    }
}

pub fn cielab_to_rgb(img: &LabImage) -> Rgb8Image {
    let data = img
        .as_raw()
        .chunks_exact(3)
        .flat_map(|p| lab_to_srgb([p[0], p[1], p[2]]))
        .collect();
    Rgb8Image {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Source taps and weights of each output sample of an area-averaging
/// downscale along one axis.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let start = o as f64 * scale;
            let end = ((o + 1) as f64 * scale).min(src as f64);
            let first = start.floor() as usize;
            let last = (end.ceil() as usize).min(src);
            (first..last)
                .filter_map(|s| {
                    let overlap = end.min((s + 1) as f64) - start.max(s as f64);
                    (overlap > 1e-12).then_some((s, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Inter-area (box filter) downscale. Each output pixel is the
/// overlap-weighted mean of the source pixels its footprint covers.
pub fn resize_inter_area(img: &Rgb8Image, target_w: usize, target_h: usize) -> Result<Rgb8Image> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidImage(format!(
            "target size {target_w}x{target_h}"
        )));
    }
    if target_w > img.width || target_h > img.height {
        return Err(Error::UpscaleRequested {
            width: img.width,
            height: img.height,
            target_w,
            target_h,
        });
    }
    if target_w == img.width && target_h == img.height {
        return Ok(img.clone());
    }
    let wx = area_weights(img.width, target_w);
    let wy = area_weights(img.height, target_h);

    // Horizontal pass into f64 rows, then vertical pass.
    let mut horiz = vec![0.0f64; img.height * target_w * 3];
    for y in 0..img.height {
        for (ox, taps) in wx.iter().enumerate() {
            let mut acc = [0.0; 3];
            for &(sx, w) in taps {
                let p = img.pixel(sx, y);
                for c in 0..3 {
                    acc[c] += w * p[c] as f64;
                }
            }
            horiz[(y * target_w + ox) * 3..][..3].copy_from_slice(&acc);
        }
    }
    let mut data = Vec::with_capacity(target_w * target_h * 3);
    for taps in &wy {
        for ox in 0..target_w {
            let mut acc = [0.0; 3];
            for &(sy, w) in taps {
                let row = &horiz[(sy * target_w + ox) * 3..][..3];
                for c in 0..3 {
                    acc[c] += w * row[c];
                }
            }
            data.extend(acc.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
        }
    }
    Rgb8Image::new(target_w, target_h, data)
}

/// Extracts the window centered on column `i`, row `j`, covering
/// `[i - w_x/2, i + w_x/2]` inclusive on each axis.
pub fn extract_crop(img: &LabImage, i: usize, j: usize, window: CropWindow) -> Result<Crop> {
    if !window.is_valid_center(i, j, img.width, img.height) {
        return Err(Error::OutOfBounds {
            i,
            j,
            width: img.width,
            height: img.height,
        });
    }
    let (x0, y0) = (i - window.half_x(), j - window.half_y());
    let plane = window.area();
    let mut data = vec![0.0; plane * 3];
    for n in 0..window.w_y {
        for m in 0..window.w_x {
            let v = img.normalized(x0 + m, y0 + n);
            for c in 0..3 {
                data[c * plane + n * window.w_x + m] = v[c];
            }
        }
    }
    Crop::new(window, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn white_and_black() {
        let w = srgb_to_lab([255, 255, 255]);
        assert_abs_diff_eq!(w[0], 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(w[1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(w[2], 0.0, epsilon = 1e-9);
        assert_eq!(srgb_to_lab([0, 0, 0]), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalization_is_invertible() {
        let lab = [53.24, 80.09, -67.2];
        let back = denormalize_lab(normalize_lab(lab));
        for c in 0..3 {
            assert_abs_diff_eq!(back[c], lab[c], epsilon = 1e-12);
        }
        assert_eq!(normalize_lab([100.0, 0.0, 0.0]), [1.0, 0.5, 0.5]);
    }

    #[test]
    fn resize_box_average() {
        // one channel {0,2,4,6}
        let img = Rgb8Image::new(2, 2, vec![0, 0, 0, 2, 2, 2, 4, 4, 4, 6, 6, 6]).unwrap();
        let out = resize_inter_area(&img, 1, 1).unwrap();
        assert_eq!(out.pixel(0, 0), [3, 3, 3]);
    }

    #[test]
    fn resize_identity_and_upscale() {
        let img = Rgb8Image::from_fn(5, 4, |x, y| [(x * 40) as u8, (y * 50) as u8, 7]).unwrap();
        assert_eq!(resize_inter_area(&img, 5, 4).unwrap(), img);
        assert!(matches!(
            resize_inter_area(&img, 6, 4),
            Err(Error::UpscaleRequested { .. })
        ));
    }

    #[test]
    fn resize_constant_non_integer_ratio() {
        let img = Rgb8Image::filled(4, 4, [7, 7, 7]).unwrap();
        let out = resize_inter_area(&img, 3, 3).unwrap();
        assert!(out.as_raw().iter().all(|&v| v == 7));
    }

    #[test]
    fn area_weights_match_brute_force_overlap() {
        // 4 -> 3: each output covers 4/3 source pixels.
        let w = area_weights(4, 3);
        let expect = [
            vec![(0, 0.75), (1, 0.25)],
            vec![(1, 0.5), (2, 0.5)],
            vec![(2, 0.25), (3, 0.75)],
        ];
        for (got, want) in w.iter().zip(expect.iter()) {
            assert_eq!(got.len(), want.len());
            for (g, e) in got.iter().zip(want) {
                assert_eq!(g.0, e.0);
                assert_abs_diff_eq!(g.1, e.1, epsilon = 1e-12);
            }
        }
    }

    fn ramp_lab(width: usize, height: usize) -> LabImage {
        let rgb = Rgb8Image::from_fn(width, height, |x, y| {
            [(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8]
        })
        .unwrap();
        rgb_to_cielab(&rgb)
    }

    #[test]
    fn crop_index_enumeration() {
        let img = ramp_lab(420, 300);
        let w = CropWindow::default();
        let crop = extract_crop(&img, 15, 15, w).unwrap();
        for n in 0..31 {
            for m in 0..31 {
                let v = img.normalized(m, n);
                for c in 0..3 {
                    assert_eq!(crop.get(c, m, n), v[c]);
                }
            }
        }
        assert!(matches!(
            extract_crop(&img, 0, 0, w),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(extract_crop(&img, 404, 284, w).is_ok());
        assert!(extract_crop(&img, 405, 284, w).is_err());
        assert!(extract_crop(&img, 404, 285, w).is_err());
    }

    #[test]
    fn exact_fit_crop_is_whole_image() {
        let img = ramp_lab(31, 31);
        let crop = extract_crop(&img, 15, 15, CropWindow::default()).unwrap();
        for n in 0..31 {
            for m in 0..31 {
                assert_eq!(crop.get(1, m, n), img.normalized(m, n)[1]);
            }
        }
    }

    #[test]
    fn valid_region_counts() {
        let w = CropWindow::default();
        assert_eq!(w.valid_extent(420, 300), (390, 270));
        let count = (0..420)
            .flat_map(|i| (0..300).map(move |j| (i, j)))
            .filter(|&(i, j)| w.is_valid_center(i, j, 420, 300))
            .count();
        assert_eq!(count, 105_300);
    }

    #[test]
    fn window_validation() {
        assert!(CropWindow::new(31, 31).is_ok());
        assert!(CropWindow::new(30, 31).is_err());
        assert!(CropWindow::new(1, 1).is_err());
        let w: CropWindow = serde_json::from_str("31").unwrap();
        assert_eq!(w, CropWindow::default());
        let w: CropWindow = serde_json::from_str("[5, 7]").unwrap();
        assert_eq!((w.w_x(), w.w_y()), (5, 7));
        assert!(serde_json::from_str::<CropWindow>("4").is_err());
    }

    proptest! {
        #[test]
        fn adjacent_crops_share_columns(i in 15usize..60, j in 15usize..40) {
            let img = ramp_lab(76, 56);
            let w = CropWindow::default();
            let a = extract_crop(&img, i, j, w).unwrap();
            let b = extract_crop(&img, i + 1, j, w).unwrap();
            for c in 0..3 {
                for n in 0..31 {
                    for m in 0..30 {
                        prop_assert_eq!(a.get(c, m + 1, n), b.get(c, m, n));
                    }
                }
            }
        }

        #[test]
        fn lab_round_trip(r in 0u8..=255, g in 0u8..=255, b in 0u8..=255) {
            let back = lab_to_srgb(srgb_to_lab([r, g, b]));
            for (x, y) in back.iter().zip([r, g, b]) {
                prop_assert!((*x as i32 - y as i32).abs() <= 1);
            }
        }
    }
}
