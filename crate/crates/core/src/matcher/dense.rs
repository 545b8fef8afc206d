//! Dense encoding of every crop of an image with shared computation.
//!
//! Neighbouring crops overlap in all but one row or column, so most
//! intermediate activations are shared. Sharing is exact only where the
//! crop-local zero padding is the same, so along each axis the local indices
//! of every convolution level are grouped into classes with identical padding
//! structure. An activation is then determined by its class pair and its
//! global position `anchor + S·u` (`S` the cumulative stride), and each class
//! pair is computed once for the whole image as a dense map. The arithmetic
//! per output element (gather order, GEMM inner dimension, bias, batch norm,
//! ReLU) is the same as in the single-crop path, so the codes are bit-equal to
//! `encode(extract_crop(..))`.

use rayon::prelude::*;

use super::LatentMap;
use crate::autoencoder::Autoencoder;
use crate::error::{Error, Result};
use crate::image::{extract_crop, CropWindow, LabImage};
use crate::nn::{bn_eval_coeffs, matmul, relu_scalar, Layer, LayerKind, MatRef};

/// Anchor rows encoded together.
const DEFAULT_BAND_ROWS: usize = 32;
/// Output positions per GEMM call.
const CHUNK_POSITIONS: usize = 256;

#[derive(Clone, Debug)]
struct AxisClass {
    /// Class of each kernel tap's input at the previous level, `None` for padding.
    taps: Vec<Option<usize>>,
    u_min: usize,
    u_max: usize,
}

/// Classes of the local indices of one level along one axis.
#[derive(Clone, Debug)]
struct AxisLevel {
    stride: usize,
    class_of: Vec<usize>,
    classes: Vec<AxisClass>,
}

impl AxisLevel {
    fn input(size: usize) -> Self {
        Self {
            stride: 1,
            class_of: vec![0; size],
            classes: vec![AxisClass {
                taps: Vec::new(),
                u_min: 0,
                u_max: size - 1,
            }],
        }
    }

    fn conv(prev: &AxisLevel, kernel: usize, stride: usize, padding: usize, out: usize) -> Self {
        let n_in = prev.class_of.len() as isize;
        let mut classes: Vec<AxisClass> = Vec::new();
        let mut class_of = Vec::with_capacity(out);
        for u in 0..out {
            let taps: Vec<Option<usize>> = (0..kernel)
                .map(|t| {
                    let idx = (u * stride + t) as isize - padding as isize;
                    (0..n_in).contains(&idx).then(|| prev.class_of[idx as usize])
                })
                .collect();
            let k = match classes.iter().position(|c| c.taps == taps) {
                Some(k) => {
                    classes[k].u_max = u;
                    k
                }
                None => {
                    classes.push(AxisClass {
                        taps,
                        u_min: u,
                        u_max: u,
                    });
                    classes.len() - 1
                }
            };
            class_of.push(k);
        }
        Self {
            stride: prev.stride * stride,
            class_of,
            classes,
        }
    }

    /// Global position range `[lo, hi]` of a class for anchors `[a0, a1)`.
    fn range(&self, class: usize, a0: usize, a1: usize) -> (usize, usize) {
        let c = &self.classes[class];
        (a0 + self.stride * c.u_min, a1 - 1 + self.stride * c.u_max)
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvStage {
    layer: usize,
    level: usize,
}

/// How to run an encoder densely, derived once from its layer list.
struct DensePlan {
    x_levels: Vec<AxisLevel>,
    y_levels: Vec<AxisLevel>,
    /// Pointwise layers to apply after reaching each level.
    pointwise: Vec<Vec<usize>>,
    convs: Vec<ConvStage>,
}

impl DensePlan {
    /// `None` when the encoder is not a conv/batch-norm/ReLU stack ending in
    /// a 1×1 output.
    fn new(layers: &[Layer], window: CropWindow) -> Option<Self> {
        let mut x_levels = vec![AxisLevel::input(window.w_x())];
        let mut y_levels = vec![AxisLevel::input(window.w_y())];
        let mut pointwise = vec![Vec::new()];
        let mut convs = Vec::new();
        let mut dims = [1, layers.first()?.spec().in_channels, window.w_y(), window.w_x()];
        for (idx, layer) in layers.iter().enumerate() {
            let spec = layer.spec();
            match spec.kind {
                LayerKind::Conv => {
                    let out = spec.output_dims(dims).ok()?;
                    let lx = x_levels.last()?;
                    let ly = y_levels.last()?;
                    x_levels.push(AxisLevel::conv(lx, spec.kernel, spec.stride, spec.padding, out[3]));
                    y_levels.push(AxisLevel::conv(ly, spec.kernel, spec.stride, spec.padding, out[2]));
                    pointwise.push(Vec::new());
                    convs.push(ConvStage {
                        layer: idx,
                        level: x_levels.len() - 1,
                    });
                    dims = out;
                }
                LayerKind::BatchNorm | LayerKind::Relu => pointwise.last_mut()?.push(idx),
                LayerKind::ConvTranspose => return None,
            }
        }
        if dims[2] != 1 || dims[3] != 1 {
            return None;
        }
        Some(Self {
            x_levels,
            y_levels,
            pointwise,
            convs,
        })
    }
}

/// Activations of one class pair over a rectangle of global positions,
/// stored channel-last.
struct ClassMap {
    y0: usize,
    x0: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ClassMap {
    #[inline]
    fn at(&self, gy: usize, gx: usize) -> &[f64] {
        let o = ((gy - self.y0) * self.width + (gx - self.x0)) * self.channels;
        &self.data[o..o + self.channels]
    }
}

fn apply_pointwise(layer: &Layer, maps: &mut [ClassMap]) {
    match layer.spec().kind {
        LayerKind::BatchNorm => {
            let coeffs = bn_eval_coeffs(layer.params());
            for m in maps {
                for px in m.data.chunks_exact_mut(m.channels) {
                    for (v, &(scale, shift)) in px.iter_mut().zip(&coeffs) {
                        *v = *v * scale + shift;
                    }
                }
            }
        }
        LayerKind::Relu => {
            for m in maps {
                m.data.iter_mut().for_each(|v| *v = relu_scalar(*v));
            }
        }
        _ => unreachable!("only pointwise layers are applied here"),
    }
}

/// Encodes anchor rows `[ay0, ay1)` for every anchor column; returns the
/// latent codes row-major, channel-last.
fn encode_band(
    plan: &DensePlan,
    layers: &[Layer],
    image: &LabImage,
    (ay0, ay1): (usize, usize),
    nx: usize,
) -> Vec<f64> {
    let (lx0, ly0) = (&plan.x_levels[0], &plan.y_levels[0]);
    let (y0, y1) = ly0.range(0, ay0, ay1);
    let (x0, x1) = lx0.range(0, 0, nx);
    let width = x1 - x0 + 1;
    let mut data = Vec::with_capacity((y1 - y0 + 1) * width * 3);
    for y in y0..=y1 {
        for x in x0..=x1 {
            data.extend_from_slice(&image.normalized(x, y));
        }
    }
    let mut maps = vec![ClassMap {
        y0,
        x0,
        width,
        channels: 3,
        data,
    }];
    for &l in &plan.pointwise[0] {
        apply_pointwise(&layers[l], &mut maps);
    }

    for stage in &plan.convs {
        let layer = &layers[stage.layer];
        let spec = layer.spec();
        let (k, p) = (spec.kernel, spec.padding);
        let (cin, cout) = (spec.in_channels, spec.out_channels);
        let kk = cin * k * k;
        let (lx, ly) = (&plan.x_levels[stage.level], &plan.y_levels[stage.level]);
        let (px, py) = (&plan.x_levels[stage.level - 1], &plan.y_levels[stage.level - 1]);
        let n_prev_x = px.classes.len();
        let weight = MatRef::transposed(&layer.params().weight, kk, cout);
        let bias = &layer.params().bias;

        let mut next = Vec::with_capacity(ly.classes.len() * lx.classes.len());
        let mut cols = Vec::new();
        for (cy, ycls) in ly.classes.iter().enumerate() {
            let (gy0, gy1) = ly.range(cy, ay0, ay1);
            for (cx, xcls) in lx.classes.iter().enumerate() {
                let (gx0, gx1) = lx.range(cx, 0, nx);
                let w = gx1 - gx0 + 1;
                let positions = (gy1 - gy0 + 1) * w;
                let mut out = vec![0.0; positions * cout];
                for start in (0..positions).step_by(CHUNK_POSITIONS) {
                    let end = (start + CHUNK_POSITIONS).min(positions);
                    let rows = end - start;
                    cols.clear();
                    cols.resize(rows * kk, 0.0);
                    for (r, pos) in (start..end).enumerate() {
                        let (gy, gx) = (gy0 + pos / w, gx0 + pos % w);
                        let dst = &mut cols[r * kk..(r + 1) * kk];
                        for (ky, ty) in ycls.taps.iter().enumerate() {
                            let Some(ty) = ty else { continue };
                            let sy = gy + py.stride * ky - py.stride * p;
                            for (kx, tx) in xcls.taps.iter().enumerate() {
                                let Some(tx) = tx else { continue };
                                let sx = gx + px.stride * kx - px.stride * p;
                                let src = maps[ty * n_prev_x + tx].at(sy, sx);
                                for (ci, &v) in src.iter().enumerate() {
                                    dst[(ci * k + ky) * k + kx] = v;
                                }
                            }
                        }
                    }
                    let chunk = &mut out[start * cout..end * cout];
                    matmul(MatRef::new(&cols, rows, kk), weight, chunk);
                    for px in chunk.chunks_exact_mut(cout) {
                        for (v, b) in px.iter_mut().zip(bias) {
                            *v += b;
                        }
                    }
                }
                next.push(ClassMap {
                    y0: gy0,
                    x0: gx0,
                    width: w,
                    channels: cout,
                    data: out,
                });
            }
        }
        maps = next;
        for &l in &plan.pointwise[stage.level] {
            apply_pointwise(&layers[l], &mut maps);
        }
    }
    debug_assert_eq!(maps.len(), 1);
    maps.pop().expect("one class at the 1x1 output").data
}

/// Latent code of every valid center of `image`.
pub fn encode_dense(model: &Autoencoder, image: &LabImage, window: CropWindow) -> Result<LatentMap> {
    encode_dense_banded(model, image, window, DEFAULT_BAND_ROWS)
}

/// [`encode_dense`] processing `band_rows` rows of centers at a time. The
/// result does not depend on `band_rows`.
pub fn encode_dense_banded(
    model: &Autoencoder,
    image: &LabImage,
    window: CropWindow,
    band_rows: usize,
) -> Result<LatentMap> {
    if window != model.spec().input_window {
        return Err(Error::ShapeMismatch(format!(
            "window {window:?} differs from the model's {:?}",
            model.spec().input_window
        )));
    }
    let (width, height) = (image.width(), image.height());
    let (nx, ny) = window.valid_extent(width, height);
    if nx == 0 || ny == 0 {
        return Err(Error::ImageTooSmall {
            width,
            height,
            w_x: window.w_x(),
            w_y: window.w_y(),
        });
    }
    let dim = model.spec().latent_dim;
    let mut map = LatentMap::empty(width, height, window, dim);
    let layers = model.encoder().layers();
    let bands: Vec<(usize, usize)> = (0..ny)
        .step_by(band_rows.max(1))
        .map(|a| (a, (a + band_rows.max(1)).min(ny)))
        .collect();

    match DensePlan::new(layers, window) {
        Some(plan) => {
            let results: Vec<Vec<f64>> = bands
                .par_iter()
                .map(|&band| encode_band(&plan, layers, image, band, nx))
                .collect();
            for (&(a0, a1), codes) in bands.iter().zip(results) {
                for ay in a0..a1 {
                    let row = &codes[(ay - a0) * nx * dim..(ay - a0 + 1) * nx * dim];
                    map.set_row(ay + window.half_y(), window.half_x(), row);
                }
            }
        }
        None => {
            // generic path for encoders the planner does not cover
            for ay in 0..ny {
                let crops = (0..nx)
                    .map(|ax| extract_crop(image, ax + window.half_x(), ay + window.half_y(), window))
                    .collect::<Result<Vec<_>>>()?;
                let codes: Vec<f64> = model
                    .encode_batch(&crops)?
                    .into_iter()
                    .flat_map(|c| c.values().to_vec())
                    .collect();
                map.set_row(ay + window.half_y(), window.half_x(), &codes);
            }
        }
    }
    Ok(map)
}
