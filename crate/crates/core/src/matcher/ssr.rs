use serde::{Deserialize, Serialize};

use super::dense::encode_dense;
use super::quadratic::{fit_quadratic_3x3, subpixel_refine, Refinement};
use super::LatentMap;
use crate::autoencoder::{Autoencoder, LatentCode};
use crate::error::{Error, Result};
use crate::image::{CropWindow, LabImage};

/// Sum of squared latent differences to a reference code at every position.
#[derive(Clone, Debug)]
pub struct SsrField {
    width: usize,
    height: usize,
    ssr: Vec<f64>,
    valid: Vec<bool>,
}

/// Fields are equal when they share the shape, the valid mask and every
/// valid value.
impl PartialEq for SsrField {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.valid == other.valid
            && self.iter_valid().zip(other.iter_valid()).all(|(a, b)| a == b)
    }
}

impl SsrField {
    /// Builds a field from row-major values; `None` marks invalid positions.
    pub fn from_values(width: usize, height: usize, values: &[Option<f64>]) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} field",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            ssr: values.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            valid: values.iter().map(Option::is_some).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// The SSR at column `i`, row `j`, or `None` when invalid or outside.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i >= self.width || j >= self.height {
            return None;
        }
        let k = j * self.width + i;
        self.valid[k].then_some(self.ssr[k])
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_some()
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    /// Valid positions with their values in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        let w = self.width;
        self.ssr
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter(|(_, (_, &ok))| ok)
            .map(move |(k, (&v, _))| ((k % w, k / w), v))
    }

    /// The field with `offset` added to every valid value.
    pub fn shifted(&self, offset: f64) -> Self {
        let mut out = self.clone();
        for (v, &ok) in out.ssr.iter_mut().zip(&self.valid) {
            if ok {
                *v += offset;
            }
        }
        out
    }
}

/// `ε(i, j) = Σ_k (h_k(i, j) − r_k)²` over the valid positions of `map`.
pub fn ssr_field(map: &LatentMap, reference: &LatentCode) -> Result<SsrField> {
    if reference.len() != map.dim() {
        return Err(Error::ShapeMismatch(format!(
            "reference has {} components, map has {}",
            reference.len(),
            map.dim()
        )));
    }
    let r = reference.values();
    let (w, h) = (map.width(), map.height());
    let mut ssr = vec![f64::NAN; w * h];
    for j in 0..h {
        for i in 0..w {
            if map.is_valid(i, j) {
                ssr[j * w + i] = map
                    .code(i, j)
                    .iter()
                    .zip(r)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
            }
        }
    }
    Ok(SsrField {
        width: w,
        height: h,
        ssr,
        valid: map.valid_mask().to_vec(),
    })
}

/// The chosen integer position with tie diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub pixel: (usize, usize),
    pub ssr_min: f64,
    /// Number of positions sharing the minimum value.
    pub tie_count: usize,
}

/// Global minimum over valid positions. Exact ties go to the largest
/// curvature (Hessian trace of the 3×3 fit, zero without a full
/// neighbourhood), then to the first in row-major order.
pub fn select_candidate(field: &SsrField) -> Result<Candidate> {
    let min = field
        .iter_valid()
        .map(|(_, v)| v)
        .min_by(f64::total_cmp)
        .ok_or(Error::EmptyField)?;
    let tied: Vec<(usize, usize)> = field
        .iter_valid()
        .filter(|&(_, v)| v == min)
        .map(|(p, _)| p)
        .collect();
    let mut best = tied[0];
    if tied.len() > 1 {
        let curvature = |p| fit_quadratic_3x3(field, p).map_or(0.0, |s| s.curvature());
        let mut best_c = curvature(best);
        for &p in &tied[1..] {
            let c = curvature(p);
            if c > best_c {
                best = p;
                best_c = c;
            }
        }
    }
    Ok(Candidate {
        pixel: best,
        ssr_min: min,
        tie_count: tied.len(),
    })
}

/// Located feature position with refinement diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pixel: (usize, usize),
    pub subpixel: (f64, f64),
    pub ssr_min: f64,
    /// `false` when the subpixel position fell back to the pixel.
    pub refined: bool,
    pub hessian_pd: bool,
    pub tie_count: usize,
}

/// Candidate selection and quadratic refinement on a computed field. An
/// exact match (SSR 0) keeps its integer pixel.
pub fn match_in_field(field: &SsrField) -> Result<MatchResult> {
    let cand = select_candidate(field)?;
    let (i, j) = cand.pixel;
    let mut result = MatchResult {
        pixel: cand.pixel,
        subpixel: (i as f64, j as f64),
        ssr_min: cand.ssr_min,
        refined: false,
        hessian_pd: false,
        tie_count: cand.tie_count,
    };
    if let Ok(surface) = fit_quadratic_3x3(field, cand.pixel) {
        result.hessian_pd = surface.hessian_pd();
        if cand.ssr_min == 0.0 {
            return Ok(result);
        }
        if let Refinement::Refined { dx, dy } = subpixel_refine(&surface) {
            result.subpixel = (i as f64 + dx, j as f64 + dy);
            result.refined = true;
        }
    }
    Ok(result)
}

pub fn match_in_map(map: &LatentMap, reference: &LatentCode) -> Result<MatchResult> {
    match_in_field(&ssr_field(map, reference)?)
}

/// Encodes `target` densely and locates `reference` in it.
pub fn match_feature(
    model: &Autoencoder,
    reference: &LatentCode,
    target: &LabImage,
    window: CropWindow,
) -> Result<MatchResult> {
    if reference.len() != model.spec().latent_dim {
        return Err(Error::ShapeMismatch(format!(
            "reference has {} components, model produces {}",
            reference.len(),
            model.spec().latent_dim
        )));
    }
    match_in_map(&encode_dense(model, target, window)?, reference)
}
