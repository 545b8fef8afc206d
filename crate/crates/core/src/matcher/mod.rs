//! Dense latent encodings, SSR search and subpixel refinement.

mod dense;
mod landscape;
mod quadratic;
mod ssr;

pub use dense::{encode_dense, encode_dense_banded};
pub use landscape::{export_ssr_landscape, import_ssr_landscape, landscape_argmin_path};
pub use quadratic::{fit_quadratic_3x3, fit_quadratic_samples, subpixel_refine, QuadraticSurface, Refinement};
pub use ssr::{
    match_feature, match_in_field, match_in_map, select_candidate, ssr_field, Candidate,
    MatchResult, SsrField,
};

use crate::autoencoder::LatentCode;
use crate::image::CropWindow;

/// Latent codes of every position of an image. Positions closer than half a
/// window to the border are invalid and hold all-zero codes.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentMap {
    width: usize,
    height: usize,
    dim: usize,
    window: CropWindow,
    codes: Vec<f64>,
    valid: Vec<bool>,
}

impl LatentMap {
    pub(crate) fn empty(width: usize, height: usize, window: CropWindow, dim: usize) -> Self {
        let valid = (0..height)
            .flat_map(|j| (0..width).map(move |i| (i, j)))
            .map(|(i, j)| window.is_valid_center(i, j, width, height))
            .collect();
        Self {
            width,
            height,
            dim,
            window,
            codes: vec![0.0; width * height * dim],
            valid,
        }
    }

    /// Writes consecutive codes of row `j` starting at column `i0`.
    pub(crate) fn set_row(&mut self, j: usize, i0: usize, codes: &[f64]) {
        let o = (j * self.width + i0) * self.dim;
        self.codes[o..o + codes.len()].copy_from_slice(codes);
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> CropWindow {
        self.window
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        i < self.width && j < self.height && self.valid[j * self.width + i]
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// The code at column `i`, row `j` (all zeros when invalid).
    pub fn code(&self, i: usize, j: usize) -> &[f64] {
        let o = (j * self.width + i) * self.dim;
        &self.codes[o..o + self.dim]
    }

    /// The code at a valid position as a [`LatentCode`].
    pub fn latent(&self, i: usize, j: usize) -> Option<LatentCode> {
        if self.is_valid(i, j) {
            LatentCode::new(self.code(i, j).to_vec()).ok()
        } else {
            None
        }
    }

    pub fn codes(&self) -> &[f64] {
        &self.codes
    }
}
