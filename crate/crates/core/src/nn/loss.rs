use std::f64::consts::PI;

use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::image::CropWindow;

/// Mean of squared differences over all elements.
pub fn mse_loss(pred: &Tensor4, target: &Tensor4) -> Result<f64> {
    pred.ensure_same_dims(target)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Spatial weights `exp(−(m²+n²)/(2σ²)) / (2πσ²)`, `(m, n)` being integer
/// offsets from the window center.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMask {
    window: CropWindow,
    sigma: f64,
    weights: Vec<f64>,
}

pub fn gaussian_mask(window: CropWindow, sigma: f64) -> Result<GaussianMask> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let (hx, hy) = (window.half_x() as f64, window.half_y() as f64);
    let norm = 1.0 / (2.0 * PI * sigma * sigma);
    let mut weights = Vec::with_capacity(window.area());
    for row in 0..window.w_y() {
        for col in 0..window.w_x() {
            let (m, n) = (col as f64 - hx, row as f64 - hy);
            weights.push(norm * (-(m * m + n * n) / (2.0 * sigma * sigma)).exp());
        }
    }
    Ok(GaussianMask {
        window,
        sigma,
        weights,
    })
}

impl GaussianMask {
    pub fn window(&self) -> CropWindow {
        self.window
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Row-major `w_y × w_x` weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at signed offset `(m, n)` (column, row) from the center.
    pub fn weight(&self, m: isize, n: isize) -> f64 {
        let col = (m + self.window.half_x() as isize) as usize;
        let row = (n + self.window.half_y() as isize) as usize;
        self.weights[row * self.window.w_x() + col]
    }

    /// Probability mass of the continuous 2-D Gaussian inside `radius`.
    pub fn continuous_mass_within(&self, radius: f64) -> f64 {
        1.0 - (-(radius * radius) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// `Σ w(m,n)·(pred − target)²` over pixels, channels and batch, divided by
/// the element count.
pub fn weighted_mse_loss(pred: &Tensor4, target: &Tensor4, mask: &GaussianMask) -> Result<f64> {
    check_mask(pred, target, mask)?;
    let plane = mask.weights.len();
    let sum: f64 = pred
        .data()
        .chunks_exact(plane)
        .zip(target.data().chunks_exact(plane))
        .map(|(p, t)| {
            p.iter()
                .zip(t)
                .zip(&mask.weights)
                .map(|((p, t), w)| w * (p - t) * (p - t))
                .sum::<f64>()
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

fn check_mask(pred: &Tensor4, target: &Tensor4, mask: &GaussianMask) -> Result<()> {
    pred.ensure_same_dims(target)?;
    if pred.height() != mask.window.w_y() || pred.width() != mask.window.w_x() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} prediction vs {}x{} mask",
            pred.width(),
            pred.height(),
            mask.window.w_x(),
            mask.window.w_y()
        )));
    }
    Ok(())
}

/// Reconstruction objective used for training.
#[derive(Clone, Debug, PartialEq)]
pub enum Loss {
    Plain,
    Weighted(GaussianMask),
}

impl Loss {
    pub fn value(&self, pred: &Tensor4, target: &Tensor4) -> Result<f64> {
        match self {
            Loss::Plain => mse_loss(pred, target),
            Loss::Weighted(mask) => weighted_mse_loss(pred, target, mask),
        }
    }

    /// Loss value and its gradient w.r.t. `pred`.
    pub fn value_and_grad(&self, pred: &Tensor4, target: &Tensor4) -> Result<(f64, Tensor4)> {
        let value = self.value(pred, target)?;
        let scale = 2.0 / pred.len() as f64;
        let mut grad = pred.clone();
        match self {
            Loss::Plain => grad
                .data_mut()
                .iter_mut()
                .zip(target.data())
                .for_each(|(g, t)| *g = scale * (*g - t)),
            Loss::Weighted(mask) => {
                let plane = mask.weights.len();
                grad.data_mut()
                    .chunks_exact_mut(plane)
                    .zip(target.data().chunks_exact(plane))
                    .for_each(|(g, t)| {
                        g.iter_mut()
                            .zip(t)
                            .zip(&mask.weights)
                            .for_each(|((g, t), w)| *g = scale * w * (*g - t))
                    });
            }
        }
        Ok((value, grad))
    }
}
