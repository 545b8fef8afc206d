//! Shared inputs for the benchmarks.

use dfe_core::autoencoder::crops_to_tensor;
use dfe_core::nn::Tensor4;
use dfe_core::synth::TextureField;
use dfe_core::{extract_crop, rgb_to_cielab, Autoencoder, CropWindow, LabImage};

/// Seeded texture of `width × height` in CIELAB.
pub fn texture(width: usize, height: usize, seed: u64) -> LabImage {
    let field = TextureField::random(seed, width.max(height) as f64);
    rgb_to_cielab(&field.render(width, height).expect("non-empty image"))
}

/// `batch` crops of a texture stacked into a model input tensor.
pub fn crop_batch(model: &Autoencoder, batch: usize) -> Tensor4 {
    let window = CropWindow::default();
    let img = texture(96, 96, 3);
    let crops: Vec<_> = (0..batch)
        .map(|k| extract_crop(&img, 15 + (k * 7) % 60, 15 + (k * 13) % 60, window).expect("valid center"))
        .collect();
    crops_to_tensor(model.spec(), &crops).expect("crops match the model")
}
