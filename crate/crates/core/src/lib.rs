//! Deep feature encodings for skin-feature tracking.
//!
//! A small convolutional autoencoder is trained on 31×31 CIELAB patches; its
//! 128-dimensional latent codes serve as dense per-pixel descriptors. A
//! reference feature is located in a new frame by a global search for the
//! minimum sum of squared residuals (SSR) between latent codes, refined to
//! subpixel precision with a quadratic fit, and tracks are scored with a
//! χ²-standardized error protocol.

pub mod autoencoder;
pub mod error;
pub mod eval;
pub mod image;
pub mod io;
pub mod matcher;
pub mod nn;
pub mod synth;

pub use autoencoder::{Autoencoder, LatentCode, ModelSpec};
pub use error::{Error, Result};
pub use image::{
    extract_crop, resize_inter_area, rgb_to_cielab, Crop, CropWindow, LabImage, Rgb8Image,
};
pub use matcher::{LatentMap, MatchResult, SsrField};
