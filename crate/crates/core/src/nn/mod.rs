//! A small deterministic neural-network engine: 4-D tensors, convolution,
//! transposed convolution, batch norm and ReLU with exact reverse-mode
//! gradients, the two reconstruction losses, and Adamax.

mod adamax;
mod gemm;
mod gradcheck;
mod layer;
mod loss;
mod network;
mod tensor;

pub use adamax::{adamax_step, AdamaxConfig, AdamaxState};
pub use gradcheck::{gradcheck, GradcheckReport};
pub use layer::{
    layer_forward, Layer, LayerCache, LayerGrads, LayerKind, LayerParams, LayerSpec, Mode,
    BN_EPSILON, BN_MOMENTUM,
};
pub use loss::{gaussian_mask, mse_loss, weighted_mse_loss, GaussianMask, Loss};
pub use network::{backprop, Gradients, Network, Tape};
pub use tensor::Tensor4;

pub(crate) use gemm::{matmul, MatRef};
pub(crate) use layer::{bn_eval_coeffs, relu_scalar};
