//! The feature-extraction autoencoder: architecture, crop sampling,
//! training and checkpoints.

mod checkpoint;
mod model;
mod sampling;
mod train;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, Checkpoint,
    TrainingMeta, CHECKPOINT_VERSION,
};
pub use model::{build_default_model, crops_to_tensor, Autoencoder, LatentCode, ModelSpec};
pub use sampling::{sample_crops, sample_training_crops, CropOrigin, CropSet};
pub use train::{train, train_with_callback, LossConfig, TrainingConfig, TrainingHistory};
