use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{crops_to_tensor, Autoencoder};
use crate::error::{Error, Result};
use crate::image::Crop;
use crate::nn::{adamax_step, gaussian_mask, AdamaxConfig, AdamaxState, Loss, Mode};

/// Reconstruction loss selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossConfig {
    #[default]
    Plain,
    Weighted { sigma: f64 },
}

impl LossConfig {
    pub fn build(&self, model: &Autoencoder) -> Result<Loss> {
        match *self {
            LossConfig::Plain => Ok(Loss::Plain),
            LossConfig::Weighted { sigma } => Ok(Loss::Weighted(gaussian_mask(
                model.spec().input_window,
                sigma,
            )?)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossConfig::Plain => "plain",
            LossConfig::Weighted { .. } => "weighted",
        }
    }
}

fn default_learning_rate() -> f64 {
    AdamaxConfig::default().alpha
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub loss: LossConfig,
    pub seed: u64,
    pub crops_per_image: usize,
    /// Constant Adamax step size.
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            loss: LossConfig::Plain,
            seed: 0,
            crops_per_image: 400,
            learning_rate: default_learning_rate(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(
                "batch_size must be at least 2 for batch normalization".into(),
            ));
        }
        if let LossConfig::Weighted { sigma } = self.loss {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
            }
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Mean training loss of every epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingHistory {
    pub epoch_losses: Vec<f64>,
}

impl TrainingHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,loss\n");
        for (k, l) in self.epoch_losses.iter().enumerate() {
            out.push_str(&format!("{},{l:e}\n", k + 1));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Trains with Adamax over batches drawn from a per-epoch shuffle of `crops`.
pub fn train(
    model: &mut Autoencoder,
    crops: &[Crop],
    config: &TrainingConfig,
) -> Result<TrainingHistory> {
    train_with_callback(model, crops, config, |_, _, _| {})
}

/// As [`train`], calling `on_epoch(epoch, mean_loss, model)` after every
/// epoch (1-based).
pub fn train_with_callback(
    model: &mut Autoencoder,
    crops: &[Crop],
    config: &TrainingConfig,
    mut on_epoch: impl FnMut(usize, f64, &Autoencoder),
) -> Result<TrainingHistory> {
    config.validate()?;
    if crops.len() < config.batch_size {
        return Err(Error::InvalidConfig(format!(
            "{} crops cannot fill a batch of {}",
            crops.len(),
            config.batch_size
        )));
    }
    let loss = config.loss.build(model)?;
    let sizes: Vec<usize> = model.trainable().iter().map(|p| p.len()).collect();
    let mut optimizer = AdamaxState::new(
        &sizes,
        AdamaxConfig {
            alpha: config.learning_rate,
            ..AdamaxConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..crops.len()).collect();
    let mut history = TrainingHistory::default();
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut seen = 0usize;
        // a trailing batch smaller than two is dropped
        for idx in order.chunks(config.batch_size).filter(|c| c.len() >= 2) {
            batch.clear();
            batch.extend(idx.iter().map(|&k| crops[k].clone()));
            let x = crops_to_tensor(model.spec(), &batch)?;
            let value = train_step(model, &x, &loss, &mut optimizer)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            total += value * idx.len() as f64;
            seen += idx.len();
        }
        let mean = total / seen as f64;
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        log::info!("epoch {epoch}: loss {mean:.6e}");
        history.epoch_losses.push(mean);
        on_epoch(epoch, mean, model);
    }
    Ok(history)
}

/// One forward/backward/update on a batch; returns the pre-update loss.
fn train_step(
    model: &mut Autoencoder,
    x: &crate::nn::Tensor4,
    loss: &Loss,
    optimizer: &mut AdamaxState,
) -> Result<f64> {
    let (encoder, decoder) = model.networks_mut();
    let (z, enc_tape) = encoder.forward(x, Mode::Train)?;
    let (y, dec_tape) = decoder.forward(&z, Mode::Train)?;
    let (value, grad) = loss.value_and_grad(&y, x)?;
    if !value.is_finite() {
        return Ok(value);
    }
    let dec_grads = decoder.backward(&dec_tape, &grad)?;
    let enc_grads = encoder.backward(&enc_tape, &dec_grads.input)?;
    let mut grads = enc_grads.trainable();
    grads.extend(dec_grads.trainable());
    let mut params = encoder.trainable_mut();
    params.extend(decoder.trainable_mut());
    adamax_step(&mut params, &grads, optimizer)?;
    Ok(value)
}
