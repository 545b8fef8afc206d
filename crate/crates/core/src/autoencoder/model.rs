use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Crop, CropWindow};
use crate::nn::{LayerSpec, Network, Tensor4};

/// Architecture of the autoencoder `y(x) = g(f(x))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoder_layers: Vec<LayerSpec>,
    pub decoder_layers: Vec<LayerSpec>,
    pub latent_dim: usize,
    pub input_window: CropWindow,
    pub channels: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::with_widths([32, 64, 128], 128)
    }
}

impl ModelSpec {
    /// The 31×31×3 architecture with the given hidden widths and latent size.
    ///
    /// Encoder: three `k3 s2 p1` convolutions (31→16→8→4), each followed by
    /// batch norm and ReLU, then a `k4` convolution to a 1×1 latent with no
    /// activation. The decoder mirrors it with transposed convolutions.
    pub fn with_widths(widths: [usize; 3], latent_dim: usize) -> Self {
        let [w1, w2, w3] = widths;
        let encoder_layers = vec![
            LayerSpec::conv(3, w1, 3, 2, 1),
            LayerSpec::batch_norm(w1),
            LayerSpec::relu(w1),
            LayerSpec::conv(w1, w2, 3, 2, 1),
            LayerSpec::batch_norm(w2),
            LayerSpec::relu(w2),
            LayerSpec::conv(w2, w3, 3, 2, 1),
            LayerSpec::batch_norm(w3),
            LayerSpec::relu(w3),
            LayerSpec::conv(w3, latent_dim, 4, 1, 0),
        ];
        let decoder_layers = vec![
            LayerSpec::conv_transpose(latent_dim, w3, 4, 1, 0, 0),
            LayerSpec::batch_norm(w3),
            LayerSpec::relu(w3),
            LayerSpec::conv_transpose(w3, w2, 3, 2, 1, 1),
            LayerSpec::batch_norm(w2),
            LayerSpec::relu(w2),
            LayerSpec::conv_transpose(w2, w1, 3, 2, 1, 1),
            LayerSpec::batch_norm(w1),
            LayerSpec::relu(w1),
            LayerSpec::conv_transpose(w1, 3, 3, 2, 1, 0),
        ];
        Self {
            encoder_layers,
            decoder_layers,
            latent_dim,
            input_window: CropWindow::default(),
            channels: 3,
        }
    }

    /// The default architecture with every width divided by `divisor`.
    pub fn width_reduced(divisor: usize) -> Self {
        let d = divisor.max(1);
        Self::with_widths([32 / d, 64 / d, 128 / d], 128 / d)
    }

    pub fn input_dims(&self, batch: usize) -> [usize; 4] {
        [
            batch,
            self.channels,
            self.input_window.w_y(),
            self.input_window.w_x(),
        ]
    }

    /// Latent size over input size (128 / 2883 ≈ 0.0444 for the default).
    pub fn compression_factor(&self) -> f64 {
        self.latent_dim as f64 / (self.input_window.area() * self.channels) as f64
    }

    pub fn validate(&self) -> Result<()> {
        let enc = Network::new(&self.encoder_layers)?;
        let dec = Network::new(&self.decoder_layers)?;
        let latent = enc.output_dims(self.input_dims(1))?;
        if latent != [1, self.latent_dim, 1, 1] {
            return Err(Error::InvalidLayer(format!(
                "encoder produces {latent:?}, expected a 1x1 latent of {}",
                self.latent_dim
            )));
        }
        let out = dec.output_dims(latent)?;
        if out != self.input_dims(1) {
            return Err(Error::InvalidLayer(format!(
                "decoder produces {out:?}, expected {:?}",
                self.input_dims(1)
            )));
        }
        Ok(())
    }
}

/// Encoder output for one crop.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    values: Vec<f64>,
}

impl LatentCode {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !values.iter().all(|v| v.is_finite()) {
            return Err(Error::ShapeMismatch(
                "latent code must be non-empty and finite".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    spec: ModelSpec,
    encoder: Network,
    decoder: Network,
}

/// The default 31×31 → 128 model with He-uniform weights drawn from `seed`.
pub fn build_default_model(seed: u64) -> Autoencoder {
    Autoencoder::new(ModelSpec::default(), seed).expect("default architecture is consistent")
}

impl Autoencoder {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut encoder = Network::new(&spec.encoder_layers)?;
        let mut decoder = Network::new(&spec.decoder_layers)?;
        encoder.init_he_uniform(&mut rng);
        decoder.init_he_uniform(&mut rng);
        Ok(Self {
            spec,
            encoder,
            decoder,
        })
    }

    pub fn from_parts(spec: ModelSpec, encoder: Network, decoder: Network) -> Result<Self> {
        spec.validate()?;
        if encoder.specs() != spec.encoder_layers || decoder.specs() != spec.decoder_layers {
            return Err(Error::ShapeMismatch(
                "networks do not match the model specification".into(),
            ));
        }
        Ok(Self {
            spec,
            encoder,
            decoder,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn encoder(&self) -> &Network {
        &self.encoder
    }

    pub fn decoder(&self) -> &Network {
        &self.decoder
    }

    pub fn encoder_mut(&mut self) -> &mut Network {
        &mut self.encoder
    }

    pub fn decoder_mut(&mut self) -> &mut Network {
        &mut self.decoder
    }

    pub(crate) fn networks_mut(&mut self) -> (&mut Network, &mut Network) {
        (&mut self.encoder, &mut self.decoder)
    }

    /// Encoder followed by decoder as a single network.
    pub fn as_network(&self) -> Network {
        Network::from_layers(
            self.encoder
                .layers()
                .iter()
                .chain(self.decoder.layers())
                .cloned()
                .collect(),
        )
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    pub fn trainable(&self) -> Vec<&[f64]> {
        let mut t = self.encoder.trainable();
        t.extend(self.decoder.trainable());
        t
    }

    fn check_crop(&self, crop: &Crop) -> Result<()> {
        if crop.window() != self.spec.input_window {
            return Err(Error::ShapeMismatch(format!(
                "crop window {:?} vs model window {:?}",
                crop.window(),
                self.spec.input_window
            )));
        }
        Ok(())
    }

    /// Eval-mode latent code of one crop.
    pub fn encode(&self, crop: &Crop) -> Result<LatentCode> {
        self.check_crop(crop)?;
        let x = Tensor4::new(self.spec.input_dims(1), crop.data().to_vec())?;
        LatentCode::new(self.encoder.forward_eval(&x)?.into_data())
    }

    pub fn encode_batch(&self, crops: &[Crop]) -> Result<Vec<LatentCode>> {
        if crops.is_empty() {
            return Ok(Vec::new());
        }
        let x = crops_to_tensor(&self.spec, crops)?;
        let z = self.encoder.forward_eval(&x)?;
        z.into_data()
            .chunks_exact(self.spec.latent_dim)
            .map(|c| LatentCode::new(c.to_vec()))
            .collect()
    }

    /// `g(f(crop))` in eval mode.
    pub fn reconstruct(&self, crop: &Crop) -> Result<Crop> {
        self.check_crop(crop)?;
        let x = Tensor4::new(self.spec.input_dims(1), crop.data().to_vec())?;
        let y = self.decoder.forward_eval(&self.encoder.forward_eval(&x)?)?;
        Crop::new(self.spec.input_window, y.into_data())
    }

    pub fn reconstruct_batch(&self, crops: &[Crop]) -> Result<Vec<Crop>> {
        if crops.is_empty() {
            return Ok(Vec::new());
        }
        let x = crops_to_tensor(&self.spec, crops)?;
        let y = self.decoder.forward_eval(&self.encoder.forward_eval(&x)?)?;
        let per = self.spec.input_window.area() * self.spec.channels;
        y.into_data()
            .chunks_exact(per)
            .map(|c| Crop::new(self.spec.input_window, c.to_vec()))
            .collect()
    }
}

/// Stacks crops into a `(n, 3, w_y, w_x)` batch.
pub fn crops_to_tensor(spec: &ModelSpec, crops: &[Crop]) -> Result<Tensor4> {
    let mut data = Vec::with_capacity(crops.len() * spec.input_window.area() * spec.channels);
    for c in crops {
        if c.window() != spec.input_window {
            return Err(Error::ShapeMismatch("crop window differs from model".into()));
        }
        data.extend_from_slice(c.data());
    }
    Tensor4::new(spec.input_dims(crops.len()), data)
}
