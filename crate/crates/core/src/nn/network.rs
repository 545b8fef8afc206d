use rand::Rng;

use super::layer::{Layer, LayerCache, LayerGrads, LayerKind, LayerSpec, Mode};
use super::tensor::Tensor4;
use crate::error::{Error, Result};

/// A feed-forward stack of layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Forward-pass intermediates, one cache per layer.
#[derive(Debug)]
pub struct Tape {
    caches: Vec<LayerCache>,
    input_dims: [usize; 4],
}

impl Tape {
    /// Whether each ReLU output of the pass was positive, in layer order.
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.caches
            .iter()
            .filter_map(|c| match c {
                LayerCache::Relu { output } => Some(output.iter().map(|&v| v > 0.0)),
                _ => None,
            })
            .flatten()
            .collect()
    }
}

/// Gradients of a loss w.r.t. every layer's parameters and the input.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    pub input: Tensor4,
}

impl Gradients {
    /// Flat views in the order of [`Network::trainable`].
    pub fn trainable(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .filter(|g| !g.weight.is_empty())
            .flat_map(|g| [g.weight.as_slice(), g.bias.as_slice()])
            .collect()
    }
}

impl Network {
    pub fn new(specs: &[LayerSpec]) -> Result<Self> {
        for pair in specs.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(Error::InvalidLayer(format!(
                    "{} output channels feed a layer expecting {}",
                    pair[0].out_channels, pair[1].in_channels
                )));
            }
        }
        let layers = specs.iter().map(|s| Layer::new(*s)).collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| *l.spec()).collect()
    }

    /// He-uniform weights (`U(±√(6/fan_in))`, fan-in = input channels × k²),
    /// zero biases, identity batch norm.
    pub fn init_he_uniform(&mut self, rng: &mut impl Rng) {
        for layer in &mut self.layers {
            let spec = *layer.spec();
            if !matches!(spec.kind, LayerKind::Conv | LayerKind::ConvTranspose) {
                continue;
            }
            let fan_in = (spec.in_channels * spec.kernel * spec.kernel) as f64;
            let bound = (6.0 / fan_in).sqrt();
            let p = layer.params_mut();
            p.weight
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-bound..bound));
            p.bias.fill(0.0);
        }
    }

    pub fn param_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Weights and biases of every parameterized layer, in layer order.
    pub fn trainable(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .filter(|l| l.spec().has_params())
            .flat_map(|l| [l.params().weight.as_slice(), l.params().bias.as_slice()])
            .collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .filter(|l| l.spec().has_params())
            .flat_map(|l| {
                let p = l.params_mut();
                [p.weight.as_mut_slice(), p.bias.as_mut_slice()]
            })
            .collect()
    }

    pub fn output_dims(&self, dims: [usize; 4]) -> Result<[usize; 4]> {
        self.layers
            .iter()
            .try_fold(dims, |d, l| l.spec().output_dims(d))
    }

    /// Forward pass recording intermediates; updates batch-norm running
    /// statistics in train mode.
    pub fn forward(&mut self, x: &Tensor4, mode: Mode) -> Result<(Tensor4, Tape)> {
        let input_dims = x.dims();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &mut self.layers {
            let (y, cache) = layer.forward(&cur, mode)?;
            caches.push(cache);
            cur = y;
        }
        Ok((cur, Tape { caches, input_dims }))
    }

    /// Like [`Network::forward`] but never touches running statistics.
    pub fn forward_pure(&self, x: &Tensor4, mode: Mode) -> Result<(Tensor4, Tape)> {
        let input_dims = x.dims();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward_pure(&cur, mode)?;
            caches.push(cache);
            cur = y;
        }
        Ok((cur, Tape { caches, input_dims }))
    }

    pub fn forward_eval(&self, x: &Tensor4) -> Result<Tensor4> {
        self.layers
            .iter()
            .try_fold(x.clone(), |cur, l| l.forward_eval(&cur))
    }

    /// Reverse-mode pass from the loss gradient w.r.t. the network output.
    pub fn backward(&self, tape: &Tape, grad_out: &Tensor4) -> Result<Gradients> {
        if tape.caches.len() != self.layers.len() {
            return Err(Error::ShapeMismatch(
                "tape was recorded by a different network".into(),
            ));
        }
        let mut grads = vec![LayerGrads::default(); self.layers.len()];
        let mut g = grad_out.clone();
        for (idx, (layer, cache)) in self.layers.iter().zip(&tape.caches).enumerate().rev() {
            let (dx, lg) = layer.backward(cache, &g)?;
            grads[idx] = lg;
            g = dx;
        }
        if g.dims() != tape.input_dims {
            return Err(Error::ShapeMismatch("input gradient shape".into()));
        }
        Ok(Gradients {
            layers: grads,
            input: g,
        })
    }
}

/// Gradients of every parameter and of the input, from a recorded forward
/// pass and the loss gradient w.r.t. the output.
pub fn backprop(network: &Network, tape: &Tape, loss_grad: &Tensor4) -> Result<Gradients> {
    network.backward(tape, loss_grad)
}
