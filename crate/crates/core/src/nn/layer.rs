use serde::{Deserialize, Serialize};

use super::gemm::{matmul, MatRef};
use super::tensor::Tensor4;
use crate::error::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    ConvTranspose,
    BatchNorm,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Train,
    Eval,
}

/// Geometry of one layer. `BatchNorm` and `Relu` use only the channel counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Extra rows/columns appended to a transposed convolution's output so
    /// it can invert a strided convolution of even input size.
    #[serde(default)]
    pub output_padding: usize,
}

impl LayerSpec {
    pub fn conv(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            kind: LayerKind::Conv,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            output_padding: 0,
        }
    }

    pub fn conv_transpose(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Self {
        Self {
            kind: LayerKind::ConvTranspose,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            output_padding,
        }
    }

    pub fn batch_norm(channels: usize) -> Self {
        Self::pointwise(LayerKind::BatchNorm, channels)
    }

    pub fn relu(channels: usize) -> Self {
        Self::pointwise(LayerKind::Relu, channels)
    }

    fn pointwise(kind: LayerKind, channels: usize) -> Self {
        Self {
            kind,
            in_channels: channels,
            out_channels: channels,
            kernel: 1,
            stride: 1,
            padding: 0,
            output_padding: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidLayer(format!("{msg}: {self:?}")));
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be positive");
        }
        match self.kind {
            LayerKind::Conv | LayerKind::ConvTranspose => {
                if self.kernel == 0 || self.stride == 0 {
                    return bad("kernel and stride must be positive");
                }
                if self.kind == LayerKind::Conv && self.output_padding != 0 {
                    return bad("output padding only applies to transposed convolutions");
                }
                if self.output_padding >= self.stride {
                    return bad("output padding must be smaller than the stride");
                }
            }
            LayerKind::BatchNorm | LayerKind::Relu => {
                if self.in_channels != self.out_channels {
                    return bad("pointwise layers keep the channel count");
                }
            }
        }
        Ok(())
    }

    pub fn has_params(&self) -> bool {
        matches!(
            self.kind,
            LayerKind::Conv | LayerKind::ConvTranspose | LayerKind::BatchNorm
        )
    }

    /// Shape of the weight tensor: `[out, in, k, k]` for convolutions,
    /// `[in, out, k, k]` for transposed convolutions, `[c]` for batch norm.
    pub fn weight_shape(&self) -> Vec<usize> {
        let (k, i, o) = (self.kernel, self.in_channels, self.out_channels);
        match self.kind {
            LayerKind::Conv => vec![o, i, k, k],
            LayerKind::ConvTranspose => vec![i, o, k, k],
            LayerKind::BatchNorm => vec![o],
            LayerKind::Relu => vec![],
        }
    }

    pub fn output_dims(&self, dims: [usize; 4]) -> Result<[usize; 4]> {
        let [n, c, h, w] = dims;
        if c != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "{:?} layer expects {} input channels, got {c}",
                self.kind, self.in_channels
            )));
        }
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        match self.kind {
            LayerKind::Conv => {
                if h + 2 * p < k || w + 2 * p < k {
                    return Err(Error::ShapeMismatch(format!(
                        "{h}x{w} input is smaller than kernel {k} with padding {p}"
                    )));
                }
                Ok([n, self.out_channels, (h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1])
            }
            LayerKind::ConvTranspose => {
                let size = |v: usize| ((v - 1) * s + k + self.output_padding).checked_sub(2 * p);
                match (size(h), size(w)) {
                    (Some(oh), Some(ow)) if oh > 0 && ow > 0 && h > 0 && w > 0 => {
                        Ok([n, self.out_channels, oh, ow])
                    }
                    _ => Err(Error::ShapeMismatch(format!(
                        "transposed convolution of {h}x{w} has empty output"
                    ))),
                }
            }
            LayerKind::BatchNorm | LayerKind::Relu => Ok(dims),
        }
    }
}

/// Trainable parameters and batch-norm buffers of one layer. For batch norm
/// `weight` holds the scale (gamma) and `bias` the shift (beta).
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LayerParams {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl LayerParams {
    /// Zero weights and biases; batch norm starts as the identity
    /// (gamma 1, running variance 1).
    pub fn zeros(spec: &LayerSpec) -> Self {
        let wlen: usize = spec.weight_shape().iter().product();
        match spec.kind {
            LayerKind::Conv | LayerKind::ConvTranspose => Self {
                weight: vec![0.0; wlen],
                bias: vec![0.0; spec.out_channels],
                ..Self::default()
            },
            LayerKind::BatchNorm => Self {
                weight: vec![1.0; spec.out_channels],
                bias: vec![0.0; spec.out_channels],
                running_mean: vec![0.0; spec.out_channels],
                running_var: vec![1.0; spec.out_channels],
            },
            LayerKind::Relu => Self::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct LayerGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Intermediates a layer keeps from its forward pass for the backward pass.
#[derive(Clone, Debug)]
pub enum LayerCache {
    Conv { input_dims: [usize; 4], cols: Vec<f64> },
    ConvTranspose { input_dims: [usize; 4], input_mat: Vec<f64> },
    BatchNormTrain { xhat: Vec<f64>, inv_std: Vec<f64> },
    BatchNormEval { input: Vec<f64> },
    Relu { output: Vec<f64> },
}

/// Convolution geometry seen from the side that is read by im2col: an
/// `c × h × w` image producing an `oh × ow` grid of patches.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub s: usize,
    pub p: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

/// `cols[(ci·k + ky)·k + kx][n·P + oy·ow + ox] = x[n][ci][oy·s + ky − p][ox·s + kx − p]`,
/// zero outside the image.
pub(crate) fn im2col(x: &[f64], batch: usize, g: &ConvGeom, cols: &mut [f64]) {
    let np = batch * g.positions();
    let plane = g.h * g.w;
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * np..(row + 1) * np];
                for n in 0..batch {
                    let src = &x[(n * g.c + ci) * plane..][..plane];
                    for oy in 0..g.oh {
                        let d = &mut dst[(n * g.oh + oy) * g.ow..][..g.ow];
                        let iy = (oy * g.s + ky) as isize - g.p as isize;
                        if iy < 0 || iy >= g.h as isize {
                            d.fill(0.0);
                            continue;
                        }
                        let srow = &src[iy as usize * g.w..][..g.w];
                        for (ox, v) in d.iter_mut().enumerate() {
                            let ix = (ox * g.s + kx) as isize - g.p as isize;
                            *v = if ix >= 0 && ix < g.w as isize {
                                srow[ix as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back into `x`.
pub(crate) fn col2im(cols: &[f64], batch: usize, g: &ConvGeom, x: &mut [f64]) {
    let np = batch * g.positions();
    let plane = g.h * g.w;
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &cols[row * np..(row + 1) * np];
                for n in 0..batch {
                    let dst = &mut x[(n * g.c + ci) * plane..][..plane];
                    for oy in 0..g.oh {
                        let iy = (oy * g.s + ky) as isize - g.p as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let s = &src[(n * g.oh + oy) * g.ow..][..g.ow];
                        let drow = &mut dst[iy as usize * g.w..][..g.w];
                        for (ox, v) in s.iter().enumerate() {
                            let ix = (ox * g.s + kx) as isize - g.p as isize;
                            if ix >= 0 && ix < g.w as isize {
                                drow[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn relu_scalar(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Per-channel `(scale, shift)` of batch norm in eval mode.
pub(crate) fn bn_eval_coeffs(params: &LayerParams) -> Vec<(f64, f64)> {
    params
        .weight
        .iter()
        .zip(&params.bias)
        .zip(params.running_mean.iter().zip(&params.running_var))
        .map(|((&g, &b), (&m, &v))| {
            let scale = g / (v + BN_EPSILON).sqrt();
            (scale, b - m * scale)
        })
        .collect()
}

/// Moves `[n][c][p]` to `[c][n·P + p]`.
fn to_channel_major(x: &[f64], n: usize, c: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for ch in 0..c {
            out[ch * n * p + b * p..][..p].copy_from_slice(&x[(b * c + ch) * p..][..p]);
        }
    }
    out
}

fn from_channel_major(x: &[f64], n: usize, c: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for ch in 0..c {
            out[(b * c + ch) * p..][..p].copy_from_slice(&x[ch * n * p + b * p..][..p]);
        }
    }
    out
}

/// A layer specification with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    spec: LayerSpec,
    params: LayerParams,
}

impl Layer {
    pub fn new(spec: LayerSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            params: LayerParams::zeros(&spec),
            spec,
        })
    }

    pub fn with_params(spec: LayerSpec, params: LayerParams) -> Result<Self> {
        spec.validate()?;
        let expect = LayerParams::zeros(&spec);
        let lens = |p: &LayerParams| {
            [
                p.weight.len(),
                p.bias.len(),
                p.running_mean.len(),
                p.running_var.len(),
            ]
        };
        if lens(&expect) != lens(&params) {
            return Err(Error::ShapeMismatch(format!(
                "parameters {:?} do not fit {:?} (expected {:?})",
                lens(&params),
                spec.kind,
                lens(&expect)
            )));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut LayerParams {
        &mut self.params
    }

    fn conv_geom(&self, dims: [usize; 4], out: [usize; 4]) -> ConvGeom {
        match self.spec.kind {
            LayerKind::Conv => ConvGeom {
                c: dims[1],
                h: dims[2],
                w: dims[3],
                k: self.spec.kernel,
                s: self.spec.stride,
                p: self.spec.padding,
                oh: out[2],
                ow: out[3],
            },
            // im2col walks the transposed convolution's output.
            _ => ConvGeom {
                c: out[1],
                h: out[2],
                w: out[3],
                k: self.spec.kernel,
                s: self.spec.stride,
                p: self.spec.padding,
                oh: dims[2],
                ow: dims[3],
            },
        }
    }

    /// Forward pass. In train mode batch norm normalizes with batch
    /// statistics and updates its running estimates.
    pub fn forward(&mut self, x: &Tensor4, mode: Mode) -> Result<(Tensor4, LayerCache)> {
        let (y, cache, stats) = self.forward_impl(x, mode)?;
        if let Some((mean, var, count)) = stats {
            let unbias = count as f64 / (count as f64 - 1.0);
            let p = &mut self.params;
            for c in 0..mean.len() {
                p.running_mean[c] = (1.0 - BN_MOMENTUM) * p.running_mean[c] + BN_MOMENTUM * mean[c];
                p.running_var[c] =
                    (1.0 - BN_MOMENTUM) * p.running_var[c] + BN_MOMENTUM * var[c] * unbias;
            }
        }
        Ok((y, cache))
    }

    /// Forward pass that leaves the running statistics untouched.
    pub fn forward_pure(&self, x: &Tensor4, mode: Mode) -> Result<(Tensor4, LayerCache)> {
        self.forward_impl(x, mode).map(|(y, c, _)| (y, c))
    }

    pub fn forward_eval(&self, x: &Tensor4) -> Result<Tensor4> {
        self.forward_impl(x, Mode::Eval).map(|(y, _, _)| y)
    }

    #[allow(clippy::type_complexity)]
    fn forward_impl(
        &self,
        x: &Tensor4,
        mode: Mode,
    ) -> Result<(Tensor4, LayerCache, Option<(Vec<f64>, Vec<f64>, usize)>)> {
        let dims = x.dims();
        let out_dims = self.spec.output_dims(dims)?;
        let [n, c, h, w] = dims;
        match self.spec.kind {
            LayerKind::Conv => {
                let g = self.conv_geom(dims, out_dims);
                let (k, np, cout, p) = (g.rows(), n * g.positions(), out_dims[1], g.positions());
                let mut cols = vec![0.0; k * np];
                im2col(x.data(), n, &g, &mut cols);
                let mut tmp = vec![0.0; cout * np];
                matmul(
                    MatRef::new(&self.params.weight, cout, k),
                    MatRef::new(&cols, k, np),
                    &mut tmp,
                );
                for (o, row) in tmp.chunks_exact_mut(np).enumerate() {
                    let b = self.params.bias[o];
                    row.iter_mut().for_each(|v| *v += b);
                }
                let y = Tensor4::new(out_dims, from_channel_major(&tmp, n, cout, p))?;
                Ok((
                    y,
                    LayerCache::Conv {
                        input_dims: dims,
                        cols,
                    },
                    None,
                ))
            }
            LayerKind::ConvTranspose => {
                let g = self.conv_geom(dims, out_dims);
                let (kk, pin) = (g.rows(), h * w);
                let npin = n * pin;
                let xm = to_channel_major(x.data(), n, c, pin);
                let mut cols = vec![0.0; kk * npin];
                matmul(
                    MatRef::transposed(&self.params.weight, kk, c),
                    MatRef::new(&xm, c, npin),
                    &mut cols,
                );
                let mut y = Tensor4::zeros(out_dims);
                col2im(&cols, n, &g, y.data_mut());
                let plane = out_dims[2] * out_dims[3];
                for (idx, chunk) in y.data_mut().chunks_exact_mut(plane).enumerate() {
                    let b = self.params.bias[idx % out_dims[1]];
                    chunk.iter_mut().for_each(|v| *v += b);
                }
                Ok((
                    y,
                    LayerCache::ConvTranspose {
                        input_dims: dims,
                        input_mat: xm,
                    },
                    None,
                ))
            }
            LayerKind::BatchNorm => match mode {
                Mode::Train => {
                    if n < 2 {
                        return Err(Error::ShapeMismatch(
                            "batch norm in train mode needs a batch of at least 2".into(),
                        ));
                    }
                    let plane = h * w;
                    let count = n * plane;
                    let mut mean = vec![0.0; c];
                    let mut var = vec![0.0; c];
                    let mut inv_std = vec![0.0; c];
                    let mut xhat = vec![0.0; x.len()];
                    let mut y = Tensor4::zeros(dims);
                    for ch in 0..c {
                        let items = (0..n).map(|b| &x.data()[(b * c + ch) * plane..][..plane]);
                        let m = items.clone().flatten().sum::<f64>() / count as f64;
                        let v = items.flatten().map(|v| (v - m) * (v - m)).sum::<f64>()
                            / count as f64;
                        let is = 1.0 / (v + BN_EPSILON).sqrt();
                        let (gamma, beta) = (self.params.weight[ch], self.params.bias[ch]);
                        for b in 0..n {
                            let o = (b * c + ch) * plane;
                            for q in o..o + plane {
                                let xh = (x.data()[q] - m) * is;
                                xhat[q] = xh;
                                y.data_mut()[q] = gamma * xh + beta;
                            }
                        }
                        mean[ch] = m;
                        var[ch] = v;
                        inv_std[ch] = is;
                    }
                    Ok((
                        y,
                        LayerCache::BatchNormTrain { xhat, inv_std },
                        Some((mean, var, count)),
                    ))
                }
                Mode::Eval => {
                    let coeffs = bn_eval_coeffs(&self.params);
                    let plane = h * w;
                    let mut y = x.clone();
                    for (idx, chunk) in y.data_mut().chunks_exact_mut(plane).enumerate() {
                        let (scale, shift) = coeffs[idx % c];
                        chunk.iter_mut().for_each(|v| *v = *v * scale + shift);
                    }
                    Ok((
                        y,
                        LayerCache::BatchNormEval {
                            input: x.data().to_vec(),
                        },
                        None,
                    ))
                }
            },
            LayerKind::Relu => {
                let mut y = x.clone();
                y.data_mut().iter_mut().for_each(|v| *v = relu_scalar(*v));
                let output = y.data().to_vec();
                Ok((y, LayerCache::Relu { output }, None))
            }
        }
    }

    /// Gradients of the loss w.r.t. this layer's input and parameters, given
    /// the gradient w.r.t. its output.
    pub fn backward(&self, cache: &LayerCache, grad_out: &Tensor4) -> Result<(Tensor4, LayerGrads)> {
        let gdims = grad_out.dims();
        match (self.spec.kind, cache) {
            (LayerKind::Conv, LayerCache::Conv { input_dims, cols }) => {
                let g = self.conv_geom(*input_dims, gdims);
                let [n, cout, _, _] = gdims;
                let (k, p) = (g.rows(), g.positions());
                let np = n * p;
                if cols.len() != k * np {
                    return Err(Error::ShapeMismatch("conv gradient vs cache".into()));
                }
                let gtmp = to_channel_major(grad_out.data(), n, cout, p);
                let mut dw = vec![0.0; cout * k];
                matmul(
                    MatRef::new(&gtmp, cout, np),
                    MatRef::transposed(cols, np, k),
                    &mut dw,
                );
                let db = gtmp.chunks_exact(np).map(|r| r.iter().sum()).collect();
                let mut dcols = vec![0.0; k * np];
                matmul(
                    MatRef::transposed(&self.params.weight, k, cout),
                    MatRef::new(&gtmp, cout, np),
                    &mut dcols,
                );
                let mut dx = Tensor4::zeros(*input_dims);
                col2im(&dcols, n, &g, dx.data_mut());
                Ok((dx, LayerGrads { weight: dw, bias: db }))
            }
            (
                LayerKind::ConvTranspose,
                LayerCache::ConvTranspose {
                    input_dims,
                    input_mat,
                },
            ) => {
                let g = self.conv_geom(*input_dims, gdims);
                let [n, cin, h, w] = *input_dims;
                let (kk, npin) = (g.rows(), n * h * w);
                let mut gcols = vec![0.0; kk * npin];
                im2col(grad_out.data(), n, &g, &mut gcols);
                let mut dxm = vec![0.0; cin * npin];
                matmul(
                    MatRef::new(&self.params.weight, cin, kk),
                    MatRef::new(&gcols, kk, npin),
                    &mut dxm,
                );
                let mut dw = vec![0.0; cin * kk];
                matmul(
                    MatRef::new(input_mat, cin, npin),
                    MatRef::transposed(&gcols, npin, kk),
                    &mut dw,
                );
                let cout = gdims[1];
                let plane = gdims[2] * gdims[3];
                let mut db = vec![0.0; cout];
                for (idx, chunk) in grad_out.data().chunks_exact(plane).enumerate() {
                    db[idx % cout] += chunk.iter().sum::<f64>();
                }
                let dx = Tensor4::new(*input_dims, from_channel_major(&dxm, n, cin, h * w))?;
                Ok((dx, LayerGrads { weight: dw, bias: db }))
            }
            (LayerKind::BatchNorm, LayerCache::BatchNormTrain { xhat, inv_std }) => {
                let [n, c, h, w] = gdims;
                let plane = h * w;
                let count = (n * plane) as f64;
                let dy = grad_out.data();
                let mut dx = Tensor4::zeros(gdims);
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for ch in 0..c {
                    let idx = || (0..n).flat_map(move |b| (b * c + ch) * plane..(b * c + ch + 1) * plane);
                    let sum_dy: f64 = idx().map(|q| dy[q]).sum();
                    let sum_dy_xhat: f64 = idx().map(|q| dy[q] * xhat[q]).sum();
                    let gamma = self.params.weight[ch];
                    let f = gamma * inv_std[ch] / count;
                    for q in idx() {
                        dx.data_mut()[q] = f * (count * dy[q] - sum_dy - xhat[q] * sum_dy_xhat);
                    }
                    dgamma[ch] = sum_dy_xhat;
                    dbeta[ch] = sum_dy;
                }
                Ok((
                    dx,
                    LayerGrads {
                        weight: dgamma,
                        bias: dbeta,
                    },
                ))
            }
            (LayerKind::BatchNorm, LayerCache::BatchNormEval { input }) => {
                let [_, c, h, w] = gdims;
                let plane = h * w;
                let coeffs = bn_eval_coeffs(&self.params);
                let mut dx = grad_out.clone();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for (idx, chunk) in dx.data_mut().chunks_exact_mut(plane).enumerate() {
                    let ch = idx % c;
                    let p = &self.params;
                    let inv = 1.0 / (p.running_var[ch] + BN_EPSILON).sqrt();
                    for (q, v) in chunk.iter_mut().enumerate() {
                        let x = input[idx * plane + q];
                        dgamma[ch] += *v * (x - p.running_mean[ch]) * inv;
                        dbeta[ch] += *v;
                        *v *= coeffs[ch].0;
                    }
                }
                Ok((
                    dx,
                    LayerGrads {
                        weight: dgamma,
                        bias: dbeta,
                    },
                ))
            }
            (LayerKind::Relu, LayerCache::Relu { output }) => {
                let mut dx = grad_out.clone();
                dx.data_mut()
                    .iter_mut()
                    .zip(output)
                    .for_each(|(g, &y)| {
                        if y <= 0.0 {
                            *g = 0.0
                        }
                    });
                Ok((dx, LayerGrads::default()))
            }
            (kind, _) => Err(Error::ShapeMismatch(format!(
                "cache does not belong to a {kind:?} layer"
            ))),
        }
    }
}

/// Applies one layer to `x` with explicit parameters.
pub fn layer_forward(
    spec: LayerSpec,
    params: &mut LayerParams,
    x: &Tensor4,
    mode: Mode,
) -> Result<Tensor4> {
    let mut layer = Layer::with_params(spec, std::mem::take(params))?;
    let result = layer.forward(x, mode);
    *params = layer.params;
    result.map(|(y, _)| y)
}
