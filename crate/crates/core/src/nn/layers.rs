//! Layers with explicit forward and backward passes.
//!
//! `forward` runs in training mode and caches what `backward` needs.
//! `infer` takes `&self`, never touches state, and is safe to share across
//! threads.

use rand::Rng;
use rayon::prelude::*;

use super::tensor::{Tensor, TensorGrad, Trainable};
use crate::error::{Error, Result};

/// Uniform Glorot initialization in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(rng: &mut impl Rng, n: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-limit..=limit)).collect()
}

fn missing_cache(layer: &'static str) -> Error {
    Error::Invalid(format!("{layer}: backward called before forward"))
}

/// Same-padded 2-D cross-correlation with an odd square kernel.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: TensorGrad,
    pub bias: TensorGrad,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        let mut conv = Self::zeroed(name, in_channels, out_channels, kernel);
        let k2 = kernel * kernel;
        conv.weight.value = glorot(
            rng,
            out_channels * in_channels * k2,
            in_channels * k2,
            out_channels * k2,
        );
        conv
    }

    pub fn zeroed(name: &str, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "conv kernels must be odd-sized");
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: TensorGrad::zeros(
                format!("{name}.weight"),
                vec![out_channels, in_channels, kernel, kernel],
            ),
            bias: TensorGrad::zeros(format!("{name}.bias"), vec![out_channels]),
            input: None,
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(Error::Shape {
                context: "conv2d input channels",
                expected: vec![self.in_channels],
                actual: vec![x.channels()],
            });
        }
        Ok(())
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let [b, _, h, w] = x.shape();
        let (oc_n, k) = (self.out_channels, self.kernel);
        let rows = self.in_channels * k * k;
        let plane = h * w;
        let mut out = Tensor::zeros([b, oc_n, h, w]);
        if plane == 0 {
            return Ok(out);
        }
        out.data_mut()
            .par_chunks_mut(oc_n * plane)
            .enumerate()
            .for_each(|(bi, dst)| {
                for (oc, chunk) in dst.chunks_mut(plane).enumerate() {
                    chunk.fill(self.bias.value[oc]);
                }
                let cols = im2col(x, bi, k);
                // dst[oc, p] += W[oc, r] * cols[r, p]
                gemm(oc_n, rows, plane, &self.weight.value, false, &cols, false, dst, 1.0);
            });
        Ok(out)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(out)
    }

    /// Accumulates weight and bias gradients; returns the input gradient.
    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("conv2d"))?;
        let [b, _, h, w] = x.shape();
        gy.expect_shape("conv2d backward", [b, self.out_channels, h, w])?;
        let (oc_n, ic_n, k) = (self.out_channels, self.in_channels, self.kernel);
        let rows = ic_n * k * k;
        let plane = h * w;
        let mut gx = Tensor::zeros(x.shape());
        if plane == 0 {
            return Ok(gx);
        }
        let weight = &self.weight.value;
        let partials: Vec<Vec<f64>> = gx
            .data_mut()
            .par_chunks_mut(ic_n * plane)
            .enumerate()
            .map(|(bi, gx_item)| {
                let g = &gy.data()[bi * oc_n * plane..(bi + 1) * oc_n * plane];
                let cols = im2col(x, bi, k);
                // gW[oc, r] = gy[oc, p] * cols[r, p]^T
                let mut gw = vec![0.0; oc_n * rows];
                gemm(oc_n, plane, rows, g, false, &cols, true, &mut gw, 0.0);
                // gcols[r, p] = W[oc, r]^T * gy[oc, p]
                let mut gcols = vec![0.0; rows * plane];
                gemm(rows, oc_n, plane, weight, true, g, false, &mut gcols, 0.0);
                col2im(&gcols, gx_item, ic_n, h, w, k);
                gw
            })
            .collect();
        for gw in partials {
            for (acc, v) in self.weight.grad.iter_mut().zip(gw) {
                *acc += v;
            }
        }
        for oc in 0..oc_n {
            let mut s = 0.0;
            for bi in 0..b {
                s += gy.plane(bi, oc).iter().sum::<f64>();
            }
            self.bias.grad[oc] += s;
        }
        Ok(gx)
    }
}

/// Row-major `c = a * b + beta * c` with optional transposes, where `a` is
/// `m x k` and `b` is `k x n` after transposition.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], beta: f64) {
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths cover the strided extents described above.
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Patch matrix of batch item `bi`: row `(ic, ky, kx)`, column `(y, x)`,
/// zero outside the image.
fn im2col(x: &Tensor, bi: usize, k: usize) -> Vec<f64> {
    let (h, w) = (x.height(), x.width());
    let plane = h * w;
    let pad = (k / 2) as isize;
    let mut cols = vec![0.0; x.channels() * k * k * plane];
    for ic in 0..x.channels() {
        let src = x.plane(bi, ic);
        for ky in 0..k {
            for kx in 0..k {
                let row = (ic * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                shifted_axpy(dst, src, h, w, ky as isize - pad, kx as isize - pad, 1.0);
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`], accumulating into one item's input gradient.
fn col2im(cols: &[f64], gx: &mut [f64], channels: usize, h: usize, w: usize, k: usize) {
    let plane = h * w;
    let pad = (k / 2) as isize;
    for ic in 0..channels {
        let dst = &mut gx[ic * plane..(ic + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ic * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                shifted_axpy(dst, src, h, w, pad - ky as isize, pad - kx as isize, 1.0);
            }
        }
    }
}

/// `dst(y, x) += a * src(y + dy, x + dx)` over the in-bounds region.
#[inline]
fn shifted_axpy(dst: &mut [f64], src: &[f64], h: usize, w: usize, dy: isize, dx: isize, a: f64) {
    let (hi, wi) = (h as isize, w as isize);
    let y0 = (-dy).max(0);
    let y1 = (hi - dy).min(hi);
    let x0 = (-dx).max(0);
    let x1 = (wi - dx).min(wi);
    if y0 >= y1 || x0 >= x1 {
        return;
    }
    let len = (x1 - x0) as usize;
    for y in y0..y1 {
        let d = (y * wi + x0) as usize;
        let s = ((y + dy) * wi + x0 + dx) as usize;
        for (o, i) in dst[d..d + len].iter_mut().zip(&src[s..s + len]) {
            *o += a * i;
        }
    }
}

/// Which statistics batch normalization uses outside of training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnStats {
    /// Running averages (evaluation).
    Running,
    /// Statistics of the current batch, leaving running averages untouched.
    Batch,
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

/// Per-channel batch normalization with affine scale and shift.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub gamma: TensorGrad,
    pub beta: TensorGrad,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache>,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            channels,
            gamma: TensorGrad::new(format!("{name}.gamma"), vec![channels], vec![1.0; channels]),
            beta: TensorGrad::zeros(format!("{name}.beta"), vec![channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels() != self.channels {
            return Err(Error::Shape {
                context: "batchnorm2d channels",
                expected: vec![self.channels],
                actual: vec![x.channels()],
            });
        }
        Ok(())
    }

    fn batch_moments(x: &Tensor, c: usize) -> (f64, f64, usize) {
        let n = x.batch() * x.plane_len();
        let mut sum = 0.0;
        for b in 0..x.batch() {
            sum += x.plane(b, c).iter().sum::<f64>();
        }
        let mean = sum / n as f64;
        let mut sq = 0.0;
        for b in 0..x.batch() {
            sq += x.plane(b, c).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        }
        (mean, sq / n as f64, n)
    }

    fn normalize(&self, x: &Tensor, stats: &[(f64, f64)]) -> (Tensor, Tensor, Vec<f64>) {
        let mut xhat = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        let mut inv_stds = Vec::with_capacity(self.channels);
        for (c, &(mean, var)) in stats.iter().enumerate() {
            let inv_std = 1.0 / (var + self.eps).sqrt();
            inv_stds.push(inv_std);
            let (g, bt) = (self.gamma.value[c], self.beta.value[c]);
            for b in 0..x.batch() {
                let src = x.plane(b, c);
                for (xh, &v) in xhat.plane_mut(b, c).iter_mut().zip(src) {
                    *xh = (v - mean) * inv_std;
                }
                let xh = xhat.plane(b, c).to_vec();
                for (o, v) in out.plane_mut(b, c).iter_mut().zip(xh) {
                    *o = g * v + bt;
                }
            }
        }
        (out, xhat, inv_stds)
    }

    pub fn infer(&self, x: &Tensor, stats: BnStats) -> Result<Tensor> {
        self.check_input(x)?;
        let moments: Vec<(f64, f64)> = match stats {
            BnStats::Running => self
                .running_mean
                .iter()
                .zip(&self.running_var)
                .map(|(&m, &v)| (m, v))
                .collect(),
            BnStats::Batch => (0..self.channels)
                .map(|c| {
                    let (m, v, _) = Self::batch_moments(x, c);
                    (m, v)
                })
                .collect(),
        };
        Ok(self.normalize(x, &moments).0)
    }

    /// Training mode: batch statistics, running-average update, cache.
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut moments = Vec::with_capacity(self.channels);
        for c in 0..self.channels {
            let (mean, var, n) = Self::batch_moments(x, c);
            moments.push((mean, var));
            let unbiased = if n > 1 { var * n as f64 / (n - 1) as f64 } else { var };
            let m = self.momentum;
            self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * mean;
            self.running_var[c] = (1.0 - m) * self.running_var[c] + m * unbiased;
        }
        let (out, xhat, inv_std) = self.normalize(x, &moments);
        self.cache = Some(BnCache { xhat, inv_std });
        Ok(out)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("batchnorm2d"))?;
        gy.expect_shape("batchnorm2d backward", cache.xhat.shape())?;
        let mut gx = Tensor::zeros(gy.shape());
        let n = (gy.batch() * gy.plane_len()) as f64;
        for c in 0..self.channels {
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for b in 0..gy.batch() {
                for (&g, &xh) in gy.plane(b, c).iter().zip(cache.xhat.plane(b, c)) {
                    sum_g += g;
                    sum_gx += g * xh;
                }
            }
            self.gamma.grad[c] += sum_gx;
            self.beta.grad[c] += sum_g;
            let scale = self.gamma.value[c] * cache.inv_std[c] / n;
            for b in 0..gy.batch() {
                let g = gy.plane(b, c).to_vec();
                let xh = cache.xhat.plane(b, c).to_vec();
                for ((o, g), xh) in gx.plane_mut(b, c).iter_mut().zip(g).zip(xh) {
                    *o = scale * (n * g - sum_g - xh * sum_gx);
                }
            }
        }
        Ok(gx)
    }
}

/// Fully connected layer on the flattened `C * H * W` features of each item.
#[derive(Debug, Clone)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: TensorGrad,
    pub bias: TensorGrad,
    input: Option<Tensor>,
}

impl Dense {
    pub fn new(name: &str, in_features: usize, out_features: usize, rng: &mut impl Rng) -> Self {
        let mut d = Self::zeroed(name, in_features, out_features);
        d.weight.value = glorot(rng, in_features * out_features, in_features, out_features);
        d
    }

    pub fn zeroed(name: &str, in_features: usize, out_features: usize) -> Self {
        Self {
            in_features,
            out_features,
            weight: TensorGrad::zeros(format!("{name}.weight"), vec![out_features, in_features]),
            bias: TensorGrad::zeros(format!("{name}.bias"), vec![out_features]),
            input: None,
        }
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let per_item = x.channels() * x.plane_len();
        if per_item != self.in_features {
            return Err(Error::Shape {
                context: "dense input features",
                expected: vec![self.in_features],
                actual: vec![per_item],
            });
        }
        let mut out = Tensor::zeros([x.batch(), self.out_features, 1, 1]);
        for b in 0..x.batch() {
            let xi = &x.data()[b * per_item..(b + 1) * per_item];
            for o in 0..self.out_features {
                let row = &self.weight.value[o * per_item..(o + 1) * per_item];
                out.data_mut()[b * self.out_features + o] =
                    self.bias.value[o] + row.iter().zip(xi).map(|(w, v)| w * v).sum::<f64>();
            }
        }
        Ok(out)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("dense"))?;
        gy.expect_shape("dense backward", [x.batch(), self.out_features, 1, 1])?;
        let per_item = self.in_features;
        let mut gx = Tensor::zeros(x.shape());
        for b in 0..x.batch() {
            let xi = &x.data()[b * per_item..(b + 1) * per_item];
            for o in 0..self.out_features {
                let g = gy.data()[b * self.out_features + o];
                self.bias.grad[o] += g;
                let wrow = &self.weight.value[o * per_item..(o + 1) * per_item];
                let grow = &mut self.weight.grad[o * per_item..(o + 1) * per_item];
                for (gw, v) in grow.iter_mut().zip(xi) {
                    *gw += g * v;
                }
                for (gxi, wv) in gx.data_mut()[b * per_item..(b + 1) * per_item].iter_mut().zip(wrow) {
                    *gxi += g * wv;
                }
            }
        }
        Ok(gx)
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

/// ReLU with a cached mask; the subgradient at 0 is 0.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    input: Option<Tensor>,
}

impl Relu {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.input = Some(x.clone());
        relu(x)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("relu"))?;
        gy.expect_shape("relu backward", x.shape())?;
        let mut gx = gy.clone();
        for (g, &v) in gx.data_mut().iter_mut().zip(x.data()) {
            if v <= 0.0 {
                *g = 0.0;
            }
        }
        Ok(gx)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid {
    output: Option<Tensor>,
}

impl Sigmoid {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = sigmoid(x);
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let y = self.output.as_ref().ok_or_else(|| missing_cache("sigmoid"))?;
        gy.expect_shape("sigmoid backward", y.shape())?;
        let mut gx = gy.clone();
        for (g, &s) in gx.data_mut().iter_mut().zip(y.data()) {
            *g *= s * (1.0 - s);
        }
        Ok(gx)
    }
}

/// Softmax across the channel axis at every `(b, h, w)` position.
pub fn softmax_channels(x: &Tensor) -> Tensor {
    let [b, c, _, _] = x.shape();
    let p = x.plane_len();
    let mut out = Tensor::zeros(x.shape());
    let mut logits = vec![0.0; c];
    for bi in 0..b {
        for i in 0..p {
            for (ch, l) in logits.iter_mut().enumerate() {
                *l = x.data()[(bi * c + ch) * p + i];
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for l in logits.iter_mut() {
                *l = (*l - max).exp();
                total += *l;
            }
            for (ch, l) in logits.iter().enumerate() {
                out.data_mut()[(bi * c + ch) * p + i] = l / total;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct SoftmaxChannels {
    output: Option<Tensor>,
}

impl SoftmaxChannels {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = softmax_channels(x);
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let y = self.output.as_ref().ok_or_else(|| missing_cache("softmax"))?;
        gy.expect_shape("softmax backward", y.shape())?;
        let [b, c, _, _] = y.shape();
        let p = y.plane_len();
        let mut gx = Tensor::zeros(y.shape());
        for bi in 0..b {
            for i in 0..p {
                let idx = |ch: usize| (bi * c + ch) * p + i;
                let dot: f64 = (0..c).map(|ch| gy.data()[idx(ch)] * y.data()[idx(ch)]).sum();
                for ch in 0..c {
                    gx.data_mut()[idx(ch)] = y.data()[idx(ch)] * (gy.data()[idx(ch)] - dot);
                }
            }
        }
        Ok(gx)
    }
}

/// Mean over `H x W` for each `(b, c)`, giving `B x C x 1 x 1`.
pub fn global_avg_pool(x: &Tensor) -> Tensor {
    let [b, c, _, _] = x.shape();
    let p = x.plane_len() as f64;
    let mut out = Tensor::zeros([b, c, 1, 1]);
    for bi in 0..b {
        for ch in 0..c {
            out.data_mut()[bi * c + ch] = x.plane(bi, ch).iter().sum::<f64>() / p;
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    input_shape: Option<[usize; 4]>,
}

impl GlobalAvgPool {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.input_shape = Some(x.shape());
        global_avg_pool(x)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let shape = self.input_shape.ok_or_else(|| missing_cache("global_avg_pool"))?;
        let [b, c, h, w] = shape;
        gy.expect_shape("global_avg_pool backward", [b, c, 1, 1])?;
        let mut gx = Tensor::zeros(shape);
        let scale = 1.0 / (h * w) as f64;
        for bi in 0..b {
            for ch in 0..c {
                let g = gy.data()[bi * c + ch] * scale;
                gx.plane_mut(bi, ch).fill(g);
            }
        }
        Ok(gx)
    }
}

/// Layer variants that compose into a [`Sequential`] stack.
#[derive(Debug, Clone)]
pub enum Layer {
    Conv(Conv2d),
    BatchNorm(BatchNorm2d),
    Relu(Relu),
}

/// A chain of convolution, batch-norm and ReLU layers.
#[derive(Debug, Clone, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, layer: Layer) -> &mut Self {
        self.layers.push(layer);
        self
    }

    pub fn infer(&self, x: &Tensor, stats: BnStats) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                Layer::Conv(c) => c.infer(&h)?,
                Layer::BatchNorm(bn) => bn.infer(&h, stats)?,
                Layer::Relu(_) => relu(&h),
            };
        }
        Ok(h)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = match layer {
                Layer::Conv(c) => c.forward(&h)?,
                Layer::BatchNorm(bn) => bn.forward(&h)?,
                Layer::Relu(r) => r.forward(&h),
            };
        }
        Ok(h)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let mut g = gy.clone();
        for layer in self.layers.iter_mut().rev() {
            g = match layer {
                Layer::Conv(c) => c.backward(&g)?,
                Layer::BatchNorm(bn) => bn.backward(&g)?,
                Layer::Relu(r) => r.backward(&g)?,
            };
        }
        Ok(g)
    }

    pub fn last_conv_mut(&mut self) -> Option<&mut Conv2d> {
        self.layers.iter_mut().rev().find_map(|l| match l {
            Layer::Conv(c) => Some(c),
            _ => None,
        })
    }
}

impl Trainable for Sequential {
    fn params(&self) -> Vec<&TensorGrad> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => out.extend([&c.weight, &c.bias]),
                Layer::BatchNorm(bn) => out.extend([&bn.gamma, &bn.beta]),
                Layer::Relu(_) => {}
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut TensorGrad> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => out.extend([&mut c.weight, &mut c.bias]),
                Layer::BatchNorm(bn) => out.extend([&mut bn.gamma, &mut bn.beta]),
                Layer::Relu(_) => {}
            }
        }
        out
    }
}

impl Trainable for Conv2d {
    fn params(&self) -> Vec<&TensorGrad> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut TensorGrad> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl Trainable for Dense {
    fn params(&self) -> Vec<&TensorGrad> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut TensorGrad> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl Trainable for BatchNorm2d {
    fn params(&self) -> Vec<&TensorGrad> {
        vec![&self.gamma, &self.beta]
    }
    fn params_mut(&mut self) -> Vec<&mut TensorGrad> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
