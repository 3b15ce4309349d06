//! Denoisers: the pluggable interface, a DCT hard-threshold baseline, and a
//! small residual CNN with its blind-noise trainer.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::freq::{dct2, idct2};
use crate::image::{clip_unit, psnr, ImageGray, NoiseLevel};
use crate::manip::ManipulationMode;
use crate::nn::container::{conv_blob, load_conv, LayerBlob, LayerKind, Persist};
use crate::nn::{mse_loss, Adam, BatchNorm2d, BnStats, Conv2d, Layer, LrSchedule, Relu, Sequential, Tensor, TensorGrad, Trainable};
use crate::seed;

/// Maps a noisy image to a denoised image of the same size, values in `[0, 1]`.
pub trait Denoiser: Sync {
    fn denoise(&self, noisy: &ImageGray) -> Result<ImageGray>;

    /// Whether `denoise` may be called from several threads at once.
    fn parallel_safe(&self) -> bool {
        true
    }
}

/// Returns its (clipped) input.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn denoise(&self, noisy: &ImageGray) -> Result<ImageGray> {
        clip_unit(noisy)
    }
}

/// Adapts a closure into a [`Denoiser`].
pub struct FnDenoiser<F> {
    f: F,
    parallel: bool,
}

impl<F> FnDenoiser<F>
where
    F: Fn(&ImageGray) -> Result<ImageGray> + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f, parallel: true }
    }

    pub fn serial(f: F) -> Self {
        Self { f, parallel: false }
    }
}

impl<F> Denoiser for FnDenoiser<F>
where
    F: Fn(&ImageGray) -> Result<ImageGray> + Sync,
{
    fn denoise(&self, noisy: &ImageGray) -> Result<ImageGray> {
        (self.f)(noisy)
    }

    fn parallel_safe(&self) -> bool {
        self.parallel
    }
}

/// Hard threshold on DCT coefficients at `3 sigma sqrt(2 ln(HW))`, DC kept.
pub fn dct_threshold_denoise(noisy: &ImageGray, sigma: NoiseLevel) -> Result<ImageGray> {
    noisy.check_finite()?;
    let n = noisy.len() as f64;
    let threshold = 3.0 * sigma.unit() * (2.0 * n.ln()).max(0.0).sqrt();
    let mut coeffs = dct2(noisy);
    for c in coeffs.coeffs.iter_mut().skip(1) {
        if c.abs() < threshold {
            *c = 0.0;
        }
    }
    clip_unit(&idct2(&coeffs))
}

#[derive(Debug, Clone, Copy)]
pub struct DctThresholdDenoiser {
    pub sigma: NoiseLevel,
}

impl Denoiser for DctThresholdDenoiser {
    fn denoise(&self, noisy: &ImageGray) -> Result<ImageGray> {
        dct_threshold_denoise(noisy, self.sigma)
    }
}

/// Residual CNN: `conv+relu`, `(depth - 2) x (conv+bn+relu)`, `conv`.
///
/// The network predicts the noise; the clean estimate is `noisy - noise`.
#[derive(Debug, Clone)]
pub struct TinyDenoiser {
    depth: usize,
    width: usize,
    trunk: Sequential,
    head: Conv2d,
}

impl TinyDenoiser {
    pub const DEFAULT_DEPTH: usize = 7;
    pub const DEFAULT_WIDTH: usize = 24;

    pub fn new(depth: usize, width: usize, init_seed: u64) -> Result<Self> {
        if depth < 2 || width == 0 {
            return Err(Error::Invalid(format!(
                "denoiser needs depth >= 2 and width >= 1, got {depth}/{width}"
            )));
        }
        let mut rng = seed::rng(init_seed);
        let mut trunk = Sequential::new();
        trunk
            .push(Layer::Conv(Conv2d::new("conv0", 1, width, 3, &mut rng)))
            .push(Layer::Relu(Relu::default()));
        for i in 1..depth - 1 {
            trunk
                .push(Layer::Conv(Conv2d::new(&format!("conv{i}"), width, width, 3, &mut rng)))
                .push(Layer::BatchNorm(BatchNorm2d::new(&format!("bn{i}"), width)))
                .push(Layer::Relu(Relu::default()));
        }
        let head = Conv2d::new(&format!("conv{}", depth - 1), width, 1, 3, &mut rng);
        Ok(Self {
            depth,
            width,
            trunk,
            head,
        })
    }

    /// Rebuilds a model from container layers, inferring depth and width.
    pub fn from_blobs(blobs: &[LayerBlob]) -> Result<Self> {
        let first = blobs
            .first()
            .ok_or_else(|| Error::Decode("empty denoiser container".into()))?;
        if first.kind != LayerKind::Conv2d || first.dims.len() != 4 {
            return Err(Error::Decode("denoiser container must start with a conv layer".into()));
        }
        let width = first.dims[0] as usize;
        let depth = blobs.iter().filter(|b| b.kind == LayerKind::Conv2d).count();
        let mut model = Self::new(depth, width, 0)?;
        model.import(blobs)?;
        Ok(model)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn trunk(&self) -> &Sequential {
        &self.trunk
    }

    pub fn head(&self) -> &Conv2d {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Conv2d {
        &mut self.head
    }

    pub fn trunk_mut(&mut self) -> &mut Sequential {
        &mut self.trunk
    }

    /// Training-mode trunk features (cached for backward).
    pub fn trunk_forward(&mut self, noisy: &Tensor) -> Result<Tensor> {
        self.trunk.forward(noisy)
    }

    pub fn trunk_backward(&mut self, g: &Tensor) -> Result<Tensor> {
        self.trunk.backward(g)
    }

    pub fn predict_noise(&self, noisy: &Tensor, stats: BnStats) -> Result<Tensor> {
        self.head.infer(&self.trunk.infer(noisy, stats)?)
    }

    /// Training-mode `noisy - noise`, unclipped.
    pub fn forward_train(&mut self, noisy: &Tensor) -> Result<Tensor> {
        noisy.expect_shape("denoiser input", [noisy.batch(), 1, noisy.height(), noisy.width()])?;
        let features = self.trunk.forward(noisy)?;
        let noise = self.head.forward(&features)?;
        subtract(noisy, &noise)
    }

    /// Backward through [`TinyDenoiser::forward_train`]; returns the input gradient.
    pub fn backward(&mut self, grad_denoised: &Tensor) -> Result<Tensor> {
        let neg = grad_denoised.map(|g| -g);
        let g_features = self.head.backward(&neg)?;
        let mut g_input = self.trunk.backward(&g_features)?;
        g_input.add_assign(grad_denoised)?;
        Ok(g_input)
    }

    /// Inference on a batch: running statistics, output clipped.
    pub fn denoise_batch(&self, noisy: &Tensor) -> Result<Tensor> {
        let noise = self.predict_noise(noisy, BnStats::Running)?;
        Ok(subtract(noisy, &noise)?.map(|v| v.clamp(0.0, 1.0)))
    }
}

pub(crate) fn subtract(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    b.expect_shape("subtract", a.shape())?;
    Tensor::from_vec(a.shape(), a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect())
}

impl Denoiser for TinyDenoiser {
    fn denoise(&self, noisy: &ImageGray) -> Result<ImageGray> {
        noisy.check_finite()?;
        let x = Tensor::from_images(&[noisy])?;
        let out = self.denoise_batch(&x)?;
        Ok(out.to_images(0).remove(0))
    }
}

impl Trainable for TinyDenoiser {
    fn params(&self) -> Vec<&TensorGrad> {
        let mut p = self.trunk.params();
        p.extend([&self.head.weight, &self.head.bias]);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut TensorGrad> {
        let mut p = self.trunk.params_mut();
        p.extend([&mut self.head.weight, &mut self.head.bias]);
        p
    }
}

impl Persist for TinyDenoiser {
    fn export(&self) -> Vec<LayerBlob> {
        let mut blobs = self.trunk.export();
        blobs.push(conv_blob(&self.head));
        blobs
    }

    fn import(&mut self, blobs: &[LayerBlob]) -> Result<()> {
        let (last, rest) = blobs
            .split_last()
            .ok_or_else(|| Error::Decode("empty denoiser container".into()))?;
        self.trunk.import(rest)?;
        load_conv(&mut self.head, last)
    }
}

/// Training recipe for [`TinyDenoiser`].
#[derive(Debug, Clone)]
pub struct DenoiserTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    /// Noise levels are drawn uniformly from `[0, max_sigma]` per patch.
    pub max_sigma: f64,
    /// Random flips and rotations of every training patch.
    pub augment: bool,
    /// Noise level of the held-out evaluation after each epoch.
    pub eval_sigma: f64,
    pub seed: u64,
}

impl Default for DenoiserTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 8,
            schedule: LrSchedule::Step {
                initial: 1e-3,
                factor: 0.5,
                step: 10,
            },
            max_sigma: NoiseLevel::MAX,
            augment: true,
            eval_sigma: 25.0,
            seed: 0,
        }
    }
}

/// One row of a training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Held-out PSNR after the epoch.
    pub psnr_db: f64,
    /// Mean main loss over the epoch's batches.
    pub loss: f64,
    /// Mean auxiliary loss (0 when there is none).
    pub aux_loss: f64,
    pub lr: f64,
}

/// Noisy/clean tensor pairs for one epoch.
pub struct TrainBatch {
    pub noisy: Tensor,
    pub clean: Tensor,
}

/// Shuffled, augmented, blind-noise batches for `epoch`.
///
/// Training noise is not clipped. The result depends only on the patches,
/// the config and the epoch number.
pub fn epoch_batches(patches: &[ImageGray], config: &DenoiserTrainConfig, epoch: usize) -> Result<Vec<TrainBatch>> {
    if patches.is_empty() {
        return Err(Error::Invalid("no training patches".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Invalid("batch size must be positive".into()));
    }
    NoiseLevel::new(config.max_sigma)?;
    let mut rng = seed::rng(seed::derive_indexed(config.seed, "denoiser-epoch", epoch as u64));
    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.shuffle(&mut rng);
    let mut batches = Vec::new();
    for chunk in order.chunks(config.batch_size) {
        let mut clean_imgs = Vec::with_capacity(chunk.len());
        let mut noisy_imgs = Vec::with_capacity(chunk.len());
        for &i in chunk {
            let mut clean = patches[i].clone();
            if config.augment {
                let mode = ManipulationMode::new(rng.random_range(0..8))?;
                clean = crate::manip::apply_dihedral(&clean, mode)?;
            }
            let sigma = rng.random_range(0.0..=config.max_sigma) / 255.0;
            let noisy = clean.map(|v| {
                let n: f64 = rng.sample(StandardNormal);
                v + sigma * n
            });
            clean_imgs.push(clean);
            noisy_imgs.push(noisy);
        }
        let clean_refs: Vec<&ImageGray> = clean_imgs.iter().collect();
        let noisy_refs: Vec<&ImageGray> = noisy_imgs.iter().collect();
        batches.push(TrainBatch {
            noisy: Tensor::from_images(&noisy_refs)?,
            clean: Tensor::from_images(&clean_refs)?,
        });
    }
    Ok(batches)
}

/// Mean PSNR of `denoiser` on clipped noisy versions of `clean` at `sigma`.
///
/// Noise seeds depend on `seed` and the image index only. Infinite PSNR
/// counts as 100 dB.
pub fn held_out_psnr(denoiser: &dyn Denoiser, clean: &[ImageGray], sigma: f64, seed: u64) -> Result<f64> {
    if clean.is_empty() {
        return Err(Error::Invalid("no held-out images".into()));
    }
    let level = NoiseLevel::new(sigma)?;
    let mut total = 0.0;
    for (i, img) in clean.iter().enumerate() {
        let noisy = clip_unit(&crate::image::add_awgn(
            img,
            level,
            seed::derive_indexed(seed, "held-out-noise", i as u64),
        ))?;
        total += psnr(img, &denoiser.denoise(&noisy)?)?.value_or(100.0);
    }
    Ok(total / clean.len() as f64)
}

/// Blind-noise training with Adam and MSE. Returns one record per epoch.
pub fn train_denoiser(
    model: &mut TinyDenoiser,
    patches: &[ImageGray],
    held_out: &[ImageGray],
    config: &DenoiserTrainConfig,
) -> Result<Vec<EpochRecord>> {
    let mut adam = Adam::new();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let lr = config.schedule.lr(epoch);
        let batches = epoch_batches(patches, config, epoch)?;
        let mut loss_sum = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let denoised = model.forward_train(&batch.noisy)?;
            let (loss, grad) = mse_loss(&denoised, &batch.clean)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            model.backward(&grad)?;
            adam.step(&mut model.params_mut(), lr)?;
            loss_sum += loss;
        }
        let psnr_db = if held_out.is_empty() {
            f64::NAN
        } else {
            held_out_psnr(model, held_out, config.eval_sigma, config.seed)?
        };
        history.push(EpochRecord {
            epoch,
            psnr_db,
            loss: loss_sum / batches.len() as f64,
            aux_loss: 0.0,
            lr,
        });
    }
    Ok(history)
}
