//! Error estimator and auxiliary-loss retraining of [`TinyDenoiser`].
//!
//! In the estimator configurations, an estimator network reads the noisy
//! input and predicts the per-pixel error of the denoiser's output. The two
//! networks alternate within every batch: first the estimator fits the
//! current error map, then the denoiser minimizes its own MSE plus `lambda`
//! times the estimator's loss, differentiated through the error map.
//!
//! The image-learning configuration instead hangs a second head off the
//! denoiser trunk that predicts the clean image directly.

use std::fmt;
use std::str::FromStr;

use crate::denoise::{epoch_batches, held_out_psnr, subtract, DenoiserTrainConfig, EpochRecord, TinyDenoiser, TrainBatch};
use crate::error::{Error, Result};
use crate::image::ImageGray;
use crate::nn::container::{conv_blob, load_conv, LayerBlob, LayerKind, Persist};
use crate::nn::{
    mse_loss, Adam, BatchNorm2d, BnStats, Conv2d, Layer, Relu, Sequential, Tensor, TensorGrad, Trainable,
};
use crate::seed;

/// Error norm used as the estimator target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    L1,
    L2,
}

impl ErrorNorm {
    fn apply(self, diff: f64) -> f64 {
        match self {
            ErrorNorm::L1 => diff.abs(),
            ErrorNorm::L2 => diff * diff,
        }
    }

    /// Derivative of [`ErrorNorm::apply`]; the L1 subgradient at 0 is 0.
    fn slope(self, diff: f64) -> f64 {
        match self {
            ErrorNorm::L1 => {
                if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            ErrorNorm::L2 => 2.0 * diff,
        }
    }
}

/// Per-pixel `|denoised - clean|` (L1) or `(denoised - clean)^2` (L2).
pub fn estimator_target(denoised: &ImageGray, clean: &ImageGray, norm: ErrorNorm) -> Result<ImageGray> {
    denoised.ensure_same_dims(clean)?;
    let data = denoised
        .data()
        .iter()
        .zip(clean.data())
        .map(|(d, c)| norm.apply(d - c))
        .collect();
    ImageGray::new(denoised.height(), denoised.width(), data)
}

fn target_tensor(denoised: &Tensor, clean: &Tensor, norm: ErrorNorm) -> Result<Tensor> {
    clean.expect_shape("estimator target", denoised.shape())?;
    let data = denoised
        .data()
        .iter()
        .zip(clean.data())
        .map(|(d, c)| norm.apply(d - c))
        .collect();
    Tensor::from_vec(denoised.shape(), data)
}

/// Fully convolutional error estimator: three `conv+bn+relu` blocks and a
/// `conv+relu` head, so the output is never negative.
#[derive(Debug, Clone)]
pub struct ErrorEstimator {
    width: usize,
    net: Sequential,
}

impl ErrorEstimator {
    pub const DEFAULT_WIDTH: usize = 32;
    const BLOCKS: usize = 3;

    pub fn new(width: usize, init_seed: u64) -> Result<Self> {
        if width == 0 {
            return Err(Error::Invalid("estimator width must be positive".into()));
        }
        let mut rng = seed::rng(init_seed);
        let mut net = Sequential::new();
        for i in 0..Self::BLOCKS {
            let in_ch = if i == 0 { 1 } else { width };
            net.push(Layer::Conv(Conv2d::new(&format!("est.conv{i}"), in_ch, width, 3, &mut rng)))
                .push(Layer::BatchNorm(BatchNorm2d::new(&format!("est.bn{i}"), width)))
                .push(Layer::Relu(Relu::default()));
        }
        net.push(Layer::Conv(Conv2d::new(&format!("est.conv{}", Self::BLOCKS), width, 1, 3, &mut rng)))
            .push(Layer::Relu(Relu::default()));
        Ok(Self { width, net })
    }

    pub fn from_blobs(blobs: &[LayerBlob]) -> Result<Self> {
        let width = match blobs.first() {
            Some(b) if b.kind == LayerKind::Conv2d && b.dims.len() == 4 && b.dims[1] == 1 => b.dims[0] as usize,
            _ => return Err(Error::Decode("not an estimator container".into())),
        };
        let mut est = Self::new(width, 0)?;
        est.import(blobs)?;
        Ok(est)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn net_mut(&mut self) -> &mut Sequential {
        &mut self.net
    }

    pub fn infer(&self, noisy: &Tensor, stats: BnStats) -> Result<Tensor> {
        self.net.infer(noisy, stats)
    }

    pub fn forward(&mut self, noisy: &Tensor) -> Result<Tensor> {
        self.net.forward(noisy)
    }

    pub fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        self.net.backward(g)
    }

    /// Error map for one image (running statistics).
    pub fn estimate(&self, noisy: &ImageGray) -> Result<ImageGray> {
        let out = self.infer(&Tensor::from_images(&[noisy])?, BnStats::Running)?;
        Ok(out.to_images(0).remove(0))
    }
}

impl Trainable for ErrorEstimator {
    fn params(&self) -> Vec<&TensorGrad> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut TensorGrad> {
        self.net.params_mut()
    }
}

impl Persist for ErrorEstimator {
    fn export(&self) -> Vec<LayerBlob> {
        self.net.export()
    }

    fn import(&mut self, blobs: &[LayerBlob]) -> Result<()> {
        self.net.import(blobs)
    }
}

/// Which auxiliary objective is added to the denoiser loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxMode {
    Estimator(ErrorNorm),
    ImageLearning,
}

impl AuxMode {
    pub const ALL: [AuxMode; 3] = [
        AuxMode::Estimator(ErrorNorm::L1),
        AuxMode::Estimator(ErrorNorm::L2),
        AuxMode::ImageLearning,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AuxMode::Estimator(ErrorNorm::L1) => "l1",
            AuxMode::Estimator(ErrorNorm::L2) => "l2",
            AuxMode::ImageLearning => "image",
        }
    }
}

impl fmt::Display for AuxMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AuxMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(AuxMode::Estimator(ErrorNorm::L1)),
            "l2" => Ok(AuxMode::Estimator(ErrorNorm::L2)),
            "image" => Ok(AuxMode::ImageLearning),
            _ => Err(Error::Invalid(format!("unknown auxiliary mode `{s}` (l1, l2, image)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AuxTrainConfig {
    pub mode: AuxMode,
    pub lambda: f64,
    /// Batching, noise, schedule and seed; shared by both networks.
    pub denoiser: DenoiserTrainConfig,
    /// Epoch window of [`psnr_stability`].
    pub window: usize,
}

impl Default for AuxTrainConfig {
    fn default() -> Self {
        Self {
            mode: AuxMode::Estimator(ErrorNorm::L1),
            lambda: 0.1,
            denoiser: DenoiserTrainConfig::default(),
            window: 10,
        }
    }
}

impl AuxTrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Invalid(format!("auxiliary weight must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// A denoiser and an estimator trained in alternation, each with its own
/// optimizer.
#[derive(Debug, Clone)]
pub struct AuxTrainer {
    pub denoiser: TinyDenoiser,
    pub estimator: ErrorEstimator,
    norm: ErrorNorm,
    lambda: f64,
    denoiser_adam: Adam,
    estimator_adam: Adam,
}

impl AuxTrainer {
    pub fn new(denoiser: TinyDenoiser, estimator: ErrorEstimator, norm: ErrorNorm, lambda: f64) -> Self {
        Self {
            denoiser,
            estimator,
            norm,
            lambda,
            denoiser_adam: Adam::new(),
            estimator_adam: Adam::new(),
        }
    }

    /// Fits the estimator to the current error map; the denoiser is only
    /// read. Returns the estimator loss before the update.
    pub fn estimator_step(&mut self, batch: &TrainBatch, lr: f64) -> Result<f64> {
        let noise = self.denoiser.predict_noise(&batch.noisy, BnStats::Batch)?;
        let denoised = subtract(&batch.noisy, &noise)?;
        let target = target_tensor(&denoised, &batch.clean, self.norm)?;
        let est = self.estimator.forward(&batch.noisy)?;
        let (loss, grad) = mse_loss(&est, &target)?;
        if loss.is_finite() {
            self.estimator.backward(&grad)?;
            self.estimator_adam.step(&mut self.estimator.params_mut(), lr)?;
        }
        Ok(loss)
    }

    /// Updates the denoiser on `mse + lambda * aux` with the estimator
    /// frozen. Returns `(mse, aux)` before the update.
    pub fn denoiser_step(&mut self, batch: &TrainBatch, lr: f64) -> Result<(f64, f64)> {
        let denoised = self.denoiser.forward_train(&batch.noisy)?;
        let (loss, mut grad) = mse_loss(&denoised, &batch.clean)?;
        let est = self.estimator.infer(&batch.noisy, BnStats::Batch)?;
        let target = target_tensor(&denoised, &batch.clean, self.norm)?;
        // aux = mean((est - target)^2), target a function of denoised
        let (aux, g_target) = mse_loss(&target, &est)?;
        if !(loss.is_finite() && aux.is_finite()) {
            return Ok((loss, aux));
        }
        if self.lambda != 0.0 {
            for (((g, gt), d), c) in grad
                .data_mut()
                .iter_mut()
                .zip(g_target.data())
                .zip(denoised.data())
                .zip(batch.clean.data())
            {
                *g += self.lambda * gt * self.norm.slope(d - c);
            }
        }
        self.denoiser.backward(&grad)?;
        self.denoiser_adam.step(&mut self.denoiser.params_mut(), lr)?;
        Ok((loss, aux))
    }
}

fn mean_or_zero(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn held_out(model: &TinyDenoiser, images: &[ImageGray], config: &DenoiserTrainConfig) -> Result<f64> {
    if images.is_empty() {
        Ok(f64::NAN)
    } else {
        held_out_psnr(model, images, config.eval_sigma, config.seed)
    }
}

/// Alternating estimator/denoiser training. History rows carry the
/// denoiser's MSE and the auxiliary (estimator) loss.
pub fn train_with_auxiliary_loss(
    trainer: &mut AuxTrainer,
    patches: &[ImageGray],
    held_out_images: &[ImageGray],
    config: &AuxTrainConfig,
) -> Result<Vec<EpochRecord>> {
    config.validate()?;
    let AuxMode::Estimator(norm) = config.mode else {
        return Err(Error::Invalid("image-learning mode has its own trainer".into()));
    };
    trainer.norm = norm;
    trainer.lambda = config.lambda;
    let dcfg = &config.denoiser;
    let mut history = Vec::with_capacity(dcfg.epochs);
    for epoch in 1..=dcfg.epochs {
        let lr = dcfg.schedule.lr(epoch);
        let batches = epoch_batches(patches, dcfg, epoch)?;
        let (mut loss_sum, mut aux_sum) = (0.0, 0.0);
        for (bi, batch) in batches.iter().enumerate() {
            let est_loss = trainer.estimator_step(batch, lr)?;
            let (loss, aux) = trainer.denoiser_step(batch, lr)?;
            if !(est_loss.is_finite() && loss.is_finite() && aux.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            loss_sum += loss;
            aux_sum += aux;
        }
        history.push(EpochRecord {
            epoch,
            psnr_db: held_out(&trainer.denoiser, held_out_images, dcfg)?,
            loss: mean_or_zero(loss_sum, batches.len()),
            aux_loss: mean_or_zero(aux_sum, batches.len()),
            lr,
        });
    }
    Ok(history)
}

/// Trains only the estimator against a frozen denoiser; returns the mean
/// estimator loss per epoch.
pub fn train_estimator(
    estimator: &mut ErrorEstimator,
    denoiser: &TinyDenoiser,
    patches: &[ImageGray],
    norm: ErrorNorm,
    config: &DenoiserTrainConfig,
) -> Result<Vec<f64>> {
    let mut adam = Adam::new();
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let lr = config.schedule.lr(epoch);
        let batches = epoch_batches(patches, config, epoch)?;
        let mut sum = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let noise = denoiser.predict_noise(&batch.noisy, BnStats::Running)?;
            let target = target_tensor(&subtract(&batch.noisy, &noise)?, &batch.clean, norm)?;
            let est = estimator.forward(&batch.noisy)?;
            let (loss, grad) = mse_loss(&est, &target)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            estimator.backward(&grad)?;
            adam.step(&mut estimator.params_mut(), lr)?;
            sum += loss;
        }
        losses.push(sum / batches.len() as f64);
    }
    Ok(losses)
}

/// A denoiser whose trunk also feeds an image head predicting the clean
/// image.
#[derive(Debug, Clone)]
pub struct ImageLearningModel {
    pub denoiser: TinyDenoiser,
    pub image_head: Conv2d,
}

impl ImageLearningModel {
    pub fn new(denoiser: TinyDenoiser, head_seed: u64) -> Self {
        let mut rng = seed::rng(head_seed);
        let image_head = Conv2d::new("image_head", denoiser.width(), 1, 3, &mut rng);
        Self { denoiser, image_head }
    }

    /// `(noisy - noise_head, image_head)` in evaluation mode, unclipped.
    pub fn heads(&self, noisy: &Tensor) -> Result<(Tensor, Tensor)> {
        let features = self.denoiser.trunk().infer(noisy, BnStats::Running)?;
        let noise = self.denoiser.head().infer(&features)?;
        Ok((subtract(noisy, &noise)?, self.image_head.infer(&features)?))
    }

    /// Mean absolute gap between the two clean estimates.
    pub fn head_gap(&self, noisy: &[ImageGray]) -> Result<f64> {
        let refs: Vec<&ImageGray> = noisy.iter().collect();
        let (a, b) = self.heads(&Tensor::from_images(&refs)?)?;
        let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
        Ok(sum / a.len().max(1) as f64)
    }

    /// One update of `mse(noisy - noise_head, clean) + lambda * mse(image_head, clean)`.
    /// Returns both losses before the update.
    fn step(
        &mut self,
        batch: &TrainBatch,
        lambda: f64,
        lr: f64,
        adam: &mut Adam,
        head_adam: &mut Adam,
    ) -> Result<(f64, f64)> {
        let features = self.denoiser.trunk_forward(&batch.noisy)?;
        let noise = self.denoiser.head_mut().forward(&features)?;
        let denoised = subtract(&batch.noisy, &noise)?;
        let (loss, grad) = mse_loss(&denoised, &batch.clean)?;
        let image = self.image_head.forward(&features)?;
        let (aux, g_image) = mse_loss(&image, &batch.clean)?;
        if !(loss.is_finite() && aux.is_finite()) {
            return Ok((loss, aux));
        }
        let mut g_features = self.denoiser.head_mut().backward(&grad.map(|g| -g))?;
        if lambda != 0.0 {
            g_features.add_assign(&self.image_head.backward(&g_image.map(|g| lambda * g))?)?;
        }
        self.denoiser.trunk_backward(&g_features)?;
        adam.step(&mut self.denoiser.params_mut(), lr)?;
        if lambda != 0.0 {
            head_adam.step(&mut [&mut self.image_head.weight, &mut self.image_head.bias], lr)?;
        }
        Ok((loss, aux))
    }
}

impl Persist for ImageLearningModel {
    fn export(&self) -> Vec<LayerBlob> {
        let mut blobs = self.denoiser.export();
        blobs.push(conv_blob(&self.image_head));
        blobs
    }

    fn import(&mut self, blobs: &[LayerBlob]) -> Result<()> {
        let (last, rest) = blobs
            .split_last()
            .ok_or_else(|| Error::Decode("empty image-learning container".into()))?;
        self.denoiser.import(rest)?;
        load_conv(&mut self.image_head, last)
    }
}

/// Shared-trunk training with the image head as the auxiliary objective.
pub fn train_image_learning_aux(
    model: &mut ImageLearningModel,
    patches: &[ImageGray],
    held_out_images: &[ImageGray],
    config: &AuxTrainConfig,
) -> Result<Vec<EpochRecord>> {
    config.validate()?;
    if config.mode != AuxMode::ImageLearning {
        return Err(Error::Invalid("estimator modes use train_with_auxiliary_loss".into()));
    }
    let dcfg = &config.denoiser;
    let mut adam = Adam::new();
    let mut head_adam = Adam::new();
    let mut history = Vec::with_capacity(dcfg.epochs);
    for epoch in 1..=dcfg.epochs {
        let lr = dcfg.schedule.lr(epoch);
        let batches = epoch_batches(patches, dcfg, epoch)?;
        let (mut loss_sum, mut aux_sum) = (0.0, 0.0);
        for (bi, batch) in batches.iter().enumerate() {
            let (loss, aux) = model.step(batch, config.lambda, lr, &mut adam, &mut head_adam)?;
            if !(loss.is_finite() && aux.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            loss_sum += loss;
            aux_sum += aux;
        }
        history.push(EpochRecord {
            epoch,
            psnr_db: held_out(&model.denoiser, held_out_images, dcfg)?,
            loss: mean_or_zero(loss_sum, batches.len()),
            aux_loss: mean_or_zero(aux_sum, batches.len()),
            lr,
        });
    }
    Ok(history)
}

/// Population standard deviation of the last `window` PSNR values.
pub fn psnr_stability(history: &[f64], window: usize) -> Result<f64> {
    if window == 0 || history.len() < window {
        return Err(Error::Invalid(format!(
            "stability window {window} needs at least that many epochs, got {}",
            history.len()
        )));
    }
    let tail = &history[history.len() - window..];
    let mean = tail.iter().sum::<f64>() / window as f64;
    let var = tail.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / window as f64;
    Ok(var.sqrt())
}

/// Moving average with a trailing window, used to judge noisy loss curves.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let start = (i + 1).saturating_sub(w);
            let s = &values[start..=i];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect()
}
