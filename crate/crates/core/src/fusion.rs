//! Dual-attention fusion of branch stacks.
//!
//! Two modules read the same `N`-branch stack. The spatial module predicts
//! a per-pixel weight map for every branch; the channel module squeezes each
//! branch to its mean and excites one scalar weight per branch. Both weight
//! sets are softmax-normalized over branches, so each module outputs a convex
//! combination of the branches. A 3x3 convolution fuses the two results.
//!
//! The layers that produce attention logits start at zero, so an untrained
//! model reproduces the plain branch average in both modules, and the fusion
//! head starts as the average of its two inputs.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::image::{extract_patches, psnr, ImageGray};
use crate::manip::{simple_average, BranchStack, ManipulationMode};
use crate::nn::container::{conv_blob, dense_blob, load_conv, load_dense, LayerBlob, LayerKind, Persist};
use crate::nn::{
    mse_loss, softmax_channels, Adam, BatchNorm2d, BnStats, Conv2d, Dense, GlobalAvgPool, Layer, LrSchedule, Relu,
    Sequential, SoftmaxChannels, Tensor, TensorGrad, Trainable,
};
use crate::seed;

pub const SPATIAL_WIDTH: usize = 32;
pub const SE_HIDDEN: usize = 8;

/// `out[b, 0] = sum_n weights[b, n] * x[b, n]`, weights broadcast over pixels
/// when they are `B x N x 1 x 1`.
fn weighted_sum(x: &Tensor, weights: &Tensor) -> Tensor {
    let [b, n, h, w] = x.shape();
    let per_pixel = weights.plane_len() != 1;
    let mut out = Tensor::zeros([b, 1, h, w]);
    for bi in 0..b {
        for ch in 0..n {
            let xs = x.plane(bi, ch);
            let ws = weights.plane(bi, ch);
            let dst = out.plane_mut(bi, 0);
            if per_pixel {
                for ((o, &xv), &wv) in dst.iter_mut().zip(xs).zip(ws) {
                    *o += wv * xv;
                }
            } else {
                let wv = ws[0];
                for (o, &xv) in dst.iter_mut().zip(xs) {
                    *o += wv * xv;
                }
            }
        }
    }
    out
}

/// Gradients of [`weighted_sum`] with respect to the input and the weights.
fn weighted_sum_backward(x: &Tensor, weights: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let [b, n, _, _] = x.shape();
    let per_pixel = weights.plane_len() != 1;
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(weights.shape());
    for bi in 0..b {
        let gs = g.plane(bi, 0);
        for ch in 0..n {
            let ws = weights.plane(bi, ch).to_vec();
            let xs = x.plane(bi, ch);
            if per_pixel {
                let gws = gw.plane_mut(bi, ch);
                for ((o, &gv), &xv) in gws.iter_mut().zip(gs).zip(xs) {
                    *o = gv * xv;
                }
                for ((o, &gv), &wv) in gx.plane_mut(bi, ch).iter_mut().zip(gs).zip(&ws) {
                    *o = gv * wv;
                }
            } else {
                gw.plane_mut(bi, ch)[0] = gs.iter().zip(xs).map(|(a, b)| a * b).sum();
                for (o, &gv) in gx.plane_mut(bi, ch).iter_mut().zip(gs) {
                    *o = gv * ws[0];
                }
            }
        }
    }
    (gx, gw)
}

/// Per-pixel branch weights from a small convolutional trunk.
#[derive(Debug, Clone)]
pub struct SpatialAttention {
    n_branches: usize,
    trunk: Sequential,
    softmax: SoftmaxChannels,
    cache: Option<(Tensor, Tensor)>,
}

impl SpatialAttention {
    pub fn new(n_branches: usize, rng: &mut impl rand::Rng) -> Self {
        let mut trunk = Sequential::new();
        trunk
            .push(Layer::Conv(Conv2d::new("spatial.conv0", n_branches, SPATIAL_WIDTH, 3, rng)))
            .push(Layer::BatchNorm(BatchNorm2d::new("spatial.bn0", SPATIAL_WIDTH)))
            .push(Layer::Relu(Relu::default()))
            .push(Layer::Conv(Conv2d::new("spatial.conv1", SPATIAL_WIDTH, SPATIAL_WIDTH, 3, rng)))
            .push(Layer::BatchNorm(BatchNorm2d::new("spatial.bn1", SPATIAL_WIDTH)))
            .push(Layer::Relu(Relu::default()))
            .push(Layer::Conv(Conv2d::zeroed("spatial.conv2", SPATIAL_WIDTH, n_branches, 3)));
        Self {
            n_branches,
            trunk,
            softmax: SoftmaxChannels::default(),
            cache: None,
        }
    }

    pub fn n_branches(&self) -> usize {
        self.n_branches
    }

    pub fn trunk_mut(&mut self) -> &mut Sequential {
        &mut self.trunk
    }

    /// `B x N x H x W` weights, summing to one over `N` at each pixel.
    pub fn weights(&self, x: &Tensor, stats: BnStats) -> Result<Tensor> {
        Ok(softmax_channels(&self.trunk.infer(x, stats)?))
    }

    pub fn infer(&self, x: &Tensor, stats: BnStats) -> Result<Tensor> {
        Ok(weighted_sum(x, &self.weights(x, stats)?))
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let logits = self.trunk.forward(x)?;
        let weights = self.softmax.forward(&logits);
        let out = weighted_sum(x, &weights);
        self.cache = Some((x.clone(), weights));
        Ok(out)
    }

    pub fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let (x, weights) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Invalid("spatial attention: backward before forward".into()))?;
        let (mut gx, gw) = weighted_sum_backward(x, weights, g);
        let glogits = self.softmax.backward(&gw)?;
        gx.add_assign(&self.trunk.backward(&glogits)?)?;
        Ok(gx)
    }
}

/// Squeeze-and-excitation branch weights, one scalar per branch.
#[derive(Debug, Clone)]
pub struct ChannelAttention {
    n_branches: usize,
    pool: GlobalAvgPool,
    fc1: Dense,
    relu: Relu,
    fc2: Dense,
    softmax: SoftmaxChannels,
    cache: Option<(Tensor, Tensor)>,
}

impl ChannelAttention {
    pub fn new(n_branches: usize, rng: &mut impl rand::Rng) -> Self {
        Self {
            n_branches,
            pool: GlobalAvgPool::default(),
            fc1: Dense::new("channel.fc0", n_branches, SE_HIDDEN, rng),
            relu: Relu::default(),
            fc2: Dense::zeroed("channel.fc1", SE_HIDDEN, n_branches),
            softmax: SoftmaxChannels::default(),
            cache: None,
        }
    }

    pub fn n_branches(&self) -> usize {
        self.n_branches
    }

    pub fn excitation_out_mut(&mut self) -> &mut Dense {
        &mut self.fc2
    }

    /// `B x N x 1 x 1` weights summing to one over `N`.
    pub fn weights(&self, x: &Tensor) -> Result<Tensor> {
        let squeezed = crate::nn::global_avg_pool(x);
        let hidden = crate::nn::relu(&self.fc1.infer(&squeezed)?);
        Ok(softmax_channels(&self.fc2.infer(&hidden)?))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(weighted_sum(x, &self.weights(x)?))
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let squeezed = self.pool.forward(x);
        let hidden = self.relu.forward(&self.fc1.forward(&squeezed)?);
        let weights = self.softmax.forward(&self.fc2.forward(&hidden)?);
        let out = weighted_sum(x, &weights);
        self.cache = Some((x.clone(), weights));
        Ok(out)
    }

    pub fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let (x, weights) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Invalid("channel attention: backward before forward".into()))?;
        let (mut gx, gw) = weighted_sum_backward(x, weights, g);
        let glogits = self.softmax.backward(&gw)?;
        let ghidden = self.relu.backward(&self.fc2.backward(&glogits)?)?;
        let gsqueezed = self.fc1.backward(&ghidden)?;
        gx.add_assign(&self.pool.backward(&gsqueezed)?)?;
        Ok(gx)
    }
}

/// Which attention modules a fusion model contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusionVariant {
    Dual,
    SpatialOnly,
    ChannelOnly,
}

impl FusionVariant {
    pub const ALL: [FusionVariant; 3] = [FusionVariant::Dual, FusionVariant::SpatialOnly, FusionVariant::ChannelOnly];

    pub fn name(self) -> &'static str {
        match self {
            FusionVariant::Dual => "dual",
            FusionVariant::SpatialOnly => "spatial",
            FusionVariant::ChannelOnly => "channel",
        }
    }
}

impl fmt::Display for FusionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual" => Ok(FusionVariant::Dual),
            "spatial" => Ok(FusionVariant::SpatialOnly),
            "channel" => Ok(FusionVariant::ChannelOnly),
            _ => Err(Error::Invalid(format!("unknown fusion variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FusionModel {
    n_branches: usize,
    variant: FusionVariant,
    spatial: Option<SpatialAttention>,
    channel: Option<ChannelAttention>,
    head: Option<Conv2d>,
}

/// 3x3 kernel over two channels that averages their center taps.
fn averaging_head() -> Conv2d {
    let mut head = Conv2d::zeroed("head", 2, 1, 3);
    head.weight.value[4] = 0.5;
    head.weight.value[9 + 4] = 0.5;
    head
}

impl FusionModel {
    pub fn new(n_branches: usize, variant: FusionVariant, init_seed: u64) -> Result<Self> {
        if n_branches == 0 {
            return Err(Error::Invalid("fusion needs at least one branch".into()));
        }
        let mut rng = seed::rng(init_seed);
        let spatial = (variant != FusionVariant::ChannelOnly).then(|| SpatialAttention::new(n_branches, &mut rng));
        let channel = (variant != FusionVariant::SpatialOnly).then(|| ChannelAttention::new(n_branches, &mut rng));
        let head = (variant == FusionVariant::Dual).then(averaging_head);
        Ok(Self {
            n_branches,
            variant,
            spatial,
            channel,
            head,
        })
    }

    /// Rebuilds a model from container layers; the variant follows from the
    /// layer layout.
    pub fn from_blobs(blobs: &[LayerBlob]) -> Result<Self> {
        let first = blobs
            .first()
            .ok_or_else(|| Error::Decode("empty fusion container".into()))?;
        let (variant, n) = match (first.kind, blobs.len()) {
            (LayerKind::Conv2d, 8) => (FusionVariant::Dual, first.dims[1]),
            (LayerKind::Conv2d, 5) => (FusionVariant::SpatialOnly, first.dims[1]),
            (LayerKind::Dense, 2) => (FusionVariant::ChannelOnly, first.dims[1]),
            _ => return Err(Error::Decode("container is not a fusion model".into())),
        };
        let mut model = Self::new(n as usize, variant, 0)?;
        model.import(blobs)?;
        Ok(model)
    }

    pub fn n_branches(&self) -> usize {
        self.n_branches
    }

    pub fn variant(&self) -> FusionVariant {
        self.variant
    }

    pub fn spatial_mut(&mut self) -> Option<&mut SpatialAttention> {
        self.spatial.as_mut()
    }

    pub fn channel_mut(&mut self) -> Option<&mut ChannelAttention> {
        self.channel.as_mut()
    }

    pub fn head_mut(&mut self) -> Option<&mut Conv2d> {
        self.head.as_mut()
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.channels() != self.n_branches {
            return Err(Error::Shape {
                context: "fusion branches",
                expected: vec![self.n_branches],
                actual: vec![x.channels()],
            });
        }
        Ok(())
    }

    pub fn spatial_weights(&self, x: &Tensor, stats: BnStats) -> Result<Option<Tensor>> {
        self.check(x)?;
        self.spatial.as_ref().map(|s| s.weights(x, stats)).transpose()
    }

    pub fn channel_weights(&self, x: &Tensor) -> Result<Option<Tensor>> {
        self.check(x)?;
        self.channel.as_ref().map(|c| c.weights(x)).transpose()
    }

    /// Spatial and channel module outputs (evaluation statistics).
    pub fn module_outputs(&self, x: &Tensor) -> Result<(Option<Tensor>, Option<Tensor>)> {
        self.check(x)?;
        let s = self.spatial.as_ref().map(|s| s.infer(x, BnStats::Running)).transpose()?;
        let c = self.channel.as_ref().map(|c| c.infer(x)).transpose()?;
        Ok((s, c))
    }

    /// Unclipped evaluation output, `B x 1 x H x W`.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        match self.module_outputs(x)? {
            (Some(s), Some(c)) => self
                .head
                .as_ref()
                .expect("dual model has a head")
                .infer(&Tensor::concat_channels(&s, &c)?),
            (Some(s), None) => Ok(s),
            (None, Some(c)) => Ok(c),
            (None, None) => unreachable!("every variant has a module"),
        }
    }

    /// Fused image for one stack, clipped to `[0, 1]`.
    pub fn fuse(&self, stack: &BranchStack) -> Result<ImageGray> {
        let x = Tensor::from_stacks(&[stack])?;
        let out = self.infer(&x)?;
        Ok(out.to_images(0).remove(0).map(|v| v.clamp(0.0, 1.0)))
    }

    /// Training-mode forward, unclipped.
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let s = self.spatial.as_mut().map(|s| s.forward(x)).transpose()?;
        let c = self.channel.as_mut().map(|c| c.forward(x)).transpose()?;
        match (s, c) {
            (Some(s), Some(c)) => self
                .head
                .as_mut()
                .expect("dual model has a head")
                .forward(&Tensor::concat_channels(&s, &c)?),
            (Some(s), None) => Ok(s),
            (None, Some(c)) => Ok(c),
            (None, None) => unreachable!("every variant has a module"),
        }
    }

    /// Backward through [`FusionModel::forward`]; returns the input gradient.
    pub fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let (gs, gc) = match &mut self.head {
            Some(head) => {
                let (a, b) = head.backward(g)?.split_channels();
                (Some(a), Some(b))
            }
            None => match self.variant {
                FusionVariant::SpatialOnly => (Some(g.clone()), None),
                _ => (None, Some(g.clone())),
            },
        };
        let mut gx: Option<Tensor> = None;
        if let (Some(s), Some(gs)) = (self.spatial.as_mut(), gs) {
            gx = Some(s.backward(&gs)?);
        }
        if let (Some(c), Some(gc)) = (self.channel.as_mut(), gc) {
            let part = c.backward(&gc)?;
            gx = Some(match gx {
                Some(mut acc) => {
                    acc.add_assign(&part)?;
                    acc
                }
                None => part,
            });
        }
        Ok(gx.expect("at least one module"))
    }
}

impl Trainable for FusionModel {
    fn params(&self) -> Vec<&TensorGrad> {
        let mut p = Vec::new();
        if let Some(s) = &self.spatial {
            p.extend(s.trunk.params());
        }
        if let Some(c) = &self.channel {
            p.extend([&c.fc1.weight, &c.fc1.bias, &c.fc2.weight, &c.fc2.bias]);
        }
        if let Some(h) = &self.head {
            p.extend([&h.weight, &h.bias]);
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut TensorGrad> {
        let mut p = Vec::new();
        if let Some(s) = &mut self.spatial {
            p.extend(s.trunk.params_mut());
        }
        if let Some(c) = &mut self.channel {
            p.extend([&mut c.fc1.weight, &mut c.fc1.bias, &mut c.fc2.weight, &mut c.fc2.bias]);
        }
        if let Some(h) = &mut self.head {
            p.extend([&mut h.weight, &mut h.bias]);
        }
        p
    }
}

impl Persist for FusionModel {
    /// Spatial trunk layers, then the two excitation layers, then the head.
    fn export(&self) -> Vec<LayerBlob> {
        let mut blobs = Vec::new();
        if let Some(s) = &self.spatial {
            blobs.extend(s.trunk.export());
        }
        if let Some(c) = &self.channel {
            blobs.push(dense_blob(&c.fc1));
            blobs.push(dense_blob(&c.fc2));
        }
        if let Some(h) = &self.head {
            blobs.push(conv_blob(h));
        }
        blobs
    }

    fn import(&mut self, blobs: &[LayerBlob]) -> Result<()> {
        let mut rest = blobs;
        if let Some(s) = &mut self.spatial {
            let n = s.trunk.export().len();
            if rest.len() < n {
                return Err(Error::Decode("fusion container truncated".into()));
            }
            s.trunk.import(&rest[..n])?;
            rest = &rest[n..];
        }
        if let Some(c) = &mut self.channel {
            if rest.len() < 2 {
                return Err(Error::Decode("fusion container truncated".into()));
            }
            load_dense(&mut c.fc1, &rest[0])?;
            load_dense(&mut c.fc2, &rest[1])?;
            rest = &rest[2..];
        }
        if let Some(h) = &mut self.head {
            let blob = rest
                .first()
                .ok_or_else(|| Error::Decode("fusion container truncated".into()))?;
            load_conv(h, blob)?;
            rest = &rest[1..];
        }
        if !rest.is_empty() {
            return Err(Error::Decode("extra layers in fusion container".into()));
        }
        Ok(())
    }
}

/// A branch stack with its clean target.
#[derive(Debug, Clone)]
pub struct FusionSample {
    pub stack: BranchStack,
    pub clean: ImageGray,
}

impl FusionSample {
    pub fn new(stack: BranchStack, clean: ImageGray) -> Result<Self> {
        stack.images()[0].ensure_same_dims(&clean)?;
        Ok(Self { stack, clean })
    }

    /// Co-located patches of the stack and its target.
    pub fn patches(&self, patch_size: usize, stride: usize) -> Result<Vec<FusionSample>> {
        let grid = extract_patches(&self.clean, patch_size, stride)?;
        grid.origins
            .iter()
            .zip(grid.patches)
            .map(|(&(r, c), clean)| {
                Ok(FusionSample {
                    stack: self.stack.crop(r, c, patch_size, patch_size)?,
                    clean,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct FusionTrainConfig {
    pub epochs: usize,
    pub schedule: LrSchedule,
    pub patch_size: usize,
    pub stride: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FusionTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            schedule: LrSchedule::DelayedStep {
                initial: 0.01,
                hold: 50,
                factor: 0.6,
                step: 30,
            },
            patch_size: 50,
            stride: 50,
            batch_size: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    /// Mean PSNR of the clipped fused output on the validation samples.
    pub val_psnr_db: f64,
    pub lr: f64,
}

fn check_branch_counts(samples: &[FusionSample], n: usize) -> Result<()> {
    if let Some(bad) = samples.iter().find(|s| s.stack.n_branches() != n) {
        return Err(Error::Shape {
            context: "fusion sample branches",
            expected: vec![n],
            actual: vec![bad.stack.n_branches()],
        });
    }
    Ok(())
}

/// Trains `model` with Adam on MSE over patches of `train`.
///
/// Patches are cut once; batches are reshuffled every epoch from a stream
/// keyed by the config seed and epoch number.
pub fn train_fusion(
    model: &mut FusionModel,
    train: &[FusionSample],
    val: &[FusionSample],
    config: &FusionTrainConfig,
) -> Result<Vec<FusionEpoch>> {
    if train.is_empty() {
        return Err(Error::Invalid("no fusion training samples".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Invalid("batch size must be positive".into()));
    }
    check_branch_counts(train, model.n_branches())?;
    check_branch_counts(val, model.n_branches())?;
    let mut patches = Vec::new();
    for s in train {
        patches.extend(s.patches(config.patch_size, config.stride)?);
    }

    let mut adam = Adam::new();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let lr = config.schedule.lr(epoch);
        let mut rng = seed::rng(seed::derive_indexed(config.seed, "fusion-epoch", epoch as u64));
        let mut order: Vec<usize> = (0..patches.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let stacks: Vec<&BranchStack> = chunk.iter().map(|&i| &patches[i].stack).collect();
            let cleans: Vec<&ImageGray> = chunk.iter().map(|&i| &patches[i].clean).collect();
            let x = Tensor::from_stacks(&stacks)?;
            let target = Tensor::from_images(&cleans)?;
            let out = model.forward(&x)?;
            let (loss, grad) = mse_loss(&out, &target)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            model.backward(&grad)?;
            adam.step(&mut model.params_mut(), lr)?;
            loss_sum += loss;
            n_batches += 1;
        }
        let val_psnr_db = if val.is_empty() {
            f64::NAN
        } else {
            let mut total = 0.0;
            for s in val {
                total += psnr(&s.clean, &model.fuse(&s.stack)?)?.value_or(100.0);
            }
            total / val.len() as f64
        };
        history.push(FusionEpoch {
            epoch,
            train_loss: loss_sum / n_batches as f64,
            val_psnr_db,
            lr,
        });
    }
    Ok(history)
}

/// Ensemble strategies compared on every evaluation image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// The mode-0 branch alone (the plain denoiser output).
    Baseline,
    SimpleAverage,
    SpatialOnly,
    ChannelOnly,
    DualFusion,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::SimpleAverage => "simple_average",
            Strategy::SpatialOnly => "spatial_only",
            Strategy::ChannelOnly => "channel_only",
            Strategy::DualFusion => "dual_fusion",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Trained models to evaluate; absent ones are skipped.
#[derive(Debug, Clone, Copy, Default)]
pub struct FusionModels<'a> {
    pub dual: Option<&'a FusionModel>,
    pub spatial: Option<&'a FusionModel>,
    pub channel: Option<&'a FusionModel>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageScore {
    pub image: usize,
    pub strategy: Strategy,
    pub psnr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyScore {
    pub strategy: Strategy,
    pub mean_psnr_db: f64,
    pub n_images: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleReport {
    pub per_image: Vec<ImageScore>,
    pub summary: Vec<StrategyScore>,
}

impl EnsembleReport {
    pub fn mean(&self, strategy: Strategy) -> Option<f64> {
        self.summary.iter().find(|s| s.strategy == strategy).map(|s| s.mean_psnr_db)
    }

    /// `noise_level,strategy,mean_psnr_db,n_images` rows, no header.
    pub fn summary_csv_rows(&self, noise_level: f64) -> String {
        self.summary
            .iter()
            .map(|s| format!("{noise_level},{},{:.6},{}\n", s.strategy, s.mean_psnr_db, s.n_images))
            .collect()
    }
}

pub const SUMMARY_CSV_HEADER: &str = "noise_level,strategy,mean_psnr_db,n_images\n";

/// Fused output of every strategy for one stack, in report order.
pub fn strategy_outputs(stack: &BranchStack, models: &FusionModels<'_>) -> Result<Vec<(Strategy, ImageGray)>> {
    let baseline = stack
        .branch(ManipulationMode::new(0)?)
        .unwrap_or(&stack.images()[0])
        .clone();
    let mut out = vec![
        (Strategy::Baseline, baseline),
        (Strategy::SimpleAverage, simple_average(stack)),
    ];
    for (strategy, model) in [
        (Strategy::SpatialOnly, models.spatial),
        (Strategy::ChannelOnly, models.channel),
        (Strategy::DualFusion, models.dual),
    ] {
        if let Some(m) = model {
            out.push((strategy, m.fuse(stack)?));
        }
    }
    Ok(out)
}

/// Mean PSNR per strategy over `samples`. Infinite PSNR counts as 100 dB.
pub fn evaluate_ensembles(samples: &[FusionSample], models: &FusionModels<'_>) -> Result<EnsembleReport> {
    use rayon::prelude::*;
    let rows: Vec<Vec<ImageScore>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            strategy_outputs(&s.stack, models)?
                .into_iter()
                .map(|(strategy, img)| {
                    Ok(ImageScore {
                        image: i,
                        strategy,
                        psnr_db: psnr(&s.clean, &img)?.value_or(100.0),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let per_image: Vec<ImageScore> = rows.into_iter().flatten().collect();
    let mut summary: Vec<StrategyScore> = Vec::new();
    for score in &per_image {
        match summary.iter_mut().find(|s| s.strategy == score.strategy) {
            Some(s) => {
                s.mean_psnr_db += score.psnr_db;
                s.n_images += 1;
            }
            None => summary.push(StrategyScore {
                strategy: score.strategy,
                mean_psnr_db: score.psnr_db,
                n_images: 1,
            }),
        }
    }
    for s in &mut summary {
        s.mean_psnr_db /= s.n_images as f64;
    }
    Ok(EnsembleReport { per_image, summary })
}
