//! Finite-difference checks of every layer and network, shared by the
//! gradient tests and the acceptance run.

use dualfuse::auxloss::ErrorEstimator;
use dualfuse::denoise::TinyDenoiser;
use dualfuse::fusion::{FusionModel, FusionVariant};
use dualfuse::nn::{
    check_params, gradient_check, mse_loss, BatchNorm2d, Conv2d, Dense, GlobalAvgPool, Relu, Sigmoid,
    SoftmaxChannels, Tensor, Trainable,
};
use dualfuse::seed;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
/// Smooth layers.
pub const TOL_SMOOTH: f64 = 1e-4;
/// Anything containing a ReLU, and whole networks.
pub const TOL_NETWORK: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradCase {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
}

impl GradCase {
    pub fn passed(&self) -> bool {
        self.error < self.tolerance
    }
}

fn rng(label: &str) -> ChaCha8Rng {
    seed::rng(seed::derive(0x6772_6164, label))
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Moves values out of `(-margin, margin)` so ReLU kinks are not straddled.
fn away_from_zero(t: &Tensor, margin: f64) -> Tensor {
    t.map(|v| if v.abs() < margin { v.signum() * margin + v } else { v })
}

fn dot(a: &Tensor, r: &Tensor) -> f64 {
    a.data().iter().zip(r.data()).map(|(x, y)| x * y).sum()
}

fn jitter_params<M: Trainable>(model: &mut M, rng: &mut ChaCha8Rng, scale: f64) {
    for p in model.params_mut() {
        for v in p.value.iter_mut() {
            *v += rng.random_range(-scale..scale);
        }
    }
}

/// Checks a stateful unit given as a forward closure and a backward closure
/// on the projected loss `sum(r * f(x))`. Returns the input-gradient error.
fn input_check(
    x: &Tensor,
    r: &Tensor,
    mut forward: impl FnMut(&Tensor) -> Tensor,
    backward_grad: &Tensor,
) -> f64 {
    let shape = x.shape();
    let mut point = x.data().to_vec();
    gradient_check(&mut point, backward_grad.data(), STEP, |p| {
        let xt = Tensor::from_vec(shape, p.to_vec()).unwrap();
        dot(&forward(&xt), r)
    })
}

fn case(name: impl Into<String>, error: f64, tolerance: f64) -> GradCase {
    GradCase {
        name: name.into(),
        error,
        tolerance,
    }
}

fn conv_cases(out: &mut Vec<GradCase>) {
    for (k, shape, oc) in [(3, [2, 3, 5, 4], 2), (1, [1, 2, 3, 3], 3), (5, [2, 1, 6, 7], 2)] {
        let mut g = rng(&format!("conv{k}"));
        let mut conv = Conv2d::new("c", shape[1], oc, k, &mut g);
        jitter_params(&mut conv, &mut g, 0.1);
        let x = random_tensor(&mut g, shape, 1.0);
        let r = random_tensor(&mut g, [shape[0], oc, shape[2], shape[3]], 1.0);
        conv.forward(&x).unwrap();
        let gx = conv.backward(&r).unwrap();
        let ein = input_check(&x, &r, |t| conv.clone().forward(t).unwrap(), &gx);
        let ep = check_params(&mut conv, STEP, 64, |m| dot(&m.forward(&x).unwrap(), &r));
        out.push(case(format!("conv2d k{k}"), ein.max(ep), TOL_SMOOTH));
    }
}

fn batchnorm_case(out: &mut Vec<GradCase>) {
    let mut g = rng("bn");
    let mut bn = BatchNorm2d::new("bn", 3);
    jitter_params(&mut bn, &mut g, 0.5);
    let x = random_tensor(&mut g, [3, 3, 4, 3], 2.0);
    let r = random_tensor(&mut g, x.shape(), 1.0);
    bn.forward(&x).unwrap();
    let gx = bn.backward(&r).unwrap();
    let ein = input_check(&x, &r, |t| bn.clone().forward(t).unwrap(), &gx);
    let ep = check_params(&mut bn, STEP, 64, |m| dot(&m.forward(&x).unwrap(), &r));
    out.push(case("batchnorm2d", ein.max(ep), TOL_SMOOTH));
}

fn dense_case(out: &mut Vec<GradCase>) {
    let mut g = rng("dense");
    let mut d = Dense::new("d", 6, 4, &mut g);
    jitter_params(&mut d, &mut g, 0.2);
    let x = random_tensor(&mut g, [3, 6, 1, 1], 1.0);
    let r = random_tensor(&mut g, [3, 4, 1, 1], 1.0);
    d.forward(&x).unwrap();
    let gx = d.backward(&r).unwrap();
    let ein = input_check(&x, &r, |t| d.clone().forward(t).unwrap(), &gx);
    let ep = check_params(&mut d, STEP, 64, |m| dot(&m.forward(&x).unwrap(), &r));
    out.push(case("dense", ein.max(ep), TOL_SMOOTH));
}

fn activation_cases(out: &mut Vec<GradCase>) {
    let mut g = rng("activations");
    let shape = [2, 3, 4, 4];
    let r = random_tensor(&mut g, shape, 1.0);

    let x = away_from_zero(&random_tensor(&mut g, shape, 2.0), 0.01);
    let mut relu = Relu::default();
    relu.forward(&x);
    let gx = relu.backward(&r).unwrap();
    out.push(case(
        "relu",
        input_check(&x, &r, |t| Relu::default().forward(t), &gx),
        TOL_NETWORK,
    ));

    let x = random_tensor(&mut g, shape, 3.0);
    let mut sig = Sigmoid::default();
    sig.forward(&x);
    let gx = sig.backward(&r).unwrap();
    out.push(case(
        "sigmoid",
        input_check(&x, &r, |t| Sigmoid::default().forward(t), &gx),
        TOL_SMOOTH,
    ));

    let mut sm = SoftmaxChannels::default();
    sm.forward(&x);
    let gx = sm.backward(&r).unwrap();
    out.push(case(
        "softmax_channels",
        input_check(&x, &r, |t| SoftmaxChannels::default().forward(t), &gx),
        TOL_SMOOTH,
    ));

    let rp = random_tensor(&mut g, [2, 3, 1, 1], 1.0);
    let mut gap = GlobalAvgPool::default();
    gap.forward(&x);
    let gx = gap.backward(&rp).unwrap();
    out.push(case(
        "global_avg_pool",
        input_check(&x, &rp, |t| GlobalAvgPool::default().forward(t), &gx),
        TOL_SMOOTH,
    ));
}

fn mse_case(out: &mut Vec<GradCase>) {
    let mut g = rng("mse");
    let pred = random_tensor(&mut g, [2, 1, 3, 3], 1.0);
    let target = random_tensor(&mut g, pred.shape(), 1.0);
    let (_, grad) = mse_loss(&pred, &target).unwrap();
    let mut point = pred.data().to_vec();
    let err = gradient_check(&mut point, grad.data(), STEP, |p| {
        let t = Tensor::from_vec(pred.shape(), p.to_vec()).unwrap();
        mse_loss(&t, &target).unwrap().0
    });
    out.push(case("mse_loss", err, 1e-6));
}

fn fusion_cases(out: &mut Vec<GradCase>) {
    for variant in FusionVariant::ALL {
        let mut g = rng(&format!("fusion-{variant}"));
        let mut model = FusionModel::new(2, variant, 17).unwrap();
        // move the zero-initialized logit layers off zero
        jitter_params(&mut model, &mut g, 0.2);
        let x = random_tensor(&mut g, [2, 2, 6, 6], 0.5).map(|v| v + 0.5);
        let r = random_tensor(&mut g, [2, 1, 6, 6], 1.0);
        model.forward(&x).unwrap();
        let gx = model.backward(&r).unwrap();
        let snapshot = model.clone();
        let ein = input_check(&x, &r, |t| snapshot.clone().forward(t).unwrap(), &gx);
        let ep = check_params(&mut model, STEP, 24, |m| dot(&m.forward(&x).unwrap(), &r));
        out.push(case(format!("fusion model ({variant})"), ein.max(ep), TOL_NETWORK));
    }
}

fn denoiser_case(out: &mut Vec<GradCase>) {
    let mut g = rng("denoiser");
    let mut model = TinyDenoiser::new(4, 4, 23).unwrap();
    jitter_params(&mut model, &mut g, 0.05);
    let x = random_tensor(&mut g, [2, 1, 8, 8], 0.5).map(|v| v + 0.5);
    let r = random_tensor(&mut g, x.shape(), 1.0);
    model.forward_train(&x).unwrap();
    let gx = model.backward(&r).unwrap();
    let snapshot = model.clone();
    let ein = input_check(&x, &r, |t| snapshot.clone().forward_train(t).unwrap(), &gx);
    let ep = check_params(&mut model, STEP, 24, |m| dot(&m.forward_train(&x).unwrap(), &r));
    out.push(case("tiny denoiser", ein.max(ep), TOL_NETWORK));
}

fn estimator_case(out: &mut Vec<GradCase>) {
    let mut g = rng("estimator");
    let mut model = ErrorEstimator::new(4, 29).unwrap();
    jitter_params(&mut model, &mut g, 0.05);
    let x = random_tensor(&mut g, [2, 1, 8, 8], 0.5).map(|v| v + 0.5);
    let r = random_tensor(&mut g, x.shape(), 1.0);
    model.forward(&x).unwrap();
    let gx = model.backward(&r).unwrap();
    let snapshot = model.clone();
    let ein = input_check(&x, &r, |t| snapshot.clone().forward(t).unwrap(), &gx);
    let ep = check_params(&mut model, STEP, 24, |m| dot(&m.forward(&x).unwrap(), &r));
    out.push(case("error estimator", ein.max(ep), TOL_NETWORK));
}

/// Every layer, then the three networks.
pub fn run_all() -> Vec<GradCase> {
    let mut out = Vec::new();
    conv_cases(&mut out);
    batchnorm_case(&mut out);
    dense_case(&mut out);
    activation_cases(&mut out);
    mse_case(&mut out);
    fusion_cases(&mut out);
    denoiser_case(&mut out);
    estimator_case(&mut out);
    out
}
