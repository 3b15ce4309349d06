//! Property checks shared by the integration tests and the acceptance run.
//! Each returns `Err` with a description of the first violation.

use dualfuse::freq::{dct2, idct2, psd, radial_mask, FrequencyMaskSpec};
use dualfuse::fusion::{FusionModel, FusionVariant};
use dualfuse::image::{add_awgn, clip_unit};
use dualfuse::manip::{apply_dihedral, invert_dihedral, manipulate, simple_average, BranchStack, ModeKind};
use dualfuse::nn::{BnStats, Tensor, Trainable};
use dualfuse::{seed, ImageGray, ManipulationMode, NoiseLevel};
use rand::Rng;

pub type Check = Result<String, String>;

fn mode(id: u8) -> ManipulationMode {
    ManipulationMode::new(id).unwrap()
}

fn random_image(rng: &mut impl Rng, h: usize, w: usize) -> ImageGray {
    ImageGray::from_fn(h, w, |_, _| rng.random::<f64>())
}

/// Expected outputs of modes 0..8, worked out by hand.
const HAND_2X2: [[[f64; 2]; 2]; 8] = [
    [[1., 2.], [3., 4.]],
    [[1., 3.], [2., 4.]],
    [[3., 4.], [1., 2.]],
    [[3., 1.], [4., 2.]],
    [[2., 1.], [4., 3.]],
    [[2., 4.], [1., 3.]],
    [[4., 3.], [2., 1.]],
    [[4., 2.], [3., 1.]],
];

fn hand_2x3(m: usize) -> ImageGray {
    let rows: Vec<Vec<f64>> = match m {
        0 => vec![vec![1., 2., 3.], vec![4., 5., 6.]],
        1 => vec![vec![1., 4.], vec![2., 5.], vec![3., 6.]],
        2 => vec![vec![4., 5., 6.], vec![1., 2., 3.]],
        3 => vec![vec![4., 1.], vec![5., 2.], vec![6., 3.]],
        4 => vec![vec![3., 2., 1.], vec![6., 5., 4.]],
        5 => vec![vec![3., 6.], vec![2., 5.], vec![1., 4.]],
        6 => vec![vec![6., 5., 4.], vec![3., 2., 1.]],
        _ => vec![vec![6., 3.], vec![5., 2.], vec![4., 1.]],
    };
    ImageGray::from_rows(&rows)
}

pub fn dihedral_algebra() -> Check {
    let square = ImageGray::from_rows(&[[1., 2.], [3., 4.]]);
    let wide = ImageGray::from_rows(&[[1., 2., 3.], [4., 5., 6.]]);
    for m in 0..8u8 {
        let got = apply_dihedral(&square, mode(m)).unwrap();
        if got != ImageGray::from_rows(&HAND_2X2[m as usize]) {
            return Err(format!("mode {m} on 2x2 gave {:?}", got.data()));
        }
        let got = apply_dihedral(&wide, mode(m)).unwrap();
        if got != hand_2x3(m as usize) {
            return Err(format!("mode {m} on 2x3 gave {:?}", got.data()));
        }
    }
    // Cayley table on a probe with all-distinct pixels
    let probe = ImageGray::from_fn(4, 4, |r, c| (r * 4 + c) as f64);
    let images: Vec<ImageGray> = (0..8).map(|m| apply_dihedral(&probe, mode(m)).unwrap()).collect();
    for (i, img) in images.iter().enumerate() {
        if images[..i].contains(img) {
            return Err(format!("mode {i} duplicates an earlier mode"));
        }
    }
    let mut table = [[0usize; 8]; 8];
    for a in 0..8u8 {
        for b in 0..8u8 {
            let composed = apply_dihedral(&apply_dihedral(&probe, mode(a)).unwrap(), mode(b)).unwrap();
            match images.iter().position(|i| *i == composed) {
                Some(c) => table[a as usize][b as usize] = c,
                None => return Err(format!("mode {b} after mode {a} is not a dihedral mode")),
            }
        }
    }
    for (a, row) in table.iter().enumerate() {
        let mut seen = [false; 8];
        for &c in row {
            seen[c] = true;
        }
        if seen.contains(&false) {
            return Err(format!("row {a} of the composition table is not a permutation"));
        }
        if !row.contains(&0) {
            return Err(format!("mode {a} has no inverse"));
        }
    }
    let mut rng = seed::rng(seed::derive(1, "dihedral-probe"));
    for (h, w) in [(3, 5), (5, 3), (1, 4), (6, 6)] {
        let x = random_image(&mut rng, h, w);
        for m in 0..8u8 {
            let y = apply_dihedral(&x, mode(m)).unwrap();
            if invert_dihedral(&y, mode(m)).unwrap() != x {
                return Err(format!("mode {m} round trip failed on {h}x{w}"));
            }
        }
    }
    Ok("8 modes match hand tables; composition table closed; inverses exact".into())
}

pub fn dct_correctness(n_images: usize) -> Check {
    let mut rng = seed::rng(seed::derive(2, "dct-random"));
    let (mut worst_rt, mut worst_parseval) = (0.0f64, 0.0f64);
    for i in 0..n_images {
        let (h, w) = if i == 0 { (64, 64) } else { (rng.random_range(1..=64), rng.random_range(1..=64)) };
        let x = ImageGray::from_fn(h, w, |_, _| rng.random_range(-1.0..2.0));
        let c = dct2(&x);
        let back = idct2(&c);
        for (a, b) in back.data().iter().zip(x.data()) {
            worst_rt = worst_rt.max((a - b).abs());
        }
        let e_pix: f64 = x.data().iter().map(|v| v * v).sum();
        let e_coef: f64 = c.coeffs.iter().map(|v| v * v).sum();
        worst_parseval = worst_parseval.max((e_pix - e_coef).abs() / e_pix.max(1e-300));
    }
    if worst_rt > 1e-9 || worst_parseval > 1e-9 {
        return Err(format!("round trip {worst_rt:.2e}, Parseval {worst_parseval:.2e}"));
    }
    Ok(format!("{n_images} images: round trip {worst_rt:.1e}, Parseval {worst_parseval:.1e}"))
}

fn masked(h: usize, w: usize, m: u8) -> Vec<bool> {
    let ModeKind::Frequency(spec) = mode(m).kind() else { unreachable!() };
    radial_mask(h, w, &spec).unwrap().into_iter().map(|keep| !keep).collect()
}

/// Largest deviation a constant may pick up in a DCT round trip.
pub const CONSTANT_TOL: f64 = 1e-12;

pub fn mask_semantics() -> Check {
    let mut worst: f64 = 0.0;
    for (h, w) in [(1, 1), (2, 2), (7, 5), (16, 16), (33, 20), (64, 64)] {
        let (m8, m9, m10) = (masked(h, w, 8), masked(h, w, 9), masked(h, w, 10));
        for i in 0..h * w {
            if (m10[i] && !m9[i]) || (m9[i] && !m8[i]) {
                return Err(format!("nesting broken at index {i} on {h}x{w}"));
            }
        }
        for m in [8u8, 9, 10, 11, 12] {
            for level in [0.0, 0.37, 1.0] {
                let out = manipulate(&ImageGray::filled(h, w, level), mode(m)).unwrap();
                for v in out.data() {
                    worst = worst.max((v - level).abs());
                }
            }
        }
        let all = FrequencyMaskSpec::new(0.0, f64::INFINITY).unwrap();
        if radial_mask(h, w, &all).unwrap().iter().any(|&k| k) {
            return Err(format!("full-band mask kept an index on {h}x{w}"));
        }
        let zero = dualfuse::freq::mask_image(&ImageGray::filled(h, w, 0.6), &all).unwrap();
        if zero.data().iter().any(|&v| v != 0.0) {
            return Err(format!("full-band mask left non-zero pixels on {h}x{w}"));
        }
    }
    if FrequencyMaskSpec::new(0.0, 0.0).is_ok() {
        return Err("empty band accepted".into());
    }
    if worst > CONSTANT_TOL {
        return Err(format!("constant drifted by {worst:.2e}"));
    }
    Ok(format!("nesting holds; constants preserved to {worst:.1e}; full mask gives zeros"))
}

fn random_stack(rng: &mut impl Rng, n: usize, h: usize, w: usize) -> BranchStack {
    let modes = (0..n as u8).map(mode).collect();
    let images = (0..n).map(|_| random_image(rng, h, w)).collect();
    BranchStack::new(modes, images).unwrap()
}

pub fn attention_normalization(trials: usize) -> Check {
    let mut rng = seed::rng(seed::derive(5, "attention-trials"));
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let n = rng.random_range(1..=13);
        let (h, w) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let batch = rng.random_range(1..=2);
        let mut model = FusionModel::new(n, FusionVariant::Dual, rng.random()).unwrap();
        let scale = rng.random_range(0.1..5.0);
        for p in model.params_mut() {
            for v in p.value.iter_mut() {
                *v += rng.random_range(-scale..scale);
            }
        }
        let stacks: Vec<BranchStack> = (0..batch).map(|_| random_stack(&mut rng, n, h, w)).collect();
        let refs: Vec<&BranchStack> = stacks.iter().collect();
        let x = Tensor::from_stacks(&refs).unwrap().map(|v| v * 4.0 - 2.0);
        let sw = model.spatial_weights(&x, BnStats::Batch).unwrap().unwrap();
        let cw = model.channel_weights(&x).unwrap().unwrap();
        for weights in [&sw, &cw] {
            let [b, c, hh, ww] = weights.shape();
            for bi in 0..b {
                for p in 0..hh * ww {
                    let mut sum = 0.0;
                    for ch in 0..c {
                        let v = weights.plane(bi, ch)[p];
                        if !(0.0..=1.0).contains(&v) || v.is_nan() {
                            return Err(format!("trial {t}: weight {v} outside [0, 1]"));
                        }
                        sum += v;
                    }
                    worst = worst.max((sum - 1.0).abs());
                }
            }
        }
    }
    if worst > 1e-6 {
        return Err(format!("weights sum off by {worst:.2e}"));
    }
    Ok(format!("{trials} trials, worst |sum - 1| = {worst:.1e}"))
}

pub fn zero_init_equivalence() -> Check {
    let mut rng = seed::rng(seed::derive(6, "zero-init"));
    let mut worst: f64 = 0.0;
    for (n, h, w) in [(13, 9, 7), (2, 6, 6), (8, 16, 12), (1, 3, 3)] {
        let stack = random_stack(&mut rng, n, h, w);
        let avg = simple_average(&stack);
        for s in [0u64, 1, 99] {
            let model = FusionModel::new(n, FusionVariant::Dual, s).unwrap();
            let x = Tensor::from_stacks(&[&stack]).unwrap();
            let (sp, ch) = model.module_outputs(&x).unwrap();
            for out in [sp.unwrap(), ch.unwrap()] {
                for (a, b) in out.data().iter().zip(avg.data()) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    if worst > 1e-9 {
        return Err(format!("module output differs from the average by {worst:.2e}"));
    }
    Ok(format!("both modules equal the simple average to {worst:.1e}"))
}

pub fn psd_properties() -> Check {
    let n_bins = 16;
    let white: Vec<ImageGray> = (0..64)
        .map(|i| add_awgn(&ImageGray::zeros(64, 64), NoiseLevel::new(30.0).unwrap(), seed::derive_indexed(7, "white", i)))
        .collect();
    let curve = psd(&white, n_bins).unwrap();
    let hi = curve.power_db.iter().cloned().fold(f64::MIN, f64::max);
    let lo = curve.power_db.iter().cloned().fold(f64::MAX, f64::min);
    if hi - lo > 1.0 {
        return Err(format!("white-noise PSD spans {:.3} dB", hi - lo));
    }
    let clean = dualfuse::toy::images();
    let noisy: Vec<ImageGray> = clean
        .iter()
        .enumerate()
        .map(|(i, c)| {
            clip_unit(&add_awgn(c, NoiseLevel::new(50.0).unwrap(), seed::derive_indexed(7, "psd-noisy", i as u64)))
                .unwrap()
        })
        .collect();
    let pc = psd(&clean, n_bins).unwrap();
    let pn = psd(&noisy, n_bins).unwrap();
    let top = n_bins - n_bins / 3;
    let mut margin = f64::MAX;
    for b in top..n_bins {
        margin = margin.min(pn.power_db[b] - pc.power_db[b]);
    }
    if margin <= 0.0 {
        return Err(format!("noisy PSD not above clean in the top bins (margin {margin:.3} dB)"));
    }
    Ok(format!("white noise flat to {:.3} dB; noisy exceeds clean by >= {margin:.2} dB in top third", hi - lo))
}
