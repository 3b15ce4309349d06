//! Grayscale images on the unit interval, noise synthesis, patching and PSNR.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Dims, Error, Result};
use crate::seed;

/// Row-major grayscale image with nominal intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageGray {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Invalid(format!(
                "{height}x{width} image needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Builds an image from nested rows; panics on ragged input. Meant for tests.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(height * width);
        for row in rows {
            assert_eq!(row.as_ref().len(), width, "ragged rows");
            data.extend_from_slice(row.as_ref());
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> Dims {
        Dims(self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Top-left `height × width` window.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::Invalid(format!(
                "crop {height}x{width} at ({row}, {col}) exceeds {}",
                self.dims()
            )));
        }
        Ok(Self::from_fn(height, width, |r, c| self.get(row + r, col + c)))
    }

    pub fn ensure_same_dims(&self, other: &ImageGray) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinitePixel {
                row: i / self.width,
                col: i % self.width,
                value: self.data[i],
            }),
            None => Ok(()),
        }
    }
}

/// Gaussian noise standard deviation on the 8-bit scale, within `[0, 55]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NoiseLevel(f64);

impl NoiseLevel {
    pub const MAX: f64 = 55.0;

    pub fn new(sigma: f64) -> Result<Self> {
        if !(0.0..=Self::MAX).contains(&sigma) {
            return Err(Error::NoiseLevel(sigma));
        }
        Ok(Self(sigma))
    }

    /// Sigma on the 8-bit scale.
    pub fn sigma(self) -> f64 {
        self.0
    }

    /// Standard deviation in unit-interval intensities.
    pub fn unit(self) -> f64 {
        self.0 / 255.0
    }
}

impl fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Clamps every pixel into `[0, 1]`. Rejects non-finite pixels.
pub fn clip_unit(image: &ImageGray) -> Result<ImageGray> {
    image.check_finite()?;
    Ok(image.map(|v| v.clamp(0.0, 1.0)))
}

/// Adds i.i.d. Gaussian noise with standard deviation `sigma / 255`.
///
/// The output is not clipped. Identical `(image, sigma, seed)` give identical
/// output; callers generating noise for many images should key the seed per
/// image with [`seed::derive_indexed`].
pub fn add_awgn(image: &ImageGray, sigma: NoiseLevel, seed: u64) -> ImageGray {
    if sigma.sigma() == 0.0 {
        return image.clone();
    }
    let std = sigma.unit();
    let mut rng = seed::rng(seed);
    image.map(|v| {
        let n: f64 = rng.sample(StandardNormal);
        v + std * n
    })
}

/// PSNR in decibels with peak 1. Identical images give [`Psnr::Infinite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn from_mse(mse: f64) -> Self {
        if mse == 0.0 {
            Psnr::Infinite
        } else {
            Psnr::Finite(-10.0 * mse.log10())
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Psnr::Infinite)
    }

    /// Finite value, or `cap` for the infinite sentinel.
    pub fn value_or(self, cap: f64) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => cap,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Psnr::Finite(v) => Some(v),
            Psnr::Infinite => None,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.6}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

pub fn mse(reference: &ImageGray, test: &ImageGray) -> Result<f64> {
    reference.ensure_same_dims(test)?;
    let sum: f64 = reference
        .data
        .iter()
        .zip(&test.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len() as f64)
}

pub fn psnr(reference: &ImageGray, test: &ImageGray) -> Result<Psnr> {
    Ok(Psnr::from_mse(mse(reference, test)?))
}

/// Patches cut from one source image, in row-major origin order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub stride: usize,
    pub patches: Vec<ImageGray>,
    pub origins: Vec<(usize, usize)>,
}

impl PatchGrid {
    /// Writes every patch back at its origin on a zero canvas of the given size.
    pub fn paste(&self, height: usize, width: usize) -> ImageGray {
        let mut canvas = ImageGray::zeros(height, width);
        for (patch, &(r0, c0)) in self.patches.iter().zip(&self.origins) {
            for r in 0..self.patch_size {
                for c in 0..self.patch_size {
                    canvas.set(r0 + r, c0 + c, patch.get(r, c));
                }
            }
        }
        canvas
    }
}

fn patch_offsets(extent: usize, patch_size: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..=extent - patch_size).step_by(stride)
}

/// Every fully contained `patch_size` square at offsets that are multiples of
/// `stride`. Partial border patches are dropped.
pub fn extract_patches(image: &ImageGray, patch_size: usize, stride: usize) -> Result<PatchGrid> {
    if patch_size == 0 || stride == 0 {
        return Err(Error::Invalid("patch size and stride must be positive".into()));
    }
    if patch_size > image.height || patch_size > image.width {
        return Err(Error::Invalid(format!(
            "patch size {patch_size} exceeds image {}",
            image.dims()
        )));
    }
    let mut patches = Vec::new();
    let mut origins = Vec::new();
    for r in patch_offsets(image.height, patch_size, stride) {
        for c in patch_offsets(image.width, patch_size, stride) {
            patches.push(image.crop(r, c, patch_size, patch_size)?);
            origins.push((r, c));
        }
    }
    Ok(PatchGrid {
        patch_size,
        stride,
        patches,
        origins,
    })
}

/// Per-pixel mean of `|noisy - denoised|` over a list of equally sized pairs.
pub fn removed_noise_heatmap(noisy: &[ImageGray], denoised: &[ImageGray]) -> Result<ImageGray> {
    if noisy.is_empty() {
        return Err(Error::Invalid("heat map needs at least one image pair".into()));
    }
    if noisy.len() != denoised.len() {
        return Err(Error::Invalid(format!(
            "{} noisy images but {} denoised",
            noisy.len(),
            denoised.len()
        )));
    }
    let first = &noisy[0];
    let mut acc = vec![0.0; first.len()];
    for (n, d) in noisy.iter().zip(denoised) {
        first.ensure_same_dims(n)?;
        n.ensure_same_dims(d)?;
        for (a, (x, y)) in acc.iter_mut().zip(n.data.iter().zip(&d.data)) {
            *a += (x - y).abs();
        }
    }
    let k = noisy.len() as f64;
    ImageGray::new(first.height, first.width, acc.into_iter().map(|a| a / k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_clamps_endpoints() {
        let img = ImageGray::from_rows(&[[1.3, -0.2], [0.5, 1.0]]);
        let out = clip_unit(&img).unwrap();
        assert_eq!(out.data(), &[1.0, 0.0, 0.5, 1.0]);
        let inside = ImageGray::from_rows(&[[0.0, 0.25], [0.75, 1.0]]);
        assert_eq!(clip_unit(&inside).unwrap(), inside);
        let flat = ImageGray::filled(3, 3, 0.5);
        assert_eq!(clip_unit(&flat).unwrap(), flat);
    }

    #[test]
    fn clip_names_the_bad_pixel() {
        let mut img = ImageGray::zeros(3, 4);
        img.set(2, 1, f64::NAN);
        match clip_unit(&img) {
            Err(Error::NonFinitePixel { row: 2, col: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn awgn_zero_sigma_and_determinism() {
        let img = ImageGray::from_fn(8, 8, |r, c| (r * 8 + c) as f64 / 64.0);
        assert_eq!(add_awgn(&img, NoiseLevel::new(0.0).unwrap(), 3), img);
        let s = NoiseLevel::new(25.0).unwrap();
        assert_eq!(add_awgn(&img, s, 11), add_awgn(&img, s, 11));
        assert_ne!(add_awgn(&img, s, 11), add_awgn(&img, s, 12));
    }

    #[test]
    fn awgn_statistics() {
        let img = ImageGray::filled(256, 256, 0.5);
        let s = NoiseLevel::new(25.0).unwrap();
        let noisy = add_awgn(&img, s, 2024);
        let diffs: Vec<f64> = noisy.data().iter().map(|v| v - 0.5).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
        let target = 25.0 / 255.0;
        assert!((var.sqrt() - target).abs() / target < 0.02, "std {}", var.sqrt());
        assert!(mean.abs() < 3.0 * target / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn noise_level_range() {
        assert!(NoiseLevel::new(55.0).is_ok());
        assert!(NoiseLevel::new(55.5).is_err());
        assert!(NoiseLevel::new(-1.0).is_err());
    }

    #[test]
    fn psnr_reference_values() {
        let a = ImageGray::filled(4, 4, 0.0);
        assert_eq!(psnr(&a, &a).unwrap(), Psnr::Infinite);
        let b = ImageGray::filled(4, 4, 0.1);
        let p = psnr(&a, &b).unwrap().finite().unwrap();
        assert!((p - 20.0).abs() < 1e-9);
        let c = ImageGray::filled(4, 4, 0.5);
        let p = psnr(&a, &c).unwrap().finite().unwrap();
        assert!((p - 10.0 * 4f64.log10()).abs() < 1e-12);
        assert!((p - 6.0206).abs() < 1e-4);
        assert!(psnr(&a, &ImageGray::zeros(4, 5)).is_err());
    }

    #[test]
    fn patch_tiling() {
        let img = ImageGray::from_fn(100, 100, |r, c| (r + c) as f64);
        let g = extract_patches(&img, 50, 50).unwrap();
        assert_eq!(g.origins, vec![(0, 0), (0, 50), (50, 0), (50, 50)]);
        assert_eq!(g.paste(100, 100), img);

        let g = extract_patches(&ImageGray::zeros(64, 64), 64, 32).unwrap();
        assert_eq!(g.patches.len(), 1);
        let g = extract_patches(&ImageGray::zeros(96, 96), 64, 32).unwrap();
        assert_eq!(g.origins, vec![(0, 0), (0, 32), (32, 0), (32, 32)]);
        assert!(extract_patches(&ImageGray::zeros(40, 80), 50, 10).is_err());
    }

    #[test]
    fn heatmap_means() {
        let n = ImageGray::filled(2, 2, 0.5);
        assert_eq!(
            removed_noise_heatmap(&[n.clone()], &[n.clone()]).unwrap(),
            ImageGray::zeros(2, 2)
        );
        let mut d1 = n.clone();
        d1.set(0, 1, 0.7);
        let one = removed_noise_heatmap(&[n.clone()], &[d1]).unwrap();
        assert!((one.get(0, 1) - 0.2).abs() < 1e-12);
        assert_eq!(one.get(1, 1), 0.0);

        let mut a = n.clone();
        a.set(1, 0, 0.4);
        let mut b = n.clone();
        b.set(1, 0, 0.8);
        let two = removed_noise_heatmap(&[n.clone(), n.clone()], &[a, b]).unwrap();
        assert!((two.get(1, 0) - 0.2).abs() < 1e-12);
        assert!(removed_noise_heatmap(&[], &[]).is_err());
        assert!(removed_noise_heatmap(&[n.clone(), ImageGray::zeros(3, 3)], &[n.clone(), ImageGray::zeros(3, 3)]).is_err());
    }
}
