//! Orthonormal 2-D DCT, quarter-annulus coefficient masks and radially
//! averaged power spectra.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::{clip_unit, ImageGray};

/// DCT-II coefficients of an image, row-major, same shape as the source.
#[derive(Debug, Clone, PartialEq)]
pub struct DctCoeffs {
    pub height: usize,
    pub width: usize,
    pub coeffs: Vec<f64>,
}

impl DctCoeffs {
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.coeffs[u * self.width + v]
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }
}

/// Orthonormal DCT-II basis: `basis[k * n + i] = a(k) cos(pi (2i + 1) k / 2n)`.
fn dct_basis(n: usize) -> Vec<f64> {
    let mut basis = vec![0.0; n * n];
    let nf = n as f64;
    for k in 0..n {
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for i in 0..n {
            basis[k * n + i] = scale * (PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos();
        }
    }
    basis
}

/// Applies `basis` (or its transpose) along rows and then columns.
fn separable(data: &[f64], height: usize, width: usize, inverse: bool) -> Vec<f64> {
    let bw = dct_basis(width);
    let bh = dct_basis(height);
    // entry (k, i) of the 1-D transform, forward or transposed
    let at = |b: &[f64], n: usize, k: usize, i: usize| if inverse { b[i * n + k] } else { b[k * n + i] };

    let mut rows = vec![0.0; height * width];
    for r in 0..height {
        let src = &data[r * width..(r + 1) * width];
        for k in 0..width {
            rows[r * width + k] = (0..width).map(|i| at(&bw, width, k, i) * src[i]).sum();
        }
    }
    let mut out = vec![0.0; height * width];
    for c in 0..width {
        for k in 0..height {
            out[k * width + c] = (0..height)
                .map(|i| at(&bh, height, k, i) * rows[i * width + c])
                .sum();
        }
    }
    out
}

pub fn dct2(image: &ImageGray) -> DctCoeffs {
    DctCoeffs {
        height: image.height(),
        width: image.width(),
        coeffs: separable(image.data(), image.height(), image.width(), false),
    }
}

/// Exact inverse of [`dct2`]; the result is not clipped.
pub fn idct2(coeffs: &DctCoeffs) -> ImageGray {
    let data = separable(&coeffs.coeffs, coeffs.height, coeffs.width, true);
    ImageGray::new(coeffs.height, coeffs.width, data).expect("shape preserved")
}

/// Band `[inner, outer) * radius_max` of coefficient index radii to zero out.
///
/// `outer_frac = f64::INFINITY` encodes "everything past `inner_frac`".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyMaskSpec {
    pub inner_frac: f64,
    pub outer_frac: f64,
}

impl FrequencyMaskSpec {
    pub fn new(inner_frac: f64, outer_frac: f64) -> Result<Self> {
        if !(inner_frac >= 0.0 && inner_frac < outer_frac) || outer_frac.is_nan() {
            return Err(Error::Invalid(format!(
                "mask band needs 0 <= inner < outer, got [{inner_frac}, {outer_frac})"
            )));
        }
        Ok(Self {
            inner_frac,
            outer_frac,
        })
    }

    /// Masks every index at or beyond `frac * radius_max`.
    pub fn after(frac: f64) -> Result<Self> {
        Self::new(frac, f64::INFINITY)
    }

    pub fn between(inner: f64, outer: f64) -> Result<Self> {
        Self::new(inner, outer)
    }
}

/// Farthest coefficient-index distance from the DC corner.
pub fn radius_max(height: usize, width: usize) -> f64 {
    let h = height.saturating_sub(1) as f64;
    let w = width.saturating_sub(1) as f64;
    (h * h + w * w).sqrt()
}

/// Keep-mask over coefficient indices: `true` keeps, `false` zeroes.
///
/// Index `(u, v)` is masked when `inner * r_max <= sqrt(u^2 + v^2) < outer * r_max`.
/// The DC index is only masked by bands that start at zero, which matters
/// for 1x1 images where `r_max = 0`.
pub fn radial_mask(height: usize, width: usize, spec: &FrequencyMaskSpec) -> Result<Vec<bool>> {
    let spec = FrequencyMaskSpec::new(spec.inner_frac, spec.outer_frac)?;
    let rmax = radius_max(height, width);
    let lo = spec.inner_frac * rmax;
    let hi = spec.outer_frac * rmax;
    let mut keep = Vec::with_capacity(height * width);
    for u in 0..height {
        for v in 0..width {
            let r = ((u * u + v * v) as f64).sqrt();
            let in_band = r >= lo && (r < hi || spec.outer_frac.is_infinite());
            let dc_protected = r == 0.0 && spec.inner_frac > 0.0;
            keep.push(!(in_band && !dc_protected));
        }
    }
    Ok(keep)
}

/// `idct2(mask * dct2(image))` without clipping.
pub fn mask_image(image: &ImageGray, spec: &FrequencyMaskSpec) -> Result<ImageGray> {
    let keep = radial_mask(image.height(), image.width(), spec)?;
    let mut coeffs = dct2(image);
    for (c, k) in coeffs.coeffs.iter_mut().zip(keep) {
        if !k {
            *c = 0.0;
        }
    }
    Ok(idct2(&coeffs))
}

/// Frequency-mask manipulation followed by clipping to `[0, 1]`.
pub fn apply_mask_clipped(image: &ImageGray, spec: &FrequencyMaskSpec) -> Result<ImageGray> {
    clip_unit(&mask_image(image, spec)?)
}

/// Radially averaged power spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdCurve {
    /// Bin centers in cycles per pixel, spanning `[0, 0.5]`.
    pub radii: Vec<f64>,
    pub power_db: Vec<f64>,
}

pub const PSD_FLOOR: f64 = 1e-12;

impl PsdCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("radius,power_db\n");
        for (r, p) in self.radii.iter().zip(&self.power_db) {
            let _ = writeln!(s, "{r:.6},{p:.6}");
        }
        s
    }
}

fn centered_freq(index: usize, n: usize) -> f64 {
    // unshifted FFT index -> signed frequency in cycles per pixel
    let k = if index < n.div_ceil(2) { index as isize } else { index as isize - n as isize };
    k as f64 / n as f64
}

/// Fourier power `|F|^2 / (H W)` averaged over images and radial bins.
///
/// Bins split `[0, 0.5]` evenly; corner frequencies beyond 0.5 are ignored.
/// An empty bin reports the `PSD_FLOOR` level.
pub fn psd(images: &[ImageGray], n_bins: usize) -> Result<PsdCurve> {
    let first = images
        .first()
        .ok_or_else(|| Error::Invalid("PSD needs at least one image".into()))?;
    if n_bins == 0 {
        return Err(Error::Invalid("PSD needs at least one bin".into()));
    }
    let (h, w) = (first.height(), first.width());
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);
    let bin_width = 0.5 / n_bins as f64;

    let mut bin_of = Vec::with_capacity(h * w);
    let mut counts = vec![0usize; n_bins];
    for u in 0..h {
        for v in 0..w {
            let r = centered_freq(u, h).hypot(centered_freq(v, w));
            let b = (r / bin_width).floor() as usize;
            let b = if r <= 0.5 { Some(b.min(n_bins - 1)) } else { None };
            if let Some(b) = b {
                counts[b] += 1;
            }
            bin_of.push(b);
        }
    }

    let mut sums = vec![0.0; n_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); h * w];
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for img in images {
        first.ensure_same_dims(img)?;
        for (b, &x) in buf.iter_mut().zip(img.data()) {
            *b = Complex::new(x, 0.0);
        }
        for row in buf.chunks_mut(w) {
            row_fft.process(row);
        }
        for c in 0..w {
            for r in 0..h {
                col[r] = buf[r * w + c];
            }
            col_fft.process(&mut col);
            for r in 0..h {
                buf[r * w + c] = col[r];
            }
        }
        let norm = (h * w) as f64;
        for (z, b) in buf.iter().zip(&bin_of) {
            if let Some(b) = *b {
                sums[b] += z.norm_sqr() / norm;
            }
        }
    }

    let n_img = images.len() as f64;
    let radii = (0..n_bins).map(|i| (i as f64 + 0.5) * bin_width).collect();
    let power_db = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| {
            let mean = if c == 0 { 0.0 } else { s / (c as f64 * n_img) };
            10.0 * (mean + PSD_FLOOR).log10()
        })
        .collect();
    Ok(PsdCurve { radii, power_db })
}
