//! Bundled synthetic test images: gradients, checkers, gratings, shapes and
//! smoothed noise textures, all quantized to 8 bits so they survive a PGM
//! round trip unchanged.
//!
//! The repository ships the same images under `data/toy`; a test keeps the
//! two in sync.

use rand::Rng;

use crate::image::ImageGray;
use crate::seed;

pub const SIDE: usize = 64;

/// Pattern families, in dataset order.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Pattern {
    Gradient { angle_deg: f64 },
    Radial,
    Checker { cell: usize },
    Grating { period: f64, angle_deg: f64 },
    Disk { radius: f64 },
    Rings { period: f64 },
    Texture { radius: usize, seed: u64 },
}

const PATTERNS: [(&str, Pattern); 24] = [
    ("gradient_h", Pattern::Gradient { angle_deg: 0.0 }),
    ("gradient_v", Pattern::Gradient { angle_deg: 90.0 }),
    ("gradient_d", Pattern::Gradient { angle_deg: 35.0 }),
    ("radial", Pattern::Radial),
    ("checker_4", Pattern::Checker { cell: 4 }),
    ("checker_8", Pattern::Checker { cell: 8 }),
    ("checker_16", Pattern::Checker { cell: 16 }),
    ("grating_a", Pattern::Grating { period: 6.0, angle_deg: 0.0 }),
    ("grating_b", Pattern::Grating { period: 9.0, angle_deg: 60.0 }),
    ("grating_c", Pattern::Grating { period: 14.0, angle_deg: 120.0 }),
    ("grating_d", Pattern::Grating { period: 4.5, angle_deg: 20.0 }),
    ("disk_small", Pattern::Disk { radius: 12.0 }),
    ("disk_large", Pattern::Disk { radius: 24.0 }),
    ("rings_a", Pattern::Rings { period: 7.0 }),
    ("rings_b", Pattern::Rings { period: 13.0 }),
    ("texture_r1_a", Pattern::Texture { radius: 1, seed: 101 }),
    ("texture_r1_b", Pattern::Texture { radius: 1, seed: 102 }),
    ("texture_r2_a", Pattern::Texture { radius: 2, seed: 201 }),
    ("texture_r2_b", Pattern::Texture { radius: 2, seed: 202 }),
    ("texture_r3_a", Pattern::Texture { radius: 3, seed: 301 }),
    ("texture_r3_b", Pattern::Texture { radius: 3, seed: 302 }),
    ("texture_r5_a", Pattern::Texture { radius: 5, seed: 501 }),
    ("texture_r5_b", Pattern::Texture { radius: 5, seed: 502 }),
    ("texture_r8", Pattern::Texture { radius: 8, seed: 801 }),
];

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Box-filtered uniform noise, contrast-stretched to `[0.1, 0.9]`.
fn texture(radius: usize, texture_seed: u64) -> ImageGray {
    let mut rng = seed::rng(seed::derive(texture_seed, "toy-texture"));
    let raw: Vec<f64> = (0..SIDE * SIDE).map(|_| rng.random::<f64>()).collect();
    let r = radius as isize;
    let n = SIDE as isize;
    let smooth = ImageGray::from_fn(SIDE, SIDE, |y, x| {
        let (mut s, mut count) = (0.0, 0.0);
        for dy in -r..=r {
            for dx in -r..=r {
                // wrap around so borders are as textured as the middle
                let yy = (y as isize + dy).rem_euclid(n) as usize;
                let xx = (x as isize + dx).rem_euclid(n) as usize;
                s += raw[yy * SIDE + xx];
                count += 1.0;
            }
        }
        s / count
    });
    let lo = smooth.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = smooth.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    smooth.map(|v| 0.1 + 0.8 * (v - lo) / span)
}

fn render(pattern: Pattern) -> ImageGray {
    let c = (SIDE as f64 - 1.0) / 2.0;
    let img = match pattern {
        Pattern::Gradient { angle_deg } => {
            let (s, co) = angle_deg.to_radians().sin_cos();
            let span = (SIDE as f64 - 1.0) * (s.abs() + co.abs());
            ImageGray::from_fn(SIDE, SIDE, |y, x| {
                let t = ((x as f64 - c) * co + (y as f64 - c) * s) / span + 0.5;
                0.1 + 0.8 * t
            })
        }
        Pattern::Radial => ImageGray::from_fn(SIDE, SIDE, |y, x| {
            let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
            0.9 - 0.8 * (d / (c * 2f64.sqrt()))
        }),
        Pattern::Checker { cell } => ImageGray::from_fn(SIDE, SIDE, |y, x| {
            if (y / cell + x / cell) % 2 == 0 {
                0.2
            } else {
                0.8
            }
        }),
        Pattern::Grating { period, angle_deg } => {
            let (s, co) = angle_deg.to_radians().sin_cos();
            ImageGray::from_fn(SIDE, SIDE, |y, x| {
                let t = x as f64 * co + y as f64 * s;
                0.5 + 0.35 * (std::f64::consts::TAU * t / period).sin()
            })
        }
        Pattern::Disk { radius } => ImageGray::from_fn(SIDE, SIDE, |y, x| {
            let d = ((x as f64 - c).powi(2) + (y as f64 - c * 0.8).powi(2)).sqrt();
            if d <= radius {
                0.75
            } else {
                0.25 + 0.1 * (x as f64 / SIDE as f64)
            }
        }),
        Pattern::Rings { period } => ImageGray::from_fn(SIDE, SIDE, |y, x| {
            let d = ((x as f64 - c * 0.7).powi(2) + (y as f64 - c).powi(2)).sqrt();
            0.5 + 0.3 * (std::f64::consts::TAU * d / period).cos()
        }),
        Pattern::Texture { radius, seed } => texture(radius, seed),
    };
    img.map(quantize)
}

/// `(name, image)` pairs, always in the same order.
pub fn dataset() -> Vec<(&'static str, ImageGray)> {
    PATTERNS.iter().map(|&(name, p)| (name, render(p))).collect()
}

pub fn images() -> Vec<ImageGray> {
    dataset().into_iter().map(|(_, img)| img).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn at_least_twenty_distinct_images() {
        let set = dataset();
        assert!(set.len() >= 20);
        for (i, (_, a)) in set.iter().enumerate() {
            assert_eq!((a.height(), a.width()), (SIDE, SIDE));
            assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
            for (_, b) in &set[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn survives_pgm_roundtrip() {
        for (_, img) in dataset() {
            assert_eq!(crate::pgm::decode(&crate::pgm::encode(&img)).unwrap(), img);
        }
    }
}
