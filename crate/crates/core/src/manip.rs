//! The thirteen manipulation modes and branch-stack construction.
//!
//! Modes 0-7 are the eight symmetries of the square, applied as
//! counter-clockwise quarter turns followed by an optional vertical mirror
//! (row reversal). Modes 8-12 zero a band of DCT coefficients.

use std::fmt;

use rayon::prelude::*;

use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::freq::{apply_mask_clipped, FrequencyMaskSpec};
use crate::image::{clip_unit, ImageGray};

/// A symmetry of the square: `quarter_turns` CCW rotations, then an optional
/// row reversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dihedral {
    pub quarter_turns: u8,
    pub mirror: bool,
}

impl Dihedral {
    pub const fn new(quarter_turns: u8, mirror: bool) -> Self {
        Self {
            quarter_turns: quarter_turns % 4,
            mirror,
        }
    }

    pub fn apply(self, image: &ImageGray) -> ImageGray {
        let mut out = rotate_ccw(image, self.quarter_turns);
        if self.mirror {
            out = flip_rows(&out);
        }
        out
    }

    pub fn invert(self, image: &ImageGray) -> ImageGray {
        let unflipped = if self.mirror { flip_rows(image) } else { image.clone() };
        rotate_ccw(&unflipped, (4 - self.quarter_turns) % 4)
    }
}

fn rotate_ccw(image: &ImageGray, quarter_turns: u8) -> ImageGray {
    let (h, w) = (image.height(), image.width());
    match quarter_turns % 4 {
        0 => image.clone(),
        1 => ImageGray::from_fn(w, h, |i, j| image.get(j, w - 1 - i)),
        2 => ImageGray::from_fn(h, w, |i, j| image.get(h - 1 - i, w - 1 - j)),
        _ => ImageGray::from_fn(w, h, |i, j| image.get(h - 1 - j, i)),
    }
}

fn flip_rows(image: &ImageGray) -> ImageGray {
    let h = image.height();
    ImageGray::from_fn(h, image.width(), |i, j| image.get(h - 1 - i, j))
}

/// What a mode does to its input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeKind {
    Dihedral(Dihedral),
    Frequency(FrequencyMaskSpec),
}

/// Manipulation mode id in `0..=12`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ManipulationMode(u8);

const DIHEDRAL_TABLE: [Dihedral; 8] = [
    Dihedral::new(0, false), // identity
    Dihedral::new(1, true),  // rotate 90, mirror
    Dihedral::new(0, true),  // mirror
    Dihedral::new(3, false), // rotate 270
    Dihedral::new(2, true),  // rotate 180, mirror
    Dihedral::new(1, false), // rotate 90
    Dihedral::new(2, false), // rotate 180
    Dihedral::new(3, true),  // rotate 270, mirror
];

impl ManipulationMode {
    pub const COUNT: u8 = 13;

    pub fn new(id: u8) -> Result<Self> {
        if id < Self::COUNT {
            Ok(Self(id))
        } else {
            Err(Error::UnknownMode(id))
        }
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn all() -> Vec<Self> {
        (0..Self::COUNT).map(Self).collect()
    }

    pub fn dihedral_modes() -> Vec<Self> {
        (0..8).map(Self).collect()
    }

    pub fn frequency_modes() -> Vec<Self> {
        (8..Self::COUNT).map(Self).collect()
    }

    pub fn kind(self) -> ModeKind {
        let spec = |inner: f64, outer: f64| {
            ModeKind::Frequency(FrequencyMaskSpec {
                inner_frac: inner,
                outer_frac: outer,
            })
        };
        match self.0 {
            0..=7 => ModeKind::Dihedral(DIHEDRAL_TABLE[self.0 as usize]),
            8 => spec(0.1, f64::INFINITY),
            9 => spec(0.3, f64::INFINITY),
            10 => spec(0.5, f64::INFINITY),
            11 => spec(0.4, 0.5),
            12 => spec(0.5, 0.9),
            _ => unreachable!("mode id validated on construction"),
        }
    }

    pub fn is_dihedral(self) -> bool {
        self.0 < 8
    }

    fn dihedral(self) -> Result<Dihedral> {
        match self.kind() {
            ModeKind::Dihedral(d) => Ok(d),
            ModeKind::Frequency(_) => Err(Error::WrongModeKind {
                mode: self.0,
                expected: "dihedral",
            }),
        }
    }

    fn frequency(self) -> Result<FrequencyMaskSpec> {
        match self.kind() {
            ModeKind::Frequency(s) => Ok(s),
            ModeKind::Dihedral(_) => Err(Error::WrongModeKind {
                mode: self.0,
                expected: "frequency",
            }),
        }
    }
}

impl fmt::Display for ManipulationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Parses ids such as `"0,1,2"` or `"0-7,10"`.
pub fn parse_mode_list(text: &str) -> Result<Vec<ManipulationMode>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || Error::Invalid(format!("bad mode list entry `{part}`"));
        if let Some((a, b)) = part.split_once('-') {
            let a: u8 = a.trim().parse().map_err(|_| bad())?;
            let b: u8 = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            for id in a..=b {
                out.push(ManipulationMode::new(id)?);
            }
        } else {
            out.push(ManipulationMode::new(part.parse().map_err(|_| bad())?)?);
        }
    }
    if out.is_empty() {
        return Err(Error::Invalid("empty mode list".into()));
    }
    Ok(out)
}

pub fn apply_dihedral(image: &ImageGray, mode: ManipulationMode) -> Result<ImageGray> {
    Ok(mode.dihedral()?.apply(image))
}

pub fn invert_dihedral(image: &ImageGray, mode: ManipulationMode) -> Result<ImageGray> {
    Ok(mode.dihedral()?.invert(image))
}

/// DCT band masking for modes 8-12, clipped to `[0, 1]`.
pub fn apply_frequency_mode(image: &ImageGray, mode: ManipulationMode) -> Result<ImageGray> {
    apply_mask_clipped(image, &mode.frequency()?)
}

/// Transforms a noisy image for one branch. Output is always in `[0, 1]`.
pub fn manipulate(noisy: &ImageGray, mode: ManipulationMode) -> Result<ImageGray> {
    match mode.kind() {
        ModeKind::Dihedral(d) => clip_unit(&d.apply(noisy)),
        ModeKind::Frequency(spec) => apply_mask_clipped(noisy, &spec),
    }
}

/// Brings a denoised branch back to the original pixel grid. Frequency
/// branches are already aligned and pass through unchanged.
pub fn realign(denoised: &ImageGray, mode: ManipulationMode) -> ImageGray {
    match mode.kind() {
        ModeKind::Dihedral(d) => d.invert(denoised),
        ModeKind::Frequency(_) => denoised.clone(),
    }
}

/// Realigned denoised branches, one per mode, in ascending mode order.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchStack {
    modes: Vec<ManipulationMode>,
    images: Vec<ImageGray>,
}

impl BranchStack {
    pub fn new(modes: Vec<ManipulationMode>, images: Vec<ImageGray>) -> Result<Self> {
        if modes.is_empty() || modes.len() != images.len() {
            return Err(Error::Invalid(format!(
                "stack needs matching non-empty modes ({}) and images ({})",
                modes.len(),
                images.len()
            )));
        }
        if modes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("stack modes must be strictly ascending".into()));
        }
        for img in &images[1..] {
            images[0].ensure_same_dims(img)?;
        }
        Ok(Self { modes, images })
    }

    pub fn n_branches(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[ManipulationMode] {
        &self.modes
    }

    pub fn images(&self) -> &[ImageGray] {
        &self.images
    }

    pub fn height(&self) -> usize {
        self.images[0].height()
    }

    pub fn width(&self) -> usize {
        self.images[0].width()
    }

    pub fn branch(&self, mode: ManipulationMode) -> Option<&ImageGray> {
        self.modes.iter().position(|&m| m == mode).map(|i| &self.images[i])
    }

    /// Same window cut from every branch.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        let images = self
            .images
            .iter()
            .map(|img| img.crop(row, col, height, width))
            .collect::<Result<_>>()?;
        Ok(Self {
            modes: self.modes.clone(),
            images,
        })
    }
}

/// Runs manipulate, denoise and realign for every mode.
///
/// Modes are processed in parallel when the denoiser allows it; the stack is
/// always assembled in ascending mode order.
pub fn build_branch_stack(
    noisy: &ImageGray,
    denoiser: &dyn Denoiser,
    modes: &[ManipulationMode],
) -> Result<BranchStack> {
    if modes.is_empty() {
        return Err(Error::Invalid("empty mode list".into()));
    }
    let mut sorted = modes.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Invalid("duplicate modes in branch list".into()));
    }
    let run = |&mode: &ManipulationMode| -> Result<ImageGray> {
        let input = manipulate(noisy, mode)?;
        let out = denoiser.denoise(&input).map_err(|e| Error::Branch {
            mode: mode.id(),
            source: Box::new(e),
        })?;
        Ok(realign(&out, mode))
    };
    let images: Vec<ImageGray> = if denoiser.parallel_safe() {
        sorted.par_iter().map(run).collect::<Result<_>>()?
    } else {
        sorted.iter().map(run).collect::<Result<_>>()?
    };
    BranchStack::new(sorted, images)
}

/// Per-pixel mean over branches, clipped.
pub fn simple_average(stack: &BranchStack) -> ImageGray {
    let n = stack.images.len() as f64;
    let first = &stack.images[0];
    let mut acc = vec![0.0; first.len()];
    for img in &stack.images {
        for (a, v) in acc.iter_mut().zip(img.data()) {
            *a += v;
        }
    }
    let avg = ImageGray::new(first.height(), first.width(), acc.into_iter().map(|a| a / n).collect())
        .expect("shape preserved");
    avg.map(|v| v.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::{FnDenoiser, IdentityDenoiser};
    use crate::image::{add_awgn, mse, NoiseLevel};

    fn m(id: u8) -> ManipulationMode {
        ManipulationMode::new(id).unwrap()
    }

    fn square() -> ImageGray {
        ImageGray::from_rows(&[[1.0, 2.0], [3.0, 4.0]])
    }

    #[test]
    fn canonical_2x2_vectors() {
        assert_eq!(apply_dihedral(&square(), m(0)).unwrap(), square());
        assert_eq!(
            apply_dihedral(&square(), m(5)).unwrap(),
            ImageGray::from_rows(&[[2.0, 4.0], [1.0, 3.0]])
        );
        assert_eq!(
            apply_dihedral(&square(), m(6)).unwrap(),
            ImageGray::from_rows(&[[4.0, 3.0], [2.0, 1.0]])
        );
    }

    #[test]
    fn inverses() {
        let probe = ImageGray::from_fn(3, 5, |r, c| (r * 5 + c) as f64);
        for mode in ManipulationMode::dihedral_modes() {
            let there = apply_dihedral(&probe, mode).unwrap();
            assert_eq!(invert_dihedral(&there, mode).unwrap(), probe, "mode {mode}");
        }
        let mirrored = apply_dihedral(&probe, m(2)).unwrap();
        assert_eq!(apply_dihedral(&mirrored, m(2)).unwrap(), probe);
        let rotated = apply_dihedral(&probe, m(5)).unwrap();
        assert_eq!(invert_dihedral(&rotated, m(5)).unwrap(), apply_dihedral(&rotated, m(3)).unwrap());
    }

    #[test]
    fn wrong_kind_rejected() {
        assert!(apply_dihedral(&square(), m(9)).is_err());
        assert!(invert_dihedral(&square(), m(12)).is_err());
        assert!(apply_frequency_mode(&square(), m(1)).is_err());
        assert!(ManipulationMode::new(13).is_err());
    }

    #[test]
    fn manipulate_contract() {
        let noisy = ImageGray::from_rows(&[[1.2, 0.3, 0.1], [-0.1, 0.5, 0.9]]);
        assert_eq!(manipulate(&noisy, m(0)).unwrap(), clip_unit(&noisy).unwrap());
        assert_eq!(
            manipulate(&noisy, m(3)).unwrap(),
            clip_unit(&apply_dihedral(&noisy, m(3)).unwrap()).unwrap()
        );
        let flat = ImageGray::filled(9, 7, 0.4);
        for id in 8..13 {
            let out = manipulate(&flat, m(id)).unwrap();
            for &v in out.data() {
                assert!((v - 0.4).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn realign_marked_pixel() {
        let mut marked = ImageGray::zeros(4, 6);
        marked.set(1, 4, 1.0);
        let back = realign(&manipulate(&marked, m(5)).unwrap(), m(5));
        assert_eq!(back, marked);
        assert_eq!(realign(&marked, m(10)), marked);
    }

    #[test]
    fn identity_pipeline_recovers_clip() {
        let noisy = add_awgn(&ImageGray::filled(6, 9, 0.9), NoiseLevel::new(40.0).unwrap(), 5);
        let clipped = clip_unit(&noisy).unwrap();
        for mode in ManipulationMode::dihedral_modes() {
            let out = realign(&IdentityDenoiser.denoise(&manipulate(&noisy, mode).unwrap()).unwrap(), mode);
            assert_eq!(out, clipped);
        }
    }

    #[test]
    fn stack_shapes_and_ordering() {
        let noisy = add_awgn(&ImageGray::filled(8, 12, 0.5), NoiseLevel::new(20.0).unwrap(), 1);
        let one = build_branch_stack(&noisy, &IdentityDenoiser, &[m(0)]).unwrap();
        assert_eq!(one.images(), &[clip_unit(&noisy).unwrap()]);

        let pointwise = FnDenoiser::new(|img: &ImageGray| Ok(img.map(|v| v * v)));
        let eight = build_branch_stack(&noisy, &pointwise, &ManipulationMode::dihedral_modes()).unwrap();
        for img in eight.images() {
            assert_eq!(img, &eight.images()[0]);
        }

        let reversed: Vec<_> = ManipulationMode::all().into_iter().rev().collect();
        let all = build_branch_stack(&noisy, &IdentityDenoiser, &reversed).unwrap();
        assert_eq!(all.n_branches(), 13);
        assert_eq!(all.modes(), ManipulationMode::all().as_slice());
        assert!(all.images().iter().all(|i| i.dims() == noisy.dims()));

        assert!(build_branch_stack(&noisy, &IdentityDenoiser, &[m(1), m(1)]).is_err());
        assert!(build_branch_stack(&noisy, &IdentityDenoiser, &[]).is_err());
    }

    #[test]
    fn denoiser_failure_names_branch() {
        let failing = FnDenoiser::new(|img: &ImageGray| {
            if img.height() == 3 {
                Ok(img.clone())
            } else {
                Err(Error::Invalid("boom".into()))
            }
        });
        let noisy = ImageGray::filled(3, 5, 0.2);
        match build_branch_stack(&noisy, &failing, &[m(0), m(5)]) {
            Err(Error::Branch { mode: 5, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn average_cases() {
        let a = ImageGray::filled(3, 3, 0.2);
        let b = ImageGray::filled(3, 3, 0.4);
        let same = BranchStack::new(vec![m(0), m(1)], vec![a.clone(), a.clone()]).unwrap();
        assert_eq!(simple_average(&same), a);
        let two = BranchStack::new(vec![m(0), m(1)], vec![a, b]).unwrap();
        for &v in simple_average(&two).data() {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn averaging_reduces_variance() {
        let clean = ImageGray::from_fn(32, 32, |r, c| 0.25 + 0.5 * ((r + c) as f64 / 62.0));
        let s = NoiseLevel::new(15.0).unwrap();
        let branches: Vec<_> = (0..8).map(|i| add_awgn(&clean, s, 77 + i)).collect();
        let mean_mse = branches.iter().map(|b| mse(&clean, b).unwrap()).sum::<f64>() / 8.0;
        let stack = BranchStack::new(ManipulationMode::dihedral_modes(), branches).unwrap();
        assert!(mse(&clean, &simple_average(&stack)).unwrap() < mean_mse);
    }

    #[test]
    fn mode_lists() {
        let l = parse_mode_list("0-2, 10").unwrap();
        assert_eq!(l.iter().map(|m| m.id()).collect::<Vec<_>>(), vec![0, 1, 2, 10]);
        assert!(parse_mode_list("3-1").is_err());
        assert!(parse_mode_list("14").is_err());
        assert!(parse_mode_list("").is_err());
    }
}
