//! Manipulation ensembles and dual-attention fusion for grayscale denoising.
//!
//! A noisy image is transformed by thirteen manipulation modes (the eight
//! symmetries of the square and five DCT band masks), each version is
//! denoised, realigned to the original grid, and the resulting branch stack
//! is fused either by a plain average or by a trained attention model.

pub mod auxloss;
pub mod denoise;
pub mod error;
pub mod freq;
pub mod fusion;
pub mod image;
pub mod manip;
pub mod nn;
pub mod pgm;
pub mod seed;
pub mod stackio;
pub mod toy;

pub use error::{Error, Result};
pub use image::{ImageGray, NoiseLevel, Psnr};
pub use manip::{BranchStack, ManipulationMode};
