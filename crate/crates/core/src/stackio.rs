//! Cached branch stacks on disk.
//!
//! Layout: magic `DFSTACK1`, then `N`, `H`, `W` as `u32` little-endian, then
//! `N` mode id bytes, then `N * H * W` pixels as `f64` little-endian, branch
//! by branch in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageGray;
use crate::manip::{BranchStack, ManipulationMode};
use crate::pgm::MAX_SIDE;

pub const MAGIC: &[u8; 8] = b"DFSTACK1";

pub fn encode(stack: &BranchStack) -> Vec<u8> {
    let (n, h, w) = (stack.n_branches(), stack.height(), stack.width());
    let mut out = Vec::with_capacity(20 + n + 8 * n * h * w);
    out.extend_from_slice(MAGIC);
    for v in [n, h, w] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend(stack.modes().iter().map(|m| m.id()));
    for img in stack.images() {
        for v in img.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

pub fn decode(bytes: &[u8]) -> Result<BranchStack> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::Decode("not a stack file".into()));
    }
    let n = read_u32(bytes, 8) as usize;
    let h = read_u32(bytes, 12) as usize;
    let w = read_u32(bytes, 16) as usize;
    if n == 0 || n > ManipulationMode::COUNT as usize {
        return Err(Error::Decode(format!("stack has {n} branches")));
    }
    if h == 0 || w == 0 || h > MAX_SIDE || w > MAX_SIDE {
        return Err(Error::Decode(format!("stack size {h}x{w} out of range")));
    }
    let header = 20 + n;
    let expected = n
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(header))
        .ok_or_else(|| Error::Decode("stack size overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::Decode(format!(
            "stack file is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let modes = bytes[20..header]
        .iter()
        .map(|&id| ManipulationMode::new(id).map_err(|e| Error::Decode(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut images = Vec::with_capacity(n);
    for chunk in bytes[header..].chunks_exact(8 * h * w) {
        let data: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("eight bytes")))
            .collect();
        let img = ImageGray::new(h, w, data)?;
        img.check_finite().map_err(|e| Error::Decode(e.to_string()))?;
        images.push(img);
    }
    BranchStack::new(modes, images).map_err(|e| Error::Decode(e.to_string()))
}

pub fn write(path: &Path, stack: &BranchStack) -> Result<()> {
    Ok(fs::write(path, encode(stack))?)
}

pub fn read(path: &Path) -> Result<BranchStack> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> BranchStack {
        let modes = vec![ManipulationMode::new(0).unwrap(), ManipulationMode::new(9).unwrap()];
        let images = vec![
            ImageGray::from_fn(3, 4, |r, c| (r * 4 + c) as f64 / 11.0),
            ImageGray::from_fn(3, 4, |r, c| 1.0 - (r + c) as f64 / 7.0),
        ];
        BranchStack::new(modes, images).unwrap()
    }

    #[test]
    fn roundtrip() {
        let s = sample();
        let bytes = encode(&s);
        assert_eq!(bytes.len(), 20 + 2 + 2 * 12 * 8);
        assert_eq!(decode(&bytes).unwrap(), s);
    }

    #[test]
    fn rejects_damage() {
        let bytes = encode(&sample());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = bytes.clone();
        bad[20] = 13;
        assert!(decode(&bad).is_err());
        let mut bad = bytes.clone();
        bad[21] = 0; // modes no longer ascending
        assert!(decode(&bad).is_err());
        let mut bad = bytes;
        let nan = f64::NAN.to_le_bytes();
        bad[22..30].copy_from_slice(&nan);
        assert!(decode(&bad).is_err());
    }

    proptest! {
        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = decode(&bytes);
        }
    }
}
