//! Binary PGM (`P5`, maxval 255) codec with the linear mapping `v / 255`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageGray;

/// Largest accepted side, to bound allocations on hostile headers.
pub const MAX_SIDE: usize = 1 << 14;

struct Header<'a> {
    rest: &'a [u8],
}

impl<'a> Header<'a> {
    fn skip_space_and_comments(&mut self) {
        loop {
            match self.rest.first() {
                Some(b) if b.is_ascii_whitespace() => self.rest = &self.rest[1..],
                Some(b'#') => {
                    let end = self
                        .rest
                        .iter()
                        .position(|&b| b == b'\n')
                        .unwrap_or(self.rest.len());
                    self.rest = &self.rest[end..];
                }
                _ => return,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let len = self.rest.iter().take_while(|b| b.is_ascii_digit()).count();
        if len == 0 {
            return Err(Error::Decode(format!("PGM: expected {what}")));
        }
        if len > 9 {
            return Err(Error::Decode(format!("PGM: {what} too large")));
        }
        let text = std::str::from_utf8(&self.rest[..len]).expect("ascii digits");
        self.rest = &self.rest[len..];
        Ok(text.parse().expect("bounded digit string"))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ImageGray> {
    let rest = bytes
        .strip_prefix(b"P5")
        .ok_or_else(|| Error::Decode("PGM: missing P5 magic".into()))?;
    let mut h = Header { rest };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Decode(format!("PGM: maxval {maxval} unsupported (need 255)")));
    }
    if width == 0 || height == 0 || width > MAX_SIDE || height > MAX_SIDE {
        return Err(Error::Decode(format!("PGM: bad size {width}x{height}")));
    }
    match h.rest.first() {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(Error::Decode("PGM: missing separator before raster".into())),
    }
    let raster = &h.rest[1..];
    let n = width * height;
    if raster.len() < n {
        return Err(Error::Decode(format!(
            "PGM: raster has {} bytes, need {n}",
            raster.len()
        )));
    }
    let data = raster[..n].iter().map(|&b| f64::from(b) / 255.0).collect();
    ImageGray::new(height, width, data)
}

/// Quantizes to 8 bits. Values outside `[0, 1]` saturate.
pub fn encode(image: &ImageGray) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|&v| quantize(v)));
    out
}

pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn read(path: impl AsRef<Path>) -> Result<ImageGray> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode(&bytes).map_err(|e| Error::Decode(format!("{}: {e}", path.display())))
}

pub fn write(path: impl AsRef<Path>, image: &ImageGray) -> Result<()> {
    fs::write(path, encode(image))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_with_comments() {
        let mut bytes = b"P5\n# made by hand\n2 1\n# max\n255\n".to_vec();
        bytes.extend([0u8, 255]);
        let img = decode(&bytes).unwrap();
        assert_eq!((img.height(), img.width()), (1, 2));
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(decode(b"P2\n1 1\n255\n0").is_err());
        assert!(decode(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(decode(b"P5\n0 1\n255\n").is_err());
        assert!(decode(b"P5 1 1 255").is_err());
        assert!(decode(b"P5\n99999999999 1\n255\n").is_err());
    }

    proptest! {
        #[test]
        fn quantized_roundtrip(w in 1usize..8, h in 1usize..8, seed in any::<u64>()) {
            let mut s = seed;
            let img = ImageGray::from_fn(h, w, |_, _| {
                s = crate::seed::splitmix64(s);
                f64::from((s % 256) as u8) / 255.0
            });
            let back = decode(&encode(&img)).unwrap();
            prop_assert_eq!(back, img);
        }
    }
}
