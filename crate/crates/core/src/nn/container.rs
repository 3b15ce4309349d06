//! Flat binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "DFPARAM1"
//! count      u32      number of layers
//! manifest   count x { kind: u8, ndims: u8, dims: ndims x u32 }
//! values     f64 LE, layer by layer in manifest order
//! ```
//!
//! Kinds and the value order inside each layer:
//!
//! | kind | name        | dims              | values                                   |
//! |------|-------------|-------------------|------------------------------------------|
//! | 1    | conv2d      | out, in, k, k     | weight (out*in*k*k), bias (out)          |
//! | 2    | batchnorm2d | channels          | gamma, beta, running mean, running var   |
//! | 3    | dense       | out, in           | weight (out*in), bias (out)              |

use std::fs;
use std::path::Path;

use super::layers::{BatchNorm2d, Conv2d, Dense, Layer, Sequential};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DFPARAM1";

/// Caps any single dimension so hostile manifests cannot request huge buffers.
const MAX_DIM: u32 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d = 1,
    BatchNorm2d = 2,
    Dense = 3,
}

impl LayerKind {
    fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Self::Conv2d),
            2 => Ok(Self::BatchNorm2d),
            3 => Ok(Self::Dense),
            _ => Err(Error::Decode(format!("unknown layer kind {code}"))),
        }
    }

    fn value_count(self, dims: &[u32]) -> Option<usize> {
        let d: Vec<usize> = dims.iter().map(|&x| x as usize).collect();
        match (self, d.as_slice()) {
            (Self::Conv2d, &[o, i, k1, k2]) if k1 == k2 && k1 % 2 == 1 => {
                o.checked_mul(i)?.checked_mul(k1 * k2)?.checked_add(o)
            }
            (Self::BatchNorm2d, &[c]) => c.checked_mul(4),
            (Self::Dense, &[o, i]) => o.checked_mul(i)?.checked_add(o),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerBlob {
    pub kind: LayerKind,
    pub dims: Vec<u32>,
    pub values: Vec<f64>,
}

pub fn encode(blobs: &[LayerBlob]) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend((blobs.len() as u32).to_le_bytes());
    for b in blobs {
        out.push(b.kind as u8);
        out.push(b.dims.len() as u8);
        for d in &b.dims {
            out.extend(d.to_le_bytes());
        }
    }
    for b in blobs {
        for v in &b.values {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() < n {
            return Err(Error::Decode("parameter container truncated".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<LayerBlob>> {
    let mut r = Reader { bytes };
    if r.take(8)? != MAGIC {
        return Err(Error::Decode("parameter container: bad magic".into()));
    }
    let count = r.u32()? as usize;
    if count > r.bytes.len() / 2 {
        return Err(Error::Decode("parameter container: layer count exceeds data".into()));
    }
    let mut manifest = Vec::with_capacity(count);
    let mut total = 0usize;
    for _ in 0..count {
        let kind = LayerKind::from_code(r.u8()?)?;
        let ndims = r.u8()? as usize;
        let dims = (0..ndims).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if dims.iter().any(|&d| d == 0 || d > MAX_DIM) {
            return Err(Error::Decode(format!("parameter container: bad dims {dims:?}")));
        }
        let n = kind
            .value_count(&dims)
            .ok_or_else(|| Error::Decode(format!("parameter container: {kind:?} with dims {dims:?}")))?;
        total = total
            .checked_add(n)
            .ok_or_else(|| Error::Decode("parameter container: size overflow".into()))?;
        manifest.push((kind, dims, n));
    }
    if total.checked_mul(8) != Some(r.bytes.len()) {
        return Err(Error::Decode(format!(
            "parameter container: manifest needs {total} values, found {} bytes",
            r.bytes.len()
        )));
    }
    let mut blobs = Vec::with_capacity(count);
    for (kind, dims, n) in manifest {
        let raw = r.take(n * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Decode(format!("parameter container: non-finite value in {kind:?} layer")));
        }
        blobs.push(LayerBlob { kind, dims, values });
    }
    Ok(blobs)
}

/// Models that round-trip through the container.
pub trait Persist {
    fn export(&self) -> Vec<LayerBlob>;
    fn import(&mut self, blobs: &[LayerBlob]) -> Result<()>;

    fn to_bytes(&self) -> Vec<u8> {
        encode(&self.export())
    }

    fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

pub fn load_blobs(path: &Path) -> Result<Vec<LayerBlob>> {
    let bytes = fs::read(path)?;
    decode(&bytes).map_err(|e| Error::Decode(format!("{}: {e}", path.display())))
}

fn mismatch(what: &str, blob: &LayerBlob) -> Error {
    Error::Decode(format!("expected {what}, found {:?} {:?}", blob.kind, blob.dims))
}

pub fn conv_blob(c: &Conv2d) -> LayerBlob {
    let mut values = c.weight.value.clone();
    values.extend(&c.bias.value);
    LayerBlob {
        kind: LayerKind::Conv2d,
        dims: [c.out_channels, c.in_channels, c.kernel, c.kernel].map(|d| d as u32).to_vec(),
        values,
    }
}

pub fn load_conv(c: &mut Conv2d, blob: &LayerBlob) -> Result<()> {
    let dims = [c.out_channels, c.in_channels, c.kernel, c.kernel].map(|d| d as u32);
    if blob.kind != LayerKind::Conv2d || blob.dims != dims {
        return Err(mismatch(&format!("conv2d {dims:?}"), blob));
    }
    let nw = c.weight.len();
    c.weight.value.copy_from_slice(&blob.values[..nw]);
    c.bias.value.copy_from_slice(&blob.values[nw..]);
    Ok(())
}

pub fn bn_blob(bn: &BatchNorm2d) -> LayerBlob {
    let mut values = bn.gamma.value.clone();
    values.extend(&bn.beta.value);
    values.extend(&bn.running_mean);
    values.extend(&bn.running_var);
    LayerBlob {
        kind: LayerKind::BatchNorm2d,
        dims: vec![bn.channels as u32],
        values,
    }
}

pub fn load_bn(bn: &mut BatchNorm2d, blob: &LayerBlob) -> Result<()> {
    if blob.kind != LayerKind::BatchNorm2d || blob.dims != [bn.channels as u32] {
        return Err(mismatch(&format!("batchnorm2d [{}]", bn.channels), blob));
    }
    let c = bn.channels;
    bn.gamma.value.copy_from_slice(&blob.values[..c]);
    bn.beta.value.copy_from_slice(&blob.values[c..2 * c]);
    bn.running_mean.copy_from_slice(&blob.values[2 * c..3 * c]);
    bn.running_var.copy_from_slice(&blob.values[3 * c..]);
    Ok(())
}

pub fn dense_blob(d: &Dense) -> LayerBlob {
    let mut values = d.weight.value.clone();
    values.extend(&d.bias.value);
    LayerBlob {
        kind: LayerKind::Dense,
        dims: vec![d.out_features as u32, d.in_features as u32],
        values,
    }
}

pub fn load_dense(d: &mut Dense, blob: &LayerBlob) -> Result<()> {
    if blob.kind != LayerKind::Dense || blob.dims != [d.out_features as u32, d.in_features as u32] {
        return Err(mismatch(&format!("dense [{}, {}]", d.out_features, d.in_features), blob));
    }
    let nw = d.weight.len();
    d.weight.value.copy_from_slice(&blob.values[..nw]);
    d.bias.value.copy_from_slice(&blob.values[nw..]);
    Ok(())
}

impl Persist for Sequential {
    fn export(&self) -> Vec<LayerBlob> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Conv(c) => Some(conv_blob(c)),
                Layer::BatchNorm(bn) => Some(bn_blob(bn)),
                Layer::Relu(_) => None,
            })
            .collect()
    }

    fn import(&mut self, blobs: &[LayerBlob]) -> Result<()> {
        let mut it = blobs.iter();
        for layer in &mut self.layers {
            let mut next = || it.next().ok_or_else(|| Error::Decode("too few layers in container".into()));
            match layer {
                Layer::Conv(c) => load_conv(c, next()?)?,
                Layer::BatchNorm(bn) => load_bn(bn, next()?)?,
                Layer::Relu(_) => {}
            }
        }
        if it.next().is_some() {
            return Err(Error::Decode("too many layers in container".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;

    fn sample() -> Sequential {
        let mut rng = seed::rng(5);
        let mut s = Sequential::new();
        s.push(Layer::Conv(Conv2d::new("c0", 2, 3, 3, &mut rng)))
            .push(Layer::BatchNorm(BatchNorm2d::new("bn", 3)))
            .push(Layer::Relu(Default::default()))
            .push(Layer::Conv(Conv2d::new("c1", 3, 1, 1, &mut rng)));
        s
    }

    #[test]
    fn roundtrip_sequential() {
        let mut a = sample();
        if let Layer::BatchNorm(bn) = &mut a.layers[1] {
            bn.running_mean = vec![0.1, 0.2, 0.3];
        }
        let bytes = a.to_bytes();
        let mut b = Sequential::new();
        b.push(Layer::Conv(Conv2d::zeroed("c0", 2, 3, 3)))
            .push(Layer::BatchNorm(BatchNorm2d::new("bn", 3)))
            .push(Layer::Relu(Default::default()))
            .push(Layer::Conv(Conv2d::zeroed("c1", 3, 1, 1)));
        b.import(&decode(&bytes).unwrap()).unwrap();
        assert_eq!(b.to_bytes(), bytes);
    }

    #[test]
    fn layout_is_documented_one() {
        let blob = LayerBlob { kind: LayerKind::Dense, dims: vec![1, 2], values: vec![1.0, 2.0, 3.0] };
        let bytes = encode(&[blob]);
        assert_eq!(&bytes[..8], b"DFPARAM1");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(bytes[12], 3);
        assert_eq!(bytes[13], 2);
        assert_eq!(&bytes[14..18], &1u32.to_le_bytes());
        assert_eq!(&bytes[18..22], &2u32.to_le_bytes());
        assert_eq!(&bytes[22..30], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 22 + 24);
    }

    #[test]
    fn rejects_mismatched_import() {
        let blobs = sample().export();
        let mut wrong = Sequential::new();
        wrong.push(Layer::Conv(Conv2d::zeroed("c0", 1, 3, 3)));
        assert!(wrong.import(&blobs).is_err());
    }

    #[test]
    fn rejects_bad_containers() {
        assert!(decode(b"").is_err());
        assert!(decode(b"DFPARAM1").is_err());
        let mut bytes = sample().to_bytes();
        bytes.pop();
        assert!(decode(&bytes).is_err());
        let mut even_conv = encode(&[]);
        even_conv[8] = 1;
        even_conv.extend([1u8, 4]);
        for d in [1u32, 1, 2, 2] {
            even_conv.extend(d.to_le_bytes());
        }
        even_conv.extend([0u8; 5 * 8]);
        assert!(decode(&even_conv).is_err());
    }

    #[test]
    fn rejects_non_finite_values() {
        let mut bytes = sample().to_bytes();
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&f64::INFINITY.to_le_bytes());
        assert!(decode(&bytes).is_err());
        bytes[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let mut with_magic = MAGIC.to_vec();
            with_magic.extend(&bytes);
            let _ = decode(&bytes);
            let _ = decode(&with_magic);
        }
    }
}
