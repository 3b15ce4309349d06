use crate::error::{Error, Result};
use crate::image::ImageGray;
use crate::manip::BranchStack;

/// Dense `B x C x H x W` activation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::Shape {
                context: "tensor",
                expected: vec![n],
                actual: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    /// `B x 1 x H x W` batch from equally sized images.
    pub fn from_images(images: &[&ImageGray]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::Invalid("empty image batch".into()))?;
        let mut data = Vec::with_capacity(images.len() * first.len());
        for img in images {
            first.ensure_same_dims(img)?;
            data.extend_from_slice(img.data());
        }
        Self::from_vec([images.len(), 1, first.height(), first.width()], data)
    }

    /// `B x N x H x W` batch with one channel per branch.
    pub fn from_stacks(stacks: &[&BranchStack]) -> Result<Self> {
        let first = stacks
            .first()
            .ok_or_else(|| Error::Invalid("empty stack batch".into()))?;
        let (n, h, w) = (first.n_branches(), first.height(), first.width());
        let mut data = Vec::with_capacity(stacks.len() * n * h * w);
        for s in stacks {
            if s.n_branches() != n || s.height() != h || s.width() != w {
                return Err(Error::Shape {
                    context: "stack batch",
                    expected: vec![n, h, w],
                    actual: vec![s.n_branches(), s.height(), s.width()],
                });
            }
            for img in s.images() {
                data.extend_from_slice(img.data());
            }
        }
        Self::from_vec([stacks.len(), n, h, w], data)
    }

    /// Channel `c` of every batch item as an image.
    pub fn to_images(&self, channel: usize) -> Vec<ImageGray> {
        (0..self.batch())
            .map(|b| {
                ImageGray::new(self.height(), self.width(), self.plane(b, channel).to_vec())
                    .expect("plane shape")
            })
            .collect()
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn plane(&self, b: usize, c: usize) -> &[f64] {
        let p = self.plane_len();
        let start = (b * self.shape[1] + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let p = self.plane_len();
        let start = (b * self.shape[1] + c) * p;
        &mut self.data[start..start + p]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn expect_shape(&self, context: &'static str, shape: [usize; 4]) -> Result<()> {
        if self.shape != shape {
            return Err(Error::Shape {
                context,
                expected: shape.to_vec(),
                actual: self.shape.to_vec(),
            });
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        other.expect_shape("tensor add", self.shape)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Stacks two single-channel tensors into one with two channels.
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        b.expect_shape("channel concat", a.shape)?;
        let [bs, c, h, w] = a.shape;
        let mut out = Tensor::zeros([bs, 2 * c, h, w]);
        for i in 0..bs {
            for ch in 0..c {
                out.plane_mut(i, ch).copy_from_slice(a.plane(i, ch));
                out.plane_mut(i, c + ch).copy_from_slice(b.plane(i, ch));
            }
        }
        Ok(out)
    }

    /// Inverse of [`Tensor::concat_channels`].
    pub fn split_channels(&self) -> (Tensor, Tensor) {
        let [bs, c2, h, w] = self.shape;
        let c = c2 / 2;
        let mut a = Tensor::zeros([bs, c, h, w]);
        let mut b = Tensor::zeros([bs, c, h, w]);
        for i in 0..bs {
            for ch in 0..c {
                a.plane_mut(i, ch).copy_from_slice(self.plane(i, ch));
                b.plane_mut(i, ch).copy_from_slice(self.plane(i, c + ch));
            }
        }
        (a, b)
    }
}

/// A trainable parameter: values paired with an accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrad {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl TensorGrad {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len(), "parameter shape");
        let grad = vec![0.0; value.len()];
        Self {
            name: name.into(),
            shape,
            value,
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Anything owning trainable parameters.
pub trait Trainable {
    fn params(&self) -> Vec<&TensorGrad>;
    fn params_mut(&mut self) -> Vec<&mut TensorGrad>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}
