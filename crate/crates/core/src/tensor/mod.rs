//! Dense NCHW tensors and the handful of layers the networks are built from.
//!
//! Every layer is a pair of pure functions: `forward` maps inputs to outputs and
//! `backward` maps (inputs, upstream gradient) to gradients for the inputs and
//! the layer parameters. Parameter tensors carry a lazily allocated gradient
//! buffer that the training loop accumulates into before an [`Sgd`] step.

mod activation;
mod conv;
mod gemm;
pub mod gradcheck;
mod linear;
mod pool;
pub mod rxt;
mod sgd;
mod upsample;

pub use activation::{
    relu_backward, relu_forward, sigmoid, sigmoid_backward, sigmoid_forward, softmax2_backward,
    softmax2_forward,
};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvLayer};
pub use gradcheck::{finite_difference_check, finite_difference_check_at, GradCheckReport};
pub use linear::{Linear, LinearGrads};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, PoolRecord};
pub use sgd::{sgd_step, Sgd};
pub use upsample::{bilinear_upsample, bilinear_upsample_backward};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// `(batch, channels, height, width)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl std::fmt::Debug for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Display::fmt(self, f)
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.numel()],
            grad: None,
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
            grad: None,
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::shape("tensor data length", shape.numel(), data.len()));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    /// Zero-mean normal entries with the given standard deviation.
    pub fn randn(shape: Shape, std: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        let data = (0..shape.numel()).map(|_| normal.sample(rng)).collect();
        Tensor {
            shape,
            data,
            grad: None,
        }
    }

    pub fn uniform(shape: Shape, lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        let data = (0..shape.numel()).map(|_| rng.random_range(lo..hi)).collect();
        Tensor {
            shape,
            data,
            grad: None,
        }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(n, c, y, x)]
    }

    /// Contiguous `h*w` slice for one (batch, channel) pair.
    pub fn channel(&self, n: usize, c: usize) -> &[f64] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.shape.numel() {
            return Err(Error::shape("reshape", self.shape, shape));
        }
        self.shape = shape;
        self.grad = None;
        Ok(self)
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated as zeros on first access.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn accumulate_grad(&mut self, g: &Tensor) -> Result<()> {
        if g.shape != self.shape {
            return Err(Error::shape("gradient accumulation", self.shape, g.shape));
        }
        for (a, b) in self.grad_mut().iter_mut().zip(&g.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if other.shape != self.shape {
            return Err(Error::shape("tensor add", self.shape, other.shape));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// Stacks single-batch tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?
            .shape;
        let mut c = 0;
        for p in parts {
            let s = p.shape;
            if s.n != 1 || s.h != first.h || s.w != first.w {
                return Err(Error::shape("channel concat", first, s));
            }
            c += s.c;
        }
        let mut data = Vec::with_capacity(c * first.plane());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Tensor::from_vec(Shape::new(1, c, first.h, first.w), data)
    }

    /// Splits a single-batch tensor into channel groups of the given sizes.
    pub fn split_channels(&self, sizes: &[usize]) -> Result<Vec<Tensor>> {
        let s = self.shape;
        if s.n != 1 || sizes.iter().sum::<usize>() != s.c {
            return Err(Error::shape("channel split", s.c, sizes));
        }
        let mut out = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &c in sizes {
            let len = c * s.plane();
            out.push(Tensor::from_vec(
                Shape::new(1, c, s.h, s.w),
                self.data[start..start + len].to_vec(),
            )?);
            start += len;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_is_lazy_and_shaped() {
        let mut t = Tensor::zeros(Shape::new(1, 2, 3, 4));
        assert!(t.grad().is_none());
        assert_eq!(t.grad_mut().len(), 24);
        t.accumulate_grad(&Tensor::filled(t.shape(), 2.0)).unwrap();
        t.accumulate_grad(&Tensor::filled(t.shape(), 1.0)).unwrap();
        assert!(t.grad().unwrap().iter().all(|&g| g == 3.0));
        t.zero_grad();
        assert!(t.grad().unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn data_length_must_match_shape() {
        assert!(Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![0.0; 3]).is_err());
    }

    #[test]
    fn concat_then_split() {
        let a = Tensor::filled(Shape::new(1, 1, 2, 2), 1.0);
        let b = Tensor::filled(Shape::new(1, 2, 2, 2), 2.0);
        let cat = Tensor::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), Shape::new(1, 3, 2, 2));
        let parts = cat.split_channels(&[1, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
