use rand::Rng;

use super::gemm::{gemm, Mat};
use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Fully-connected layer. Each batch item of the input is flattened, so a
/// `(r, c, h, w)` input maps to `(r, out, 1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `(out, in, 1, 1)`
    pub weight: Tensor,
    /// `(1, out, 1, 1)`
    pub bias: Tensor,
}

#[derive(Clone, Debug)]
pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: Tensor::zeros(Shape::new(outputs, inputs, 1, 1)),
            bias: Tensor::zeros(Shape::new(1, outputs, 1, 1)),
        }
    }

    pub fn init_he(&mut self, rng: &mut impl Rng) {
        let s = self.weight.shape();
        self.weight = Tensor::randn(s, (2.0 / s.c as f64).sqrt(), rng);
        self.bias = Tensor::zeros(self.bias.shape());
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape().c
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape().n
    }

    fn check(&self, input: &Tensor) -> Result<usize> {
        let s = input.shape();
        let per_item = s.c * s.plane();
        if per_item != self.inputs() {
            return Err(Error::shape("linear input features", self.inputs(), s));
        }
        Ok(s.n)
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let rows = self.check(input)?;
        let (fi, fo) = (self.inputs(), self.outputs());
        let mut out = Tensor::zeros(Shape::new(rows, fo, 1, 1));
        for r in 0..rows {
            out.data_mut()[r * fo..(r + 1) * fo].copy_from_slice(self.bias.data());
        }
        gemm(
            Mat::new(input.data(), rows, fi),
            Mat::new(self.weight.data(), fo, fi).t(),
            1.0,
            out.data_mut(),
        );
        Ok(out)
    }

    pub fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<LinearGrads> {
        let rows = self.check(input)?;
        let (fi, fo) = (self.inputs(), self.outputs());
        let expected = Shape::new(rows, fo, 1, 1);
        if upstream.shape() != expected {
            return Err(Error::shape("linear backward upstream", expected, upstream.shape()));
        }
        let up = Mat::new(upstream.data(), rows, fo);
        let mut g_in = Tensor::zeros(input.shape());
        gemm(up, Mat::new(self.weight.data(), fo, fi), 0.0, g_in.data_mut());
        let mut g_w = Tensor::zeros(self.weight.shape());
        gemm(up.t(), Mat::new(input.data(), rows, fi), 0.0, g_w.data_mut());
        let mut g_b = Tensor::zeros(self.bias.shape());
        for r in 0..rows {
            for o in 0..fo {
                g_b.data_mut()[o] += upstream.data()[r * fo + o];
            }
        }
        Ok(LinearGrads {
            input: g_in,
            weight: g_w,
            bias: g_b,
        })
    }
}
