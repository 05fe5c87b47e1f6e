use rand::Rng;

use super::gemm::{gemm, Mat};
use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// 2-D convolution (cross-correlation) with stride, zero padding and dilation.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    /// `(out_c, in_c, k_h, k_w)`
    pub weight: Tensor,
    /// `(1, out_c, 1, 1)`
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvLayer {
    pub fn new(
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Result<Self> {
        if stride == 0 || dilation == 0 || kernel == 0 {
            return Err(Error::InvalidArgument(format!(
                "conv stride ({stride}), dilation ({dilation}) and kernel ({kernel}) must be positive"
            )));
        }
        Ok(ConvLayer {
            weight: Tensor::zeros(Shape::new(out_c, in_c, kernel, kernel)),
            bias: Tensor::zeros(Shape::new(1, out_c, 1, 1)),
            stride,
            padding,
            dilation,
        })
    }

    /// He-normal weights, zero bias.
    pub fn init_he(&mut self, rng: &mut impl Rng) {
        let s = self.weight.shape();
        let fan_in = (s.c * s.h * s.w) as f64;
        self.weight = Tensor::randn(s, (2.0 / fan_in).sqrt(), rng);
        self.bias = Tensor::zeros(self.bias.shape());
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape().c
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().n
    }

    fn kernel(&self) -> (usize, usize) {
        let s = self.weight.shape();
        (s.h, s.w)
    }

    /// Spatial output size for an `h × w` input.
    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel();
        let ext_h = self.dilation * (kh - 1) + 1;
        let ext_w = self.dilation * (kw - 1) + 1;
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ext_h > ph || ext_w > pw {
            return Err(Error::InvalidArgument(format!(
                "dilated kernel extent {ext_h}x{ext_w} exceeds padded input {ph}x{pw}"
            )));
        }
        Ok(((ph - ext_h) / self.stride + 1, (pw - ext_w) / self.stride + 1))
    }

    fn check_input(&self, input: &Tensor) -> Result<(usize, usize)> {
        let s = input.shape();
        if s.c != self.in_channels() {
            return Err(Error::shape(
                "conv input channels (input vs weight)",
                self.weight.shape(),
                s,
            ));
        }
        self.output_dims(s.h, s.w)
    }

    fn is_pointwise(&self) -> bool {
        self.kernel() == (1, 1) && self.stride == 1 && self.padding == 0
    }

    /// Unfolds one batch item into `(in_c*kh*kw) × (oh*ow)` columns.
    fn im2col(&self, input: &Tensor, n: usize, oh: usize, ow: usize) -> Vec<f64> {
        let s = input.shape();
        let (kh, kw) = self.kernel();
        let p = oh * ow;
        let mut cols = vec![0.0; s.c * kh * kw * p];
        let pad = self.padding as isize;
        for c in 0..s.c {
            let plane = input.channel(n, c);
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = (c * kh + ky) * kw + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    let dy = (ky * self.dilation) as isize - pad;
                    let dx = (kx * self.dilation) as isize - pad;
                    for oy in 0..oh {
                        let iy = (oy * self.stride) as isize + dy;
                        if iy < 0 || iy >= s.h as isize {
                            continue;
                        }
                        let src_row = &plane[iy as usize * s.w..(iy as usize + 1) * s.w];
                        for ox in 0..ow {
                            let ix = (ox * self.stride) as isize + dx;
                            if ix >= 0 && ix < s.w as isize {
                                dst[oy * ow + ox] = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Scatter-adds columns back onto an input-shaped buffer for one batch item.
    fn col2im(&self, cols: &[f64], grad_in: &mut [f64], in_shape: Shape, oh: usize, ow: usize) {
        let (kh, kw) = self.kernel();
        let p = oh * ow;
        let pad = self.padding as isize;
        for c in 0..in_shape.c {
            let plane = &mut grad_in[c * in_shape.plane()..(c + 1) * in_shape.plane()];
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = (c * kh + ky) * kw + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    let dy = (ky * self.dilation) as isize - pad;
                    let dx = (kx * self.dilation) as isize - pad;
                    for oy in 0..oh {
                        let iy = (oy * self.stride) as isize + dy;
                        if iy < 0 || iy >= in_shape.h as isize {
                            continue;
                        }
                        let base = iy as usize * in_shape.w;
                        for ox in 0..ow {
                            let ix = (ox * self.stride) as isize + dx;
                            if ix >= 0 && ix < in_shape.w as isize {
                                plane[base + ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (oh, ow) = self.check_input(input)?;
        let s = input.shape();
        let oc = self.out_channels();
        let k = s.c * self.kernel().0 * self.kernel().1;
        let p = oh * ow;
        let mut out = Tensor::zeros(Shape::new(s.n, oc, oh, ow));
        let bias = self.bias.data();
        for n in 0..s.n {
            let dst = &mut out.data_mut()[n * oc * p..(n + 1) * oc * p];
            for (o, chunk) in dst.chunks_mut(p).enumerate() {
                chunk.iter_mut().for_each(|v| *v = bias[o]);
            }
            let w = Mat::new(self.weight.data(), oc, k);
            if self.is_pointwise() {
                let x = &input.data()[n * s.c * p..(n + 1) * s.c * p];
                gemm(w, Mat::new(x, k, p), 1.0, dst);
            } else {
                let cols = self.im2col(input, n, oh, ow);
                gemm(w, Mat::new(&cols, k, p), 1.0, dst);
            }
        }
        Ok(out)
    }

    pub fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<ConvGrads> {
        self.backward_impl(input, upstream, true)
    }

    /// Weight and bias gradients only; `input` of the result is all zeros.
    pub fn backward_params(&self, input: &Tensor, upstream: &Tensor) -> Result<ConvGrads> {
        self.backward_impl(input, upstream, false)
    }

    fn backward_impl(&self, input: &Tensor, upstream: &Tensor, need_input: bool) -> Result<ConvGrads> {
        let (oh, ow) = self.check_input(input)?;
        let s = input.shape();
        let oc = self.out_channels();
        let expected = Shape::new(s.n, oc, oh, ow);
        if upstream.shape() != expected {
            return Err(Error::shape(
                "conv backward: upstream gradient does not match the forward output for this input",
                expected,
                upstream.shape(),
            ));
        }
        let (kh, kw) = self.kernel();
        let k = s.c * kh * kw;
        let p = oh * ow;
        let mut g_in = Tensor::zeros(s);
        let mut g_w = Tensor::zeros(self.weight.shape());
        let mut g_b = Tensor::zeros(self.bias.shape());
        let w = Mat::new(self.weight.data(), oc, k);
        for n in 0..s.n {
            let up = &upstream.data()[n * oc * p..(n + 1) * oc * p];
            for (o, chunk) in up.chunks(p).enumerate() {
                g_b.data_mut()[o] += chunk.iter().sum::<f64>();
            }
            let up_m = Mat::new(up, oc, p);
            let gin_n = &mut g_in.data_mut()[n * s.c * s.plane()..(n + 1) * s.c * s.plane()];
            if self.is_pointwise() {
                let x = &input.data()[n * s.c * p..(n + 1) * s.c * p];
                gemm(up_m, Mat::new(x, k, p).t(), 1.0, g_w.data_mut());
                if need_input {
                    gemm(w.t(), up_m, 0.0, gin_n);
                }
            } else {
                let cols = self.im2col(input, n, oh, ow);
                gemm(up_m, Mat::new(&cols, k, p).t(), 1.0, g_w.data_mut());
                if need_input {
                    let mut dcols = vec![0.0; k * p];
                    gemm(w.t(), up_m, 0.0, &mut dcols);
                    self.col2im(&dcols, gin_n, s, oh, ow);
                }
            }
        }
        Ok(ConvGrads {
            input: g_in,
            weight: g_w,
            bias: g_b,
        })
    }
}

pub fn conv2d_forward(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    layer.forward(input)
}

pub fn conv2d_backward(input: &Tensor, layer: &ConvLayer, upstream: &Tensor) -> Result<ConvGrads> {
    layer.backward(input, upstream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::finite_difference_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct sextuple-loop convolution used as an oracle.
    fn naive_conv(input: &Tensor, layer: &ConvLayer) -> Tensor {
        let s = input.shape();
        let ws = layer.weight.shape();
        let (oh, ow) = layer.output_dims(s.h, s.w).unwrap();
        let mut out = Tensor::zeros(Shape::new(s.n, ws.n, oh, ow));
        for n in 0..s.n {
            for o in 0..ws.n {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = layer.bias.data()[o];
                        for c in 0..s.c {
                            for ky in 0..ws.h {
                                for kx in 0..ws.w {
                                    let iy = (oy * layer.stride + ky * layer.dilation) as isize
                                        - layer.padding as isize;
                                    let ix = (ox * layer.stride + kx * layer.dilation) as isize
                                        - layer.padding as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < s.h && (ix as usize) < s.w {
                                        acc += layer.weight.at(o, c, ky, kx)
                                            * input.at(n, c, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        let idx = out.index(n, o, oy, ox);
                        out.data_mut()[idx] = acc;
                    }
                }
            }
        }
        out
    }

    fn random_layer(rng: &mut ChaCha8Rng, ic: usize, oc: usize, k: usize, s: usize, p: usize, d: usize) -> ConvLayer {
        let mut l = ConvLayer::new(ic, oc, k, s, p, d).unwrap();
        l.weight = Tensor::randn(l.weight.shape(), 0.5, rng);
        l.bias = Tensor::randn(l.bias.shape(), 0.5, rng);
        l
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut l = ConvLayer::new(1, 1, 3, 1, 0, 1).unwrap();
        l.weight = Tensor::filled(l.weight.shape(), 3.0);
        l.bias.data_mut()[0] = 0.25;
        let out = l.forward(&Tensor::zeros(Shape::new(1, 1, 3, 3))).unwrap();
        assert_eq!(out.data(), &[0.25]);
    }

    #[test]
    fn identity_kernel_preserves_input() {
        let mut l = ConvLayer::new(1, 1, 3, 1, 1, 1).unwrap();
        l.weight.data_mut()[4] = 1.0;
        let x = Tensor::from_vec(Shape::new(1, 1, 3, 3), (1..=9).map(f64::from).collect()).unwrap();
        assert_eq!(l.forward(&x).unwrap().data(), x.data());
    }

    #[test]
    fn dilated_ones_kernel_sums_taps() {
        let mut l = ConvLayer::new(1, 1, 3, 1, 0, 2).unwrap();
        l.weight = Tensor::filled(l.weight.shape(), 1.0);
        let ramp: Vec<f64> = (0..25).map(f64::from).collect();
        let x = Tensor::from_vec(Shape::new(1, 1, 5, 5), ramp.clone()).unwrap();
        let out = l.forward(&x).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 1, 1, 1));
        let mut expected = 0.0;
        for y in [0, 2, 4] {
            for x in [0, 2, 4] {
                expected += ramp[y * 5 + x];
            }
        }
        assert_eq!(expected, 108.0);
        assert_eq!(out.data()[0], expected);
    }

    #[test]
    fn matches_naive_for_assorted_geometries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(ic, oc, k, s, p, d, h, w) in &[
            (2, 3, 3, 1, 1, 1, 6, 5),
            (3, 2, 3, 2, 2, 2, 9, 8),
            (2, 4, 3, 4, 2, 2, 12, 12),
            (3, 2, 1, 1, 0, 1, 4, 4),
            (1, 1, 1, 2, 0, 1, 5, 5),
        ] {
            let l = random_layer(&mut rng, ic, oc, k, s, p, d);
            let x = Tensor::randn(Shape::new(2, ic, h, w), 1.0, &mut rng);
            let a = l.forward(&x).unwrap();
            let b = naive_conv(&x, &l);
            assert_eq!(a.shape(), b.shape());
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn channel_mismatch_names_both_shapes() {
        let l = ConvLayer::new(2, 1, 3, 1, 1, 1).unwrap();
        let err = l.forward(&Tensor::zeros(Shape::new(1, 3, 4, 4))).unwrap_err().to_string();
        assert!(err.contains("1x2x3x3") && err.contains("1x3x4x4"), "{err}");
    }

    #[test]
    fn backward_rejects_mismatched_upstream() {
        let l = ConvLayer::new(1, 1, 3, 1, 1, 1).unwrap();
        let x = Tensor::zeros(Shape::new(1, 1, 4, 4));
        assert!(l.backward(&x, &Tensor::zeros(Shape::new(1, 1, 3, 3))).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = random_layer(&mut rng, 2, 2, 3, 1, 1, 1);
        let x = Tensor::randn(Shape::new(1, 2, 5, 5), 1.0, &mut rng);
        let g = l.backward(&x, &Tensor::zeros(Shape::new(1, 2, 5, 5))).unwrap();
        assert!(g.input.data().iter().chain(g.weight.data()).chain(g.bias.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn pointwise_weight_grad_is_input_times_upstream() {
        let mut l = ConvLayer::new(1, 1, 1, 1, 0, 1).unwrap();
        l.weight.data_mut()[0] = 0.7;
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let up = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![0.1, 0.2, -0.3, 4.0]).unwrap();
        let g = l.backward(&x, &up).unwrap();
        let expected = 1.0 * 0.1 + -2.0 * 0.2 + 3.0 * -0.3 + 0.5 * 4.0;
        assert!((g.weight.data()[0] - expected).abs() < 1e-15);
        assert!((g.bias.data()[0] - 4.0).abs() < 1e-15);
        for (gi, u) in g.input.data().iter().zip(up.data()) {
            assert!((gi - 0.7 * u).abs() < 1e-15);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = random_layer(&mut rng, 2, 3, 3, 1, 1, 1);
        let x = Tensor::randn(Shape::new(1, 2, 6, 6), 1.0, &mut rng);
        let out = l.forward(&x).unwrap();
        // loss = sum(r ⊙ out)
        let r = Tensor::randn(out.shape(), 1.0, &mut rng);
        let g = l.backward(&x, &r).unwrap();
        let loss = |x: &Tensor, l: &ConvLayer| -> f64 {
            l.forward(x).unwrap().data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };

        let rep = finite_difference_check(
            |p| loss(&Tensor::from_vec(x.shape(), p.to_vec()).unwrap(), &l),
            x.data(),
            g.input.data(),
            1e-5,
            1e-4,
        );
        assert!(rep.passed, "input: {rep:?}");

        let rep = finite_difference_check(
            |p| {
                let mut l2 = l.clone();
                l2.weight = Tensor::from_vec(l.weight.shape(), p.to_vec()).unwrap();
                loss(&x, &l2)
            },
            l.weight.data(),
            g.weight.data(),
            1e-5,
            1e-4,
        );
        assert!(rep.passed, "weight: {rep:?}");

        let rep = finite_difference_check(
            |p| {
                let mut l2 = l.clone();
                l2.bias = Tensor::from_vec(l.bias.shape(), p.to_vec()).unwrap();
                loss(&x, &l2)
            },
            l.bias.data(),
            g.bias.data(),
            1e-5,
            1e-4,
        );
        assert!(rep.passed, "bias: {rep:?}");
    }
}
