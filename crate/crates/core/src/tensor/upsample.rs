use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Source taps for one output coordinate (half-pixel centres, corners not aligned).
#[inline]
fn taps(out_i: usize, factor: usize, in_len: usize) -> (usize, usize, f64) {
    let src = ((out_i as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(in_len - 1);
    let i1 = (i0 + 1).min(in_len - 1);
    let frac = if i1 == i0 { 0.0 } else { src - i0 as f64 };
    (i0, i1, frac)
}

pub fn bilinear_upsample(input: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::InvalidArgument("upsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(input.clone());
    }
    let s = input.shape();
    let (oh, ow) = (s.h * factor, s.w * factor);
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, oh, ow));
    let xt: Vec<_> = (0..ow).map(|x| taps(x, factor, s.w)).collect();
    for n in 0..s.n {
        for c in 0..s.c {
            let src = input.channel(n, c);
            let base = (n * s.c + c) * oh * ow;
            for oy in 0..oh {
                let (y0, y1, fy) = taps(oy, factor, s.h);
                for (ox, &(x0, x1, fx)) in xt.iter().enumerate() {
                    let top = src[y0 * s.w + x0] * (1.0 - fx) + src[y0 * s.w + x1] * fx;
                    let bot = src[y1 * s.w + x0] * (1.0 - fx) + src[y1 * s.w + x1] * fx;
                    out.data_mut()[base + oy * ow + ox] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`bilinear_upsample`].
pub fn bilinear_upsample_backward(input_shape: Shape, factor: usize, upstream: &Tensor) -> Result<Tensor> {
    let expected = Shape::new(input_shape.n, input_shape.c, input_shape.h * factor, input_shape.w * factor);
    if factor == 0 || upstream.shape() != expected {
        return Err(Error::shape("upsample backward upstream", expected, upstream.shape()));
    }
    if factor == 1 {
        return Ok(upstream.clone());
    }
    let s = input_shape;
    let (oh, ow) = (expected.h, expected.w);
    let mut g = Tensor::zeros(s);
    let xt: Vec<_> = (0..ow).map(|x| taps(x, factor, s.w)).collect();
    for n in 0..s.n {
        for c in 0..s.c {
            let up = upstream.channel(n, c);
            let base = (n * s.c + c) * s.plane();
            let gd = &mut g.data_mut()[base..base + s.plane()];
            for oy in 0..oh {
                let (y0, y1, fy) = taps(oy, factor, s.h);
                for (ox, &(x0, x1, fx)) in xt.iter().enumerate() {
                    let u = up[oy * ow + ox];
                    gd[y0 * s.w + x0] += u * (1.0 - fy) * (1.0 - fx);
                    gd[y0 * s.w + x1] += u * (1.0 - fy) * fx;
                    gd[y1 * s.w + x0] += u * fy * (1.0 - fx);
                    gd[y1 * s.w + x1] += u * fy * fx;
                }
            }
        }
    }
    Ok(g)
}
