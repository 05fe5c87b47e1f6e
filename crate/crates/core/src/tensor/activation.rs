use super::Tensor;
use crate::error::{Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Gradient passes where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    check_same(input, upstream, "relu backward")?;
    let mut g = upstream.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}

pub fn sigmoid_forward(input: &Tensor) -> Tensor {
    input.map(sigmoid)
}

/// Takes the sigmoid *output*.
pub fn sigmoid_backward(output: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    check_same(output, upstream, "sigmoid backward")?;
    let mut g = upstream.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
        *gv *= y * (1.0 - y);
    }
    Ok(g)
}

/// Two-class softmax over the channel axis of an `(n, 2, h, w)` tensor.
pub fn softmax2_forward(logits: &Tensor) -> Result<Tensor> {
    let s = logits.shape();
    if s.c != 2 {
        return Err(Error::shape("softmax2 channels", 2, s.c));
    }
    let mut out = logits.clone();
    let p = s.plane();
    for n in 0..s.n {
        let base = n * 2 * p;
        for i in 0..p {
            let a = logits.data()[base + i];
            let b = logits.data()[base + p + i];
            // p1 = sigmoid(b - a) is stable for any logit magnitude
            let p1 = sigmoid(b - a);
            out.data_mut()[base + i] = 1.0 - p1;
            out.data_mut()[base + p + i] = p1;
        }
    }
    Ok(out)
}

/// Takes the softmax *output*; returns the gradient with respect to the logits.
pub fn softmax2_backward(probs: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    check_same(probs, upstream, "softmax2 backward")?;
    let s = probs.shape();
    let p = s.plane();
    let mut g = Tensor::zeros(s);
    for n in 0..s.n {
        let base = n * 2 * p;
        for i in 0..p {
            let (p0, p1) = (probs.data()[base + i], probs.data()[base + p + i]);
            let (u0, u1) = (upstream.data()[base + i], upstream.data()[base + p + i]);
            let dot = p0 * u0 + p1 * u1;
            g.data_mut()[base + i] = p0 * (u0 - dot);
            g.data_mut()[base + p + i] = p1 * (u1 - dot);
        }
    }
    Ok(g)
}

fn check_same(a: &Tensor, b: &Tensor, ctx: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(ctx, a.shape(), b.shape()));
    }
    Ok(())
}
