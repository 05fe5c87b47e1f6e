use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Output of a max-pool forward pass together with the routing needed for backward.
#[derive(Clone, Debug)]
pub struct PoolRecord {
    pub output: Tensor,
    /// Flat input index of the winning cell, one per output cell. `None` marks an
    /// empty window (never produced by 2×2 pooling, kept for a uniform contract).
    pub argmax: Vec<Option<usize>>,
    pub input_shape: Shape,
}

/// 2×2 / stride-2 max pooling. Odd spatial dims are replication-padded on the
/// bottom/right, so the padded cells alias the last row/column. Ties resolve to
/// the first cell in row-major window order.
pub fn maxpool2x2_forward(input: &Tensor) -> PoolRecord {
    let s = input.shape();
    let (oh, ow) = (s.h.div_ceil(2), s.w.div_ceil(2));
    let out_shape = Shape::new(s.n, s.c, oh, ow);
    let mut output = Tensor::zeros(out_shape);
    let mut argmax = Vec::with_capacity(out_shape.numel());
    let data = input.data();
    for n in 0..s.n {
        for c in 0..s.c {
            let base = (n * s.c + c) * s.plane();
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for dy in 0..2 {
                        let iy = (2 * oy + dy).min(s.h - 1);
                        for dx in 0..2 {
                            let ix = (2 * ox + dx).min(s.w - 1);
                            let idx = base + iy * s.w + ix;
                            if data[idx] > best {
                                best = data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = output.index(n, c, oy, ox);
                    output.data_mut()[o] = best;
                    argmax.push(Some(best_idx));
                }
            }
        }
    }
    PoolRecord {
        output,
        argmax,
        input_shape: s,
    }
}

/// Routes each upstream value to the input cell that won its window.
pub fn maxpool2x2_backward(record: &PoolRecord, upstream: &Tensor) -> Result<Tensor> {
    if upstream.shape() != record.output.shape() {
        return Err(Error::shape("maxpool backward upstream", record.output.shape(), upstream.shape()));
    }
    let mut grad = Tensor::zeros(record.input_shape);
    let g = grad.data_mut();
    for (src, &u) in record.argmax.iter().zip(upstream.data()) {
        if let Some(i) = src {
            g[*i] += u;
        }
    }
    Ok(grad)
}
