use super::accumulate;
use crate::error::Result;
use crate::tensor::{maxpool2x2_backward, maxpool2x2_forward, relu_backward, relu_forward, ConvLayer, PoolRecord, Tensor};

/// Four stages of two 3×3 convolutions with ReLU, each followed by 2×2 max-pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct Trunk {
    pub convs: Vec<ConvLayer>,
}

#[derive(Clone, Debug)]
pub struct TrunkOutput {
    pub input: Tensor,
    pre: Vec<Tensor>,
    acts: Vec<Tensor>,
    pools: Vec<PoolRecord>,
}

impl TrunkOutput {
    /// Output of pooling layer `i` (0-based).
    pub fn pool(&self, i: usize) -> &Tensor {
        &self.pools[i].output
    }

    /// Branch attachment points: pool1, pool2, pool3 and the last convolution
    /// before pool4.
    pub fn branch_taps(&self) -> [&Tensor; 4] {
        [self.pool(0), self.pool(1), self.pool(2), &self.acts[7]]
    }

    /// Stride-16 features for RoI pooling.
    pub fn roi_features(&self) -> &Tensor {
        self.pool(3)
    }

    /// `true` for every positive pre-activation; used to detect ReLU kinks.
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.pre.iter().flat_map(|t| t.data().iter().map(|&v| v > 0.0)).collect()
    }

    pub fn pool_argmax(&self) -> Vec<Option<usize>> {
        self.pools.iter().flat_map(|p| p.argmax.iter().copied()).collect()
    }
}

impl Trunk {
    pub fn new(channels: [usize; 4]) -> Result<Self> {
        let mut convs = Vec::with_capacity(8);
        let mut in_c = 3;
        for c in channels {
            convs.push(ConvLayer::new(in_c, c, 3, 1, 1, 1)?);
            convs.push(ConvLayer::new(c, c, 3, 1, 1, 1)?);
            in_c = c;
        }
        Ok(Trunk { convs })
    }

    pub fn out_channels(&self) -> usize {
        self.convs[7].out_channels()
    }

    pub fn forward(&self, input: &Tensor) -> Result<TrunkOutput> {
        let mut pre = Vec::with_capacity(8);
        let mut acts: Vec<Tensor> = Vec::with_capacity(8);
        let mut pools: Vec<PoolRecord> = Vec::with_capacity(4);
        for (i, conv) in self.convs.iter().enumerate() {
            let x = match i {
                0 => input,
                _ if i % 2 == 0 => &pools[i / 2 - 1].output,
                _ => &acts[i - 1],
            };
            let z = conv.forward(x)?;
            acts.push(relu_forward(&z));
            pre.push(z);
            if i % 2 == 1 {
                pools.push(maxpool2x2_forward(&acts[i]));
            }
        }
        Ok(TrunkOutput {
            input: input.clone(),
            pre,
            acts,
            pools,
        })
    }

    /// Backpropagates a gradient on the pool4 output into the conv parameters.
    pub fn backward(&mut self, out: &TrunkOutput, grad_pool4: &Tensor) -> Result<()> {
        let mut g = grad_pool4.clone();
        for i in (0..8).rev() {
            if i % 2 == 1 {
                g = maxpool2x2_backward(&out.pools[i / 2], &g)?;
            }
            let g_pre = relu_backward(&out.pre[i], &g)?;
            let x = match i {
                0 => &out.input,
                _ if i % 2 == 0 => &out.pools[i / 2 - 1].output,
                _ => &out.acts[i - 1],
            };
            let grads = if i == 0 {
                self.convs[i].backward_params(x, &g_pre)?
            } else {
                self.convs[i].backward(x, &g_pre)?
            };
            accumulate(&mut self.convs[i], &grads)?;
            g = grads.input;
        }
        Ok(())
    }
}
