use rand::Rng;

use super::{accumulate, FusionVariant};
use crate::error::Result;
use crate::tensor::{relu_backward, relu_forward, sigmoid_backward, sigmoid_forward, ConvLayer, Tensor};

/// Per-branch stride on the first convolution; brings every attachment point
/// to 1/8 of the input.
pub const BRANCH_STRIDES: [usize; 4] = [4, 2, 1, 1];

/// Three dilated 3×3 convolutions followed by two 1×1 layers and a sigmoid.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub convs: Vec<ConvLayer>,
    pub head1: ConvLayer,
    pub head2: ConvLayer,
}

#[derive(Clone, Debug)]
pub struct BranchPass {
    pre: Vec<Tensor>,
    acts: Vec<Tensor>,
    /// `(1, 1, h/8, w/8)` in (0, 1)
    pub map: Tensor,
}

impl BranchPass {
    /// Output of the 128-channel 1×1 layer.
    pub fn features(&self) -> &Tensor {
        &self.acts[3]
    }
}

impl Branch {
    pub fn new(in_c: usize, stride: usize, channels: [usize; 3], head: usize, dilation: usize) -> Result<Self> {
        let pad = dilation;
        Ok(Branch {
            convs: vec![
                ConvLayer::new(in_c, channels[0], 3, stride, pad, dilation)?,
                ConvLayer::new(channels[0], channels[1], 3, 1, pad, dilation)?,
                ConvLayer::new(channels[1], channels[2], 3, 1, pad, dilation)?,
            ],
            head1: ConvLayer::new(channels[2], head, 1, 1, 0, 1)?,
            head2: ConvLayer::new(head, 1, 1, 1, 0, 1)?,
        })
    }

    pub fn init(&mut self, rng: &mut impl Rng) {
        for c in &mut self.convs {
            c.init_he(rng);
        }
        self.head1.init_he(rng);
        self.head2.init_he(rng);
    }

    fn layer(&self, i: usize) -> &ConvLayer {
        if i < 3 {
            &self.convs[i]
        } else {
            &self.head1
        }
    }

    fn layer_mut(&mut self, i: usize) -> &mut ConvLayer {
        if i < 3 {
            &mut self.convs[i]
        } else {
            &mut self.head1
        }
    }

    pub fn forward(&self, tap: &Tensor) -> Result<BranchPass> {
        let mut pre = Vec::with_capacity(4);
        let mut acts: Vec<Tensor> = Vec::with_capacity(4);
        for i in 0..4 {
            let z = self.layer(i).forward(if i == 0 { tap } else { &acts[i - 1] })?;
            acts.push(relu_forward(&z));
            pre.push(z);
        }
        let map = sigmoid_forward(&self.head2.forward(&acts[3])?);
        Ok(BranchPass { pre, acts, map })
    }

    pub fn backward(
        &mut self,
        tap: &Tensor,
        pass: &BranchPass,
        grad_map: Option<&Tensor>,
        grad_features: Option<&Tensor>,
    ) -> Result<()> {
        let mut g = match grad_map {
            Some(gm) => {
                let g_logits = sigmoid_backward(&pass.map, gm)?;
                let gh = self.head2.backward(&pass.acts[3], &g_logits)?;
                accumulate(&mut self.head2, &gh)?;
                gh.input
            }
            None => Tensor::zeros(pass.acts[3].shape()),
        };
        match (grad_map, grad_features) {
            (None, None) => return Ok(()),
            (_, Some(gf)) => g.add_assign(gf)?,
            _ => {}
        }
        for i in (0..4).rev() {
            let g_pre = relu_backward(&pass.pre[i], &g)?;
            let x = if i == 0 { tap } else { &pass.acts[i - 1] };
            let grads = if i == 0 {
                self.layer(i).backward_params(x, &g_pre)?
            } else {
                self.layer(i).backward(x, &g_pre)?
            };
            accumulate(self.layer_mut(i), &grads)?;
            g = grads.input;
        }
        Ok(())
    }
}

/// The four branches plus the 1×1 fusion head producing `S_C`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextNet {
    pub branches: Vec<Branch>,
    pub fusion: ConvLayer,
    pub variant: FusionVariant,
}

#[derive(Clone, Debug)]
pub struct ContextPass {
    pub branches: Vec<BranchPass>,
    fusion_input: Tensor,
    /// `(1, 1, h/8, w/8)`
    pub s_c: Tensor,
}

impl ContextPass {
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.branches
            .iter()
            .flat_map(|b| b.pre.iter().flat_map(|t| t.data().iter().map(|&v| v > 0.0)))
            .collect()
    }
}

impl ContextNet {
    pub fn forward(&self, taps: &[&Tensor]) -> Result<ContextPass> {
        let branches = self
            .branches
            .iter()
            .zip(taps)
            .map(|(b, t)| b.forward(t))
            .collect::<Result<Vec<_>>>()?;
        let parts: Vec<&Tensor> = match self.variant {
            FusionVariant::Maps => branches.iter().map(|b| &b.map).collect(),
            FusionVariant::Features => branches.iter().map(|b| b.features()).collect(),
        };
        let fusion_input = Tensor::concat_channels(&parts)?;
        let s_c = sigmoid_forward(&self.fusion.forward(&fusion_input)?);
        Ok(ContextPass {
            branches,
            fusion_input,
            s_c,
        })
    }

    /// `grad_maps[k]` is the direct loss gradient on branch `k`'s map, if any.
    pub fn backward(
        &mut self,
        taps: &[&Tensor],
        pass: &ContextPass,
        grad_maps: &[Option<Tensor>],
        grad_s_c: &Tensor,
    ) -> Result<()> {
        let g_logit = sigmoid_backward(&pass.s_c, grad_s_c)?;
        let gf = self.fusion.backward(&pass.fusion_input, &g_logit)?;
        accumulate(&mut self.fusion, &gf)?;
        let sizes: Vec<usize> = match self.variant {
            FusionVariant::Maps => vec![1; self.branches.len()],
            FusionVariant::Features => pass.branches.iter().map(|b| b.features().shape().c).collect(),
        };
        let parts = gf.input.split_channels(&sizes)?;
        for (k, branch) in self.branches.iter_mut().enumerate() {
            let (gm, gfeat) = match self.variant {
                FusionVariant::Maps => {
                    let mut gm = parts[k].clone();
                    if let Some(direct) = &grad_maps[k] {
                        gm.add_assign(direct)?;
                    }
                    (Some(gm), None)
                }
                FusionVariant::Features => (grad_maps[k].clone(), Some(&parts[k])),
            };
            branch.backward(taps[k], &pass.branches[k], gm.as_ref(), gfeat)?;
        }
        Ok(())
    }
}
