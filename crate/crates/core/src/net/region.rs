use rand::Rng;

use crate::error::{Error, Result};
use crate::plane::SaliencyMap;
use crate::roipool::{mask_roi_pool_backward, mask_roi_pool_forward, rect_to_feature, PooledRegionFeature, POOLED_SIZE};
use crate::segment::{downsample_mask, DownsampledMask, RegionMask, RoI};
use crate::tensor::{relu_backward, relu_forward, softmax2_backward, Linear, Shape, Tensor};

pub const ROI_STRIDE: usize = 16;

/// Two fully-connected layers over the flattened `C×7×7` pooled feature,
/// followed by a two-way softmax. Class 1 is "salient".
#[derive(Clone, Debug, PartialEq)]
pub struct RegionHead {
    pub fc1: Linear,
    pub fc2: Linear,
}

/// A region mask with its RoIs mapped onto the stride-16 feature grid.
#[derive(Clone, Debug)]
pub struct PreparedMask {
    pub mask: RegionMask,
    pub rois: Vec<RoI>,
    pub coarse: DownsampledMask,
}

pub fn prepare_mask(mask: &RegionMask) -> Result<PreparedMask> {
    let coarse = downsample_mask(mask, ROI_STRIDE)?;
    let (fw, fh) = coarse.labels.dims();
    let rois = mask
        .rois()
        .into_iter()
        .map(|r| RoI {
            region_id: r.region_id,
            rect: rect_to_feature(r.rect, ROI_STRIDE, fw, fh),
        })
        .collect();
    Ok(PreparedMask {
        mask: mask.clone(),
        rois,
        coarse,
    })
}

#[derive(Clone, Debug)]
pub struct HeadPass {
    pub pooled: Vec<PooledRegionFeature>,
    /// Rows with a non-vanished region; vanished rows have all-zero input.
    active: Vec<usize>,
    x_active: Tensor,
    hidden_pre: Tensor,
    hidden: Tensor,
    /// `(regions, 2, 1, 1)`
    pub probs: Tensor,
}

impl HeadPass {
    pub fn salient_probs(&self) -> Vec<f64> {
        self.probs.data().chunks(2).map(|p| p[1]).collect()
    }

    pub fn region_count(&self) -> usize {
        self.pooled.len()
    }

    pub fn activation_pattern(&self) -> Vec<bool> {
        self.hidden_pre.data().iter().map(|&v| v > 0.0).collect()
    }
}

impl RegionHead {
    pub fn new(channels: usize, hidden: usize) -> Self {
        RegionHead {
            fc1: Linear::new(channels * POOLED_SIZE * POOLED_SIZE, hidden),
            fc2: Linear::new(hidden, 2),
        }
    }

    pub fn init(&mut self, rng: &mut impl Rng) {
        self.fc1.init_he(rng);
        self.fc2.init_he(rng);
    }

    pub fn forward(&self, features: &Tensor, prepared: &PreparedMask) -> Result<HeadPass> {
        if prepared.rois.is_empty() {
            return Err(Error::InvalidArgument("region head needs at least one region".into()));
        }
        let pooled = mask_roi_pool_forward(features, &prepared.rois, &prepared.coarse.labels, POOLED_SIZE)?;
        let r = pooled.len();
        let hid = self.fc1.outputs();
        let active: Vec<usize> = (0..r).filter(|&i| !pooled[i].vanished).collect();
        let c = features.shape().c;
        let mut xa = Vec::with_capacity(active.len() * c * POOLED_SIZE * POOLED_SIZE);
        for &i in &active {
            xa.extend_from_slice(pooled[i].values.data());
        }
        let x_active = Tensor::from_vec(Shape::new(active.len(), c, POOLED_SIZE, POOLED_SIZE), xa)?;
        let mut hidden_pre = Tensor::zeros(Shape::new(r, hid, 1, 1));
        for row in hidden_pre.data_mut().chunks_mut(hid) {
            row.copy_from_slice(self.fc1.bias.data());
        }
        if !active.is_empty() {
            let ha = self.fc1.forward(&x_active)?;
            for (k, &i) in active.iter().enumerate() {
                hidden_pre.data_mut()[i * hid..(i + 1) * hid].copy_from_slice(&ha.data()[k * hid..(k + 1) * hid]);
            }
        }
        let hidden = relu_forward(&hidden_pre);
        let logits = self.fc2.forward(&hidden)?;
        let probs = crate::tensor::softmax2_forward(&logits)?;
        Ok(HeadPass {
            pooled,
            active,
            x_active,
            hidden_pre,
            hidden,
            probs,
        })
    }

    /// Accumulates parameter gradients from `grad_probs` and returns the
    /// gradient on the RoI feature map.
    pub fn backward(&mut self, pass: &HeadPass, grad_probs: &Tensor, feature_shape: Shape) -> Result<Tensor> {
        let g_logits = softmax2_backward(&pass.probs, grad_probs)?;
        let g2 = self.fc2.backward(&pass.hidden, &g_logits)?;
        self.fc2.weight.accumulate_grad(&g2.weight)?;
        self.fc2.bias.accumulate_grad(&g2.bias)?;
        let g_hpre = relu_backward(&pass.hidden_pre, &g2.input)?;
        let hid = self.fc1.outputs();
        let mut g_bias = Tensor::zeros(self.fc1.bias.shape());
        for row in g_hpre.data().chunks(hid) {
            for (b, &g) in g_bias.data_mut().iter_mut().zip(row) {
                *b += g;
            }
        }
        let c = feature_shape.c;
        let cell = c * POOLED_SIZE * POOLED_SIZE;
        let mut upstream: Vec<Tensor> = pass
            .pooled
            .iter()
            .map(|p| Tensor::zeros(p.values.shape()))
            .collect();
        if !pass.active.is_empty() {
            let mut ga = Vec::with_capacity(pass.active.len() * hid);
            for &i in &pass.active {
                ga.extend_from_slice(&g_hpre.data()[i * hid..(i + 1) * hid]);
            }
            let ga = Tensor::from_vec(Shape::new(pass.active.len(), hid, 1, 1), ga)?;
            let g1 = self.fc1.backward(&pass.x_active, &ga)?;
            self.fc1.weight.accumulate_grad(&g1.weight)?;
            for (k, &i) in pass.active.iter().enumerate() {
                upstream[i].data_mut().copy_from_slice(&g1.input.data()[k * cell..(k + 1) * cell]);
            }
        }
        self.fc1.bias.accumulate_grad(&g_bias)?;
        mask_roi_pool_backward(&pass.pooled, &upstream, feature_shape)
    }
}

/// Paints each pixel with its region's value.
pub fn paint_regions(mask: &RegionMask, values: &[f64]) -> SaliencyMap {
    mask.labels().map(|&l| values[l as usize])
}
