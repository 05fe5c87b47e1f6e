//! The micro RexNet: a shared four-stage trunk, a RegionNet head over
//! mask-pooled region features, a four-branch ContextNet and the final
//! three-map fusion.

mod checkpoint;
mod context;
mod gradcheck;
mod loss;
mod region;
mod train;
mod trunk;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MANIFEST, CHECKPOINT_WEIGHTS};
pub use context::{Branch, BranchPass, ContextNet, ContextPass, BRANCH_STRIDES};
pub use gradcheck::{offset_zero_biases, stage1_gradcheck, stage2_gradcheck, NetGradCheck};
pub use loss::{
    cross_entropy, cross_entropy_loss, deep_supervised_loss, downsample_gt, edge_loss, edge_loss_labels,
    edge_loss_with_grad, CE_EPS,
};
pub use region::{paint_regions, prepare_mask, HeadPass, PreparedMask, RegionHead, ROI_STRIDE};
pub use train::{
    prepare_stage1, prepare_stage2, stage1_loss, stage2_loss, train_stage1, train_stage2, train_two_stage,
    LossOptions, LossTerms, Stage1Item, Stage2Item, TrainConfig, TrainingLog, TrainingSample,
};
pub use trunk::{Trunk, TrunkOutput};

use crate::error::{Error, Result};
use crate::plane::{ImagePlane, SaliencyMap};
use crate::segment::RegionMask;
use crate::tensor::{bilinear_upsample, sigmoid_forward, ConvGrads, ConvLayer, Shape, Tensor};

/// Spatial stride of the branch outputs and of `S_C`.
pub const CONTEXT_STRIDE: usize = 8;

/// What the branch fusion head sees: the four branch maps or the concatenated
/// branch features.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FusionVariant {
    Maps,
    Features,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub trunk_channels: [usize; 4],
    pub branch_channels: [usize; 3],
    pub branch_head_channels: usize,
    pub branch_dilation: usize,
    pub region_hidden: usize,
    pub fusion: FusionVariant,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            trunk_channels: [8, 16, 32, 32],
            branch_channels: [64, 64, 128],
            branch_head_channels: 128,
            branch_dilation: 2,
            region_hidden: 256,
            fusion: FusionVariant::Maps,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RexNet {
    pub config: NetConfig,
    pub trunk: Trunk,
    pub head: RegionHead,
    pub context: ContextNet,
    /// Fuses `(S_S, S_E, S_C)` into `S`.
    pub fuse: ConvLayer,
}

/// All maps produced for one image. Full-resolution maps match the image dims.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub s_s: SaliencyMap,
    pub s_e: SaliencyMap,
    /// `S_C` upsampled to full resolution.
    pub s_c: SaliencyMap,
    pub s: SaliencyMap,
    /// Branch outputs at 1/8 scale.
    pub branch_maps: Vec<SaliencyMap>,
    pub s_c_coarse: SaliencyMap,
}

pub(crate) fn accumulate(layer: &mut ConvLayer, g: &ConvGrads) -> Result<()> {
    layer.weight.accumulate_grad(&g.weight)?;
    layer.bias.accumulate_grad(&g.bias)
}

/// `(1, 3, h', w')` tensor of `rgb − 0.5`, replication-padded so both dims are
/// multiples of 8.
pub fn image_tensor(image: &ImagePlane) -> Tensor {
    let p = image.pad_to_multiple(CONTEXT_STRIDE);
    let (w, h) = p.dims();
    let mut data = vec![0.0; 3 * w * h];
    for (i, px) in p.data().iter().enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = px[c] - 0.5;
        }
    }
    Tensor::from_vec(Shape::new(1, 3, h, w), data).expect("sized")
}

pub fn tensor_to_map(t: &Tensor) -> SaliencyMap {
    let s = t.shape();
    SaliencyMap::from_vec(s.w, s.h, t.channel(0, 0).to_vec()).expect("sized")
}

pub fn map_to_tensor(m: &SaliencyMap) -> Tensor {
    Tensor::from_vec(Shape::new(1, 1, m.height(), m.width()), m.data().to_vec()).expect("sized")
}

/// Top-left `h × w` window of a single-plane tensor.
pub(crate) fn crop_plane(t: &Tensor, h: usize, w: usize) -> Tensor {
    let s = t.shape();
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        data.extend_from_slice(&t.data()[y * s.w..y * s.w + w]);
    }
    Tensor::from_vec(Shape::new(1, 1, h, w), data).expect("sized")
}

/// Adjoint of [`crop_plane`]: zero-pads back to `hp × wp`.
pub(crate) fn uncrop_plane(t: &Tensor, hp: usize, wp: usize) -> Tensor {
    let s = t.shape();
    let mut out = Tensor::zeros(Shape::new(1, 1, hp, wp));
    for y in 0..s.h {
        out.data_mut()[y * wp..y * wp + s.w].copy_from_slice(&t.data()[y * s.w..(y + 1) * s.w]);
    }
    out
}

fn stage1_params<'a>(trunk: &'a mut Trunk, head: &'a mut RegionHead) -> Vec<&'a mut Tensor> {
    let mut out = Vec::new();
    for c in &mut trunk.convs {
        out.push(&mut c.weight);
        out.push(&mut c.bias);
    }
    out.push(&mut head.fc1.weight);
    out.push(&mut head.fc1.bias);
    out.push(&mut head.fc2.weight);
    out.push(&mut head.fc2.bias);
    out
}

fn stage2_params<'a>(context: &'a mut ContextNet, fuse: &'a mut ConvLayer) -> Vec<&'a mut Tensor> {
    let mut out = Vec::new();
    for b in &mut context.branches {
        for c in b.convs.iter_mut().chain([&mut b.head1, &mut b.head2]) {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
    }
    for c in [&mut context.fusion, fuse] {
        out.push(&mut c.weight);
        out.push(&mut c.bias);
    }
    out
}

impl RexNet {
    /// All-zero parameters.
    pub fn zeroed(config: NetConfig) -> Result<Self> {
        if config.branch_dilation == 0 {
            return Err(Error::Config("branch dilation must be positive".into()));
        }
        let trunk = Trunk::new(config.trunk_channels)?;
        let c = config.trunk_channels;
        let tap_channels = [c[0], c[1], c[2], c[3]];
        let branches = (0..4)
            .map(|k| {
                Branch::new(
                    tap_channels[k],
                    BRANCH_STRIDES[k],
                    config.branch_channels,
                    config.branch_head_channels,
                    config.branch_dilation,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let fusion_in = match config.fusion {
            FusionVariant::Maps => 4,
            FusionVariant::Features => 4 * config.branch_head_channels,
        };
        Ok(RexNet {
            head: RegionHead::new(trunk.out_channels(), config.region_hidden),
            trunk,
            context: ContextNet {
                branches,
                fusion: ConvLayer::new(fusion_in, 1, 1, 1, 0, 1)?,
                variant: config.fusion,
            },
            fuse: ConvLayer::new(3, 1, 1, 1, 0, 1)?,
            config,
        })
    }

    /// He-initialised convolutions and fully-connected layers; both fusion
    /// heads start as an equal-weight average of their inputs.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let mut net = RexNet::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in &mut net.trunk.convs {
            c.init_he(&mut rng);
        }
        net.head.init(&mut rng);
        for b in &mut net.context.branches {
            b.init(&mut rng);
        }
        for fusion in [&mut net.context.fusion, &mut net.fuse] {
            let n = fusion.in_channels() as f64;
            fusion.weight = Tensor::filled(fusion.weight.shape(), 1.0 / n);
        }
        Ok(net)
    }

    fn conv_params<'a>(prefix: &str, c: &'a ConvLayer, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((format!("{prefix}.weight"), &c.weight));
        out.push((format!("{prefix}.bias"), &c.bias));
    }

    /// Parameters in a fixed order with stable names.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.trunk.convs.iter().enumerate() {
            Self::conv_params(&format!("trunk.conv{}_{}", i / 2 + 1, i % 2 + 1), c, &mut out);
        }
        out.push(("head.fc1.weight".into(), &self.head.fc1.weight));
        out.push(("head.fc1.bias".into(), &self.head.fc1.bias));
        out.push(("head.fc2.weight".into(), &self.head.fc2.weight));
        out.push(("head.fc2.bias".into(), &self.head.fc2.bias));
        out.extend(self.stage2_named());
        out
    }

    fn stage2_named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (k, b) in self.context.branches.iter().enumerate() {
            for (i, c) in b.convs.iter().enumerate() {
                Self::conv_params(&format!("branch{}.conv{}", k + 1, i + 1), c, &mut out);
            }
            Self::conv_params(&format!("branch{}.head1", k + 1), &b.head1, &mut out);
            Self::conv_params(&format!("branch{}.head2", k + 1), &b.head2, &mut out);
        }
        Self::conv_params("context.fusion", &self.context.fusion, &mut out);
        Self::conv_params("fuse", &self.fuse, &mut out);
        out
    }

    /// Same order as [`RexNet::named_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = stage1_params(&mut self.trunk, &mut self.head);
        out.extend(stage2_params(&mut self.context, &mut self.fuse));
        out
    }

    /// Trunk and region head.
    pub fn stage1_params_mut(&mut self) -> Vec<&mut Tensor> {
        stage1_params(&mut self.trunk, &mut self.head)
    }

    /// Branches and both fusion heads.
    pub fn stage2_params_mut(&mut self) -> Vec<&mut Tensor> {
        stage2_params(&mut self.context, &mut self.fuse)
    }

    pub fn stage2_param_names(&self) -> Vec<String> {
        self.stage2_named().into_iter().map(|(n, _)| n).collect()
    }

    pub fn trunk_forward(&self, image: &ImagePlane) -> Result<TrunkOutput> {
        self.trunk.forward(&image_tensor(image))
    }

    /// Salient-class probability per region and the painted map.
    pub fn region_saliency(&self, trunk: &TrunkOutput, prepared: &PreparedMask) -> Result<(Vec<f64>, SaliencyMap)> {
        let pass = self.head.forward(trunk.roi_features(), prepared)?;
        let probs = pass.salient_probs();
        let map = paint_regions(&prepared.mask, &probs);
        Ok((probs, map))
    }

    /// 1×1 fusion over full-resolution `(S_S, S_E, S_C↑)` single-plane tensors.
    pub fn fuse_forward(&self, s_s: &Tensor, s_e: &Tensor, s_c_up: &Tensor) -> Result<(Tensor, Tensor)> {
        let input = Tensor::concat_channels(&[s_s, s_e, s_c_up])?;
        let s = sigmoid_forward(&self.fuse.forward(&input)?);
        Ok((input, s))
    }

    pub fn predict(&self, image: &ImagePlane, superpixels: &RegionMask, edges: &RegionMask) -> Result<Prediction> {
        let (w, h) = image.dims();
        for m in [superpixels, edges] {
            if m.labels().dims() != (w, h) {
                return Err(Error::shape("mask vs image", (w, h), m.labels().dims()));
            }
        }
        let trunk = self.trunk_forward(image)?;
        let (_, s_s) = self.region_saliency(&trunk, &prepare_mask(superpixels)?)?;
        let (_, s_e) = self.region_saliency(&trunk, &prepare_mask(edges)?)?;
        let ctx = self.context.forward(&trunk.branch_taps())?;
        let up = crop_plane(&bilinear_upsample(&ctx.s_c, CONTEXT_STRIDE)?, h, w);
        let (_, s) = self.fuse_forward(&map_to_tensor(&s_s), &map_to_tensor(&s_e), &up)?;
        Ok(Prediction {
            s_s,
            s_e,
            s_c: tensor_to_map(&up),
            s: tensor_to_map(&s),
            branch_maps: ctx.branches.iter().map(|b| tensor_to_map(&b.map)).collect(),
            s_c_coarse: tensor_to_map(&ctx.s_c),
        })
    }
}

/// Region probabilities and the region-painted saliency map for one mask.
pub fn regionnet_forward(net: &RexNet, image: &ImagePlane, mask: &RegionMask) -> Result<(Vec<f64>, SaliencyMap)> {
    if mask.labels().dims() != image.dims() {
        return Err(Error::shape("mask vs image", image.dims(), mask.labels().dims()));
    }
    let trunk = net.trunk_forward(image)?;
    net.region_saliency(&trunk, &prepare_mask(mask)?)
}

/// The four branch maps and `S_C`, all at 1/8 scale.
pub fn contextnet_forward(net: &RexNet, image: &ImagePlane) -> Result<(Vec<SaliencyMap>, SaliencyMap)> {
    let trunk = net.trunk_forward(image)?;
    let ctx = net.context.forward(&trunk.branch_taps())?;
    Ok((ctx.branches.iter().map(|b| tensor_to_map(&b.map)).collect(), tensor_to_map(&ctx.s_c)))
}

/// Fuses three saliency maps of equal size into `S`.
pub fn fuse_saliency(net: &RexNet, s_s: &SaliencyMap, s_e: &SaliencyMap, s_c: &SaliencyMap) -> Result<SaliencyMap> {
    if s_s.dims() != s_e.dims() || s_s.dims() != s_c.dims() {
        return Err(Error::ShapeMismatch {
            context: "fusion inputs",
            expected: format!("{:?}", s_s.dims()),
            actual: format!("{:?} / {:?}", s_e.dims(), s_c.dims()),
        });
    }
    let (_, s) = net.fuse_forward(&map_to_tensor(s_s), &map_to_tensor(s_e), &map_to_tensor(s_c))?;
    Ok(tensor_to_map(&s))
}
