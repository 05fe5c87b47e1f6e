use std::fmt::Write as _;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::loss::{cross_entropy, edge_loss_with_grad, CE_EPS};
use super::region::{prepare_mask, HeadPass, PreparedMask};
use super::trunk::TrunkOutput;
use super::{accumulate, crop_plane, image_tensor, map_to_tensor, uncrop_plane, ContextPass, RexNet, CONTEXT_STRIDE};
use crate::error::{Error, Result};
use crate::net::downsample_gt;
use crate::plane::{ImagePlane, Plane};
use crate::segment::{region_label, RegionLabel, RegionMask};
use crate::tensor::{bilinear_upsample, bilinear_upsample_backward, sigmoid_backward, Sgd, Tensor};

const STAGE1_STREAM: u64 = 0x5354_4731;
const STAGE2_STREAM: u64 = 0x5354_4732;

/// One training tuple: image, binary ground truth and both region masks.
#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub image: ImagePlane,
    pub gt: Plane<bool>,
    pub superpixels: RegionMask,
    pub edges: RegionMask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub stage1_iterations: usize,
    pub stage2_iterations: usize,
    pub stage1_lr: f64,
    pub stage2_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lambda_e: f64,
    pub deep_supervision: bool,
    pub seed: u64,
    /// Iterations between in-memory snapshots restored on a non-finite loss.
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage1_iterations: 2000,
            stage2_iterations: 2000,
            stage1_lr: 0.01,
            stage2_lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            lambda_e: 0.1,
            deep_supervision: true,
            seed: 0,
            snapshot_every: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOptions {
    pub lambda_e: f64,
    pub deep_supervision: bool,
}

impl From<&TrainConfig> for LossOptions {
    fn from(c: &TrainConfig) -> Self {
        LossOptions {
            lambda_e: c.lambda_e,
            deep_supervision: c.deep_supervision,
        }
    }
}

/// Every stage-2 loss term. Branch terms are reported even when deep
/// supervision is off, but then they do not enter `total`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub branch_ce: [f64; 4],
    pub branch_edge: [f64; 4],
    pub context_ce: f64,
    pub context_edge: f64,
    pub fused_ce: f64,
    pub fused_edge: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub stage: u8,
    pub iteration: usize,
    pub learning_rate: f64,
    pub total: f64,
    pub terms: Option<LossTerms>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn totals(&self, stage: u8) -> Vec<f64> {
        self.rows.iter().filter(|r| r.stage == stage).map(|r| r.total).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("stage,iteration,learning_rate,total");
        for k in 1..=4 {
            let _ = write!(s, ",branch{k}_ce,branch{k}_edge");
        }
        s.push_str(",context_ce,context_edge,fused_ce,fused_edge\n");
        for r in &self.rows {
            let _ = write!(s, "{},{},{},{:.9}", r.stage, r.iteration, r.learning_rate, r.total);
            match &r.terms {
                Some(t) => {
                    for k in 0..4 {
                        let _ = write!(s, ",{:.9},{:.9}", t.branch_ce[k], t.branch_edge[k]);
                    }
                    let _ = write!(
                        s,
                        ",{:.9},{:.9},{:.9},{:.9}",
                        t.context_ce, t.context_edge, t.fused_ce, t.fused_edge
                    );
                }
                None => s.push_str(&",".repeat(12)),
            }
            s.push('\n');
        }
        s
    }
}

/// Cached stage-1 inputs: image tensor, both prepared masks and region labels.
#[derive(Clone, Debug)]
pub struct Stage1Item {
    pub image: Tensor,
    pub masks: Vec<PreparedMask>,
    pub labels: Vec<Vec<RegionLabel>>,
}

pub fn prepare_stage1(sample: &TrainingSample) -> Result<Stage1Item> {
    let mut masks = Vec::with_capacity(2);
    let mut labels = Vec::with_capacity(2);
    for m in [&sample.superpixels, &sample.edges] {
        if m.labels().dims() != sample.image.dims() {
            return Err(Error::shape("mask vs image", sample.image.dims(), m.labels().dims()));
        }
        labels.push(region_label(m, &sample.gt)?);
        masks.push(prepare_mask(m)?);
    }
    Ok(Stage1Item {
        image: image_tensor(&sample.image),
        masks,
        labels,
    })
}

fn stage1_forward(net: &RexNet, item: &Stage1Item) -> Result<(TrunkOutput, Vec<HeadPass>)> {
    let trunk = net.trunk.forward(&item.image)?;
    let passes = item
        .masks
        .iter()
        .map(|m| net.head.forward(trunk.roi_features(), m))
        .collect::<Result<Vec<_>>>()?;
    Ok((trunk, passes))
}

/// Mean softmax loss over labelled regions of both masks and its gradient
/// with respect to the class probabilities.
fn stage1_objective(passes: &[HeadPass], labels: &[Vec<RegionLabel>]) -> (f64, Vec<Tensor>) {
    let count: usize = labels
        .iter()
        .flatten()
        .filter(|l| **l != RegionLabel::Ignore)
        .count();
    let mut loss = 0.0;
    let grads = passes
        .iter()
        .zip(labels)
        .map(|(pass, lab)| {
            let mut g = Tensor::zeros(pass.probs.shape());
            if count == 0 {
                return g;
            }
            for (r, l) in lab.iter().enumerate() {
                let class = match l {
                    RegionLabel::Salient => 1,
                    RegionLabel::Background => 0,
                    RegionLabel::Ignore => continue,
                };
                let p = pass.probs.data()[2 * r + class];
                let pc = p.clamp(CE_EPS, 1.0);
                loss -= pc.ln();
                if pc == p {
                    g.data_mut()[2 * r + class] = -1.0 / (p * count as f64);
                }
            }
            g
        })
        .collect();
    (if count == 0 { 0.0 } else { loss / count as f64 }, grads)
}

pub fn stage1_loss(net: &RexNet, item: &Stage1Item) -> Result<f64> {
    let (_, passes) = stage1_forward(net, item)?;
    Ok(stage1_objective(&passes, &item.labels).0)
}

/// Forward and backward for one image; gradients accumulate into the trunk
/// and region head.
pub(crate) fn stage1_step(net: &mut RexNet, item: &Stage1Item) -> Result<f64> {
    let (trunk, passes) = stage1_forward(net, item)?;
    let (loss, grads) = stage1_objective(&passes, &item.labels);
    let fshape = trunk.roi_features().shape();
    let mut g_feat = Tensor::zeros(fshape);
    for (pass, g) in passes.iter().zip(&grads) {
        g_feat.add_assign(&net.head.backward(pass, g, fshape)?)?;
    }
    net.trunk.backward(&trunk, &g_feat)?;
    Ok(loss)
}

/// Frozen-trunk inputs for stage 2: branch taps, `S_S`, `S_E`, ground truth
/// and edge-region labels at full and 1/8 resolution.
#[derive(Clone, Debug)]
pub struct Stage2Item {
    pub taps: Vec<Tensor>,
    pub s_s: Tensor,
    pub s_e: Tensor,
    pub gt: Vec<f64>,
    pub gt_coarse: Vec<f64>,
    pub edge: Vec<u32>,
    pub edge_coarse: Vec<u32>,
    pub width: usize,
    pub height: usize,
    pub padded_width: usize,
    pub padded_height: usize,
}

pub fn prepare_stage2(net: &RexNet, sample: &TrainingSample) -> Result<Stage2Item> {
    let (w, h) = sample.image.dims();
    if sample.gt.dims() != (w, h) {
        return Err(Error::shape("ground truth vs image", (w, h), sample.gt.dims()));
    }
    let trunk = net.trunk_forward(&sample.image)?;
    let (_, s_s) = net.region_saliency(&trunk, &prepare_mask(&sample.superpixels)?)?;
    let (_, s_e) = net.region_saliency(&trunk, &prepare_mask(&sample.edges)?)?;
    let s = trunk.input.shape();
    let (wp, hp) = (s.w, s.h);
    let (wc, hc) = (wp / CONTEXT_STRIDE, hp / CONTEXT_STRIDE);
    let gt_coarse = downsample_gt(&sample.gt.pad_replicate(wp, hp), wc, hc)?;
    let edge_coarse = sample.edges.labels().pad_replicate(wp, hp).resample_nearest(wc, hc);
    let as_f = |b: &bool| *b as u8 as f64;
    Ok(Stage2Item {
        taps: trunk.branch_taps().into_iter().cloned().collect(),
        s_s: map_to_tensor(&s_s),
        s_e: map_to_tensor(&s_e),
        gt: sample.gt.data().iter().map(as_f).collect(),
        gt_coarse: gt_coarse.data().iter().map(as_f).collect(),
        edge: sample.edges.labels().data().to_vec(),
        edge_coarse: edge_coarse.into_vec(),
        width: w,
        height: h,
        padded_width: wp,
        padded_height: hp,
    })
}

pub(crate) struct Stage2Pass {
    pub ctx: ContextPass,
    fuse_in: Tensor,
    pub s: Tensor,
}

pub(crate) fn stage2_forward(net: &RexNet, item: &Stage2Item) -> Result<Stage2Pass> {
    let taps: Vec<&Tensor> = item.taps.iter().collect();
    let ctx = net.context.forward(&taps)?;
    let up = crop_plane(&bilinear_upsample(&ctx.s_c, CONTEXT_STRIDE)?, item.height, item.width);
    let (fuse_in, s) = net.fuse_forward(&item.s_s, &item.s_e, &up)?;
    Ok(Stage2Pass { ctx, fuse_in, s })
}

struct Stage2Grads {
    maps: Vec<Option<Tensor>>,
    s_c: Tensor,
    s: Tensor,
}

fn supervised(pred: &Tensor, gt: &[f64], labels: &[u32], lambda: f64) -> (f64, f64, Tensor) {
    let (ce, g_ce) = cross_entropy(pred.data(), gt);
    let (el, g_el) = edge_loss_with_grad(pred.data(), labels);
    let g: Vec<f64> = g_ce.iter().zip(&g_el).map(|(a, b)| a + lambda * b).collect();
    (ce, el, Tensor::from_vec(pred.shape(), g).expect("sized"))
}

fn stage2_objective(pass: &Stage2Pass, item: &Stage2Item, opts: LossOptions) -> (LossTerms, Stage2Grads) {
    let lambda = opts.lambda_e;
    let mut t = LossTerms::default();
    let mut maps = Vec::with_capacity(4);
    for (k, b) in pass.ctx.branches.iter().enumerate() {
        let (ce, el, g) = supervised(&b.map, &item.gt_coarse, &item.edge_coarse, lambda);
        t.branch_ce[k] = ce;
        t.branch_edge[k] = el;
        if opts.deep_supervision {
            t.total += ce + lambda * el;
            maps.push(Some(g));
        } else {
            maps.push(None);
        }
    }
    let (ce, el, g_sc) = supervised(&pass.ctx.s_c, &item.gt_coarse, &item.edge_coarse, lambda);
    t.context_ce = ce;
    t.context_edge = el;
    t.total += ce + lambda * el;
    let (ce, el, g_s) = supervised(&pass.s, &item.gt, &item.edge, lambda);
    t.fused_ce = ce;
    t.fused_edge = el;
    t.total += ce + lambda * el;
    (t, Stage2Grads { maps, s_c: g_sc, s: g_s })
}

pub fn stage2_loss(net: &RexNet, item: &Stage2Item, opts: LossOptions) -> Result<LossTerms> {
    let pass = stage2_forward(net, item)?;
    Ok(stage2_objective(&pass, item, opts).0)
}

fn stage2_backward(net: &mut RexNet, item: &Stage2Item, pass: &Stage2Pass, grads: &Stage2Grads) -> Result<()> {
    let g_logit = sigmoid_backward(&pass.s, &grads.s)?;
    let gf = net.fuse.backward(&pass.fuse_in, &g_logit)?;
    accumulate(&mut net.fuse, &gf)?;
    let parts = gf.input.split_channels(&[1, 1, 1])?;
    let g_up = uncrop_plane(&parts[2], item.padded_height, item.padded_width);
    let mut g_sc = bilinear_upsample_backward(pass.ctx.s_c.shape(), CONTEXT_STRIDE, &g_up)?;
    g_sc.add_assign(&grads.s_c)?;
    let taps: Vec<&Tensor> = item.taps.iter().collect();
    net.context.backward(&taps, &pass.ctx, &grads.maps, &g_sc)
}

pub(crate) fn stage2_step(net: &mut RexNet, item: &Stage2Item, opts: LossOptions) -> Result<LossTerms> {
    let pass = stage2_forward(net, item)?;
    let (terms, grads) = stage2_objective(&pass, item, opts);
    stage2_backward(net, item, &pass, &grads)?;
    Ok(terms)
}

/// Seeded epoch-wise shuffling with batch size 1.
struct Sampler {
    rng: ChaCha8Rng,
    n: usize,
    order: Vec<usize>,
}

impl Sampler {
    fn new(seed: u64, n: usize) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            n,
            order: Vec::new(),
        }
    }

    fn next(&mut self) -> usize {
        if self.order.is_empty() {
            self.order = (0..self.n).rev().collect();
            self.order.shuffle(&mut self.rng);
        }
        self.order.pop().expect("non-empty")
    }
}

fn run_stage<T>(
    net: &mut RexNet,
    items: &[T],
    stage: u8,
    iterations: usize,
    cfg: &TrainConfig,
    log: &mut TrainingLog,
    mut step: impl FnMut(&mut RexNet, &T) -> Result<(f64, Option<LossTerms>)>,
) -> Result<()> {
    if items.is_empty() || iterations == 0 {
        return Ok(());
    }
    let (lr, stream) = if stage == 1 {
        (cfg.stage1_lr, STAGE1_STREAM)
    } else {
        (cfg.stage2_lr, STAGE2_STREAM)
    };
    let mut sampler = Sampler::new(cfg.seed ^ stream, items.len());
    let mut opt = Sgd::new(lr, cfg.momentum, cfg.weight_decay);
    let mut snapshot = net.clone();
    for it in 0..iterations {
        let item = &items[sampler.next()];
        let outcome = step(net, item).and_then(|(total, terms)| {
            if !total.is_finite() {
                return Err(Error::NonFinite(format!("stage {stage} loss at iteration {it}")));
            }
            let mut params = if stage == 1 {
                net.stage1_params_mut()
            } else {
                net.stage2_params_mut()
            };
            opt.step(&mut params)?;
            Ok((total, terms))
        });
        let (total, terms) = match outcome {
            Ok(v) => v,
            Err(e) => {
                *net = snapshot;
                return Err(e);
            }
        };
        log.rows.push(LogRow {
            stage,
            iteration: it,
            learning_rate: lr,
            total,
            terms,
        });
        if cfg.snapshot_every > 0 && (it + 1) % cfg.snapshot_every == 0 {
            snapshot = net.clone();
            info!("stage {stage} iteration {}: loss {total:.5}", it + 1);
        }
    }
    Ok(())
}

/// Trains the trunk and region head on per-region softmax loss.
pub fn train_stage1(net: &mut RexNet, items: &[Stage1Item], cfg: &TrainConfig, log: &mut TrainingLog) -> Result<()> {
    run_stage(net, items, 1, cfg.stage1_iterations, cfg, log, |net, item| {
        Ok((stage1_step(net, item)?, None))
    })
}

/// Trains the branches and both fusion heads with the trunk and region head
/// frozen; `items` must come from [`prepare_stage2`] with the same trunk.
pub fn train_stage2(net: &mut RexNet, items: &[Stage2Item], cfg: &TrainConfig, log: &mut TrainingLog) -> Result<()> {
    let opts = LossOptions::from(cfg);
    run_stage(net, items, 2, cfg.stage2_iterations, cfg, log, |net, item| {
        let t = stage2_step(net, item, opts)?;
        Ok((t.total, Some(t)))
    })
}

/// Stage 1, then stage 2 on features cached from the frozen stage-1 trunk.
/// On a non-finite loss the network is restored to its last snapshot and the
/// error is returned.
pub fn train_two_stage(net: &mut RexNet, samples: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainingLog> {
    let mut log = TrainingLog::default();
    let s1 = samples.par_iter().map(prepare_stage1).collect::<Result<Vec<_>>>()?;
    train_stage1(net, &s1, cfg, &mut log)?;
    drop(s1);
    let frozen: &RexNet = net;
    let s2 = samples
        .par_iter()
        .map(|s| prepare_stage2(frozen, s))
        .collect::<Result<Vec<_>>>()?;
    train_stage2(net, &s2, cfg, &mut log)?;
    Ok(log)
}
