//! Finite-difference suite: every layer on randomized instances, then both
//! training losses of a full network on a synthetic 32×32 scene.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use crate::corpus::{render_sample, sample_rng};
use crate::error::Result;
use crate::net::{
    cross_entropy, edge_loss_with_grad, offset_zero_biases, prepare_stage1, prepare_stage2, stage1_gradcheck,
    stage2_gradcheck, LossOptions, RexNet, TrainingSample,
};
use crate::plane::Plane;
use crate::roipool::{mask_roi_pool_backward, mask_roi_pool_forward, rect_to_feature};
use crate::segment::{downsample_mask, edge_regions, region_rois, slic_superpixels, thin_edges, RegionMask, RoI};
use crate::tensor::{
    bilinear_upsample, bilinear_upsample_backward, finite_difference_check, maxpool2x2_backward, maxpool2x2_forward,
    relu_backward, relu_forward, sigmoid_backward, sigmoid_forward, softmax2_backward, softmax2_forward, ConvLayer,
    GradCheckReport, Linear, Shape, Tensor,
};

/// Spatial size of every randomized instance.
pub const SUITE_SIZE: usize = 32;

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub entries: Vec<(String, GradCheckReport)>,
    /// Network probes redrawn because they straddled a kink.
    pub rejected: usize,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|(_, r)| r.passed && r.checked > 0)
    }

    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|(_, r)| r.max_rel_error).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,checked,max_rel_error,tolerance,passed\n");
        for (name, r) in &self.entries {
            out.push_str(&format!(
                "{name},{},{:e},{:e},{}\n",
                r.checked, r.max_rel_error, r.tolerance, r.passed
            ));
        }
        out
    }
}

/// Distinct values at least 0.01 apart and 0.005 away from zero, so ReLU
/// signs and max winners are stable under the probe step.
fn spaced(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.numel();
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - (n / 2) as f64) * 0.01 + 0.005).collect();
    v.shuffle(rng);
    Tensor::from_vec(shape, v).expect("sized")
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

struct Ctx {
    rng: ChaCha8Rng,
    step: f64,
    tol: f64,
    entries: Vec<(String, GradCheckReport)>,
}

impl Ctx {
    fn check(&mut self, name: &str, params: &Tensor, analytic: &Tensor, loss: impl Fn(&Tensor) -> f64) {
        let shape = params.shape();
        let rep = finite_difference_check(
            |p| loss(&Tensor::from_vec(shape, p.to_vec()).expect("sized")),
            params.data(),
            analytic.data(),
            self.step,
            self.tol,
        );
        self.entries.push((name.to_string(), rep));
    }

    /// `L = Σ r ⊙ f(x)` for a parameter-free elementwise or pooling map.
    fn map(&mut self, name: &str, x: Tensor, f: impl Fn(&Tensor) -> Tensor, back: impl Fn(&Tensor, &Tensor) -> Tensor) {
        let r = Tensor::randn(f(&x).shape(), 1.0, &mut self.rng);
        let g = back(&x, &r);
        self.check(name, &x, &g, |t| dot(&f(t), &r));
    }

    fn conv(&mut self, name: &str, layer: ConvLayer, input: Shape) -> Result<()> {
        let x = Tensor::randn(input, 1.0, &mut self.rng);
        let r = Tensor::randn(layer.forward(&x)?.shape(), 1.0, &mut self.rng);
        let g = layer.backward(&x, &r)?;
        self.check(&format!("{name}.input"), &x, &g.input, |t| dot(&layer.forward(t).expect("shape"), &r));
        self.check(&format!("{name}.weight"), &layer.weight, &g.weight, |w| {
            let mut l = layer.clone();
            l.weight = w.clone();
            dot(&l.forward(&x).expect("shape"), &r)
        });
        self.check(&format!("{name}.bias"), &layer.bias, &g.bias, |b| {
            let mut l = layer.clone();
            l.bias = b.clone();
            dot(&l.forward(&x).expect("shape"), &r)
        });
        Ok(())
    }

    fn linear(&mut self, inputs: Shape, outputs: usize) -> Result<()> {
        let mut layer = Linear::new(inputs.c * inputs.plane(), outputs);
        layer.init_he(&mut self.rng);
        layer.bias = Tensor::randn(layer.bias.shape(), 0.1, &mut self.rng);
        let x = Tensor::randn(inputs, 1.0, &mut self.rng);
        let r = Tensor::randn(layer.forward(&x)?.shape(), 1.0, &mut self.rng);
        let g = layer.backward(&x, &r)?;
        self.check("linear.input", &x, &g.input, |t| dot(&layer.forward(t).expect("shape"), &r));
        self.check("linear.weight", &layer.weight, &g.weight, |w| {
            let mut l = layer.clone();
            l.weight = w.clone();
            dot(&l.forward(&x).expect("shape"), &r)
        });
        self.check("linear.bias", &layer.bias, &g.bias, |b| {
            let mut l = layer.clone();
            l.bias = b.clone();
            dot(&l.forward(&x).expect("shape"), &r)
        });
        Ok(())
    }

    fn random_conv(&mut self, cin: usize, cout: usize, k: usize, stride: usize, pad: usize, dil: usize) -> Result<ConvLayer> {
        let mut l = ConvLayer::new(cin, cout, k, stride, pad, dil)?;
        l.init_he(&mut self.rng);
        l.bias = Tensor::randn(l.bias.shape(), 0.1, &mut self.rng);
        Ok(l)
    }
}

fn random_regions(size: usize, regions: usize, rng: &mut ChaCha8Rng) -> RegionMask {
    let seeds: Vec<(f64, f64)> = (0..regions)
        .map(|_| (rng.random_range(0.0..size as f64), rng.random_range(0.0..size as f64)))
        .collect();
    let labels = Plane::from_fn(size, size, |x, y| {
        let d = |s: &(f64, f64)| (s.0 - x as f64).powi(2) + (s.1 - y as f64).powi(2);
        (0..seeds.len()).min_by(|&a, &b| d(&seeds[a]).total_cmp(&d(&seeds[b]))).expect("non-empty") as u32
    });
    RegionMask::from_components(&labels)
}

fn layer_checks(ctx: &mut Ctx) -> Result<()> {
    let n = SUITE_SIZE;
    let l = ctx.random_conv(2, 3, 3, 1, 1, 1)?;
    ctx.conv("conv3x3", l, Shape::new(1, 2, n, n))?;
    let l = ctx.random_conv(2, 3, 3, 2, 2, 2)?;
    ctx.conv("conv3x3_dilated_strided", l, Shape::new(1, 2, n, n))?;
    let l = ctx.random_conv(3, 2, 1, 1, 0, 1)?;
    ctx.conv("conv1x1", l, Shape::new(1, 3, n, n))?;
    ctx.linear(Shape::new(2, 2, 7, 7), 5)?;

    let s = Shape::new(1, 2, n, n);
    let x = spaced(s, &mut ctx.rng);
    ctx.map("relu", x, relu_forward, |x, r| relu_backward(x, r).expect("shape"));
    let x = Tensor::randn(s, 2.0, &mut ctx.rng);
    ctx.map("sigmoid", x, sigmoid_forward, |x, r| sigmoid_backward(&sigmoid_forward(x), r).expect("shape"));
    let x = Tensor::randn(s, 2.0, &mut ctx.rng);
    ctx.map(
        "softmax2",
        x,
        |x| softmax2_forward(x).expect("2 channels"),
        |x, r| softmax2_backward(&softmax2_forward(x).expect("2 channels"), r).expect("shape"),
    );
    for (name, dims) in [("maxpool2x2", n), ("maxpool2x2_odd", n - 1)] {
        let x = spaced(Shape::new(1, 2, dims, dims), &mut ctx.rng);
        ctx.map(name, x, |x| maxpool2x2_forward(x).output, |x, r| {
            maxpool2x2_backward(&maxpool2x2_forward(x), r).expect("shape")
        });
    }
    let x = Tensor::randn(Shape::new(1, 2, n / 8, n / 8), 1.0, &mut ctx.rng);
    ctx.map("bilinear_upsample_x8", x, |x| bilinear_upsample(x, 8).expect("factor"), |x, r| {
        bilinear_upsample_backward(x.shape(), 8, r).expect("shape")
    });

    let mask = random_regions(n, 10, &mut ctx.rng);
    let coarse = downsample_mask(&mask, 4)?;
    let (fw, fh) = coarse.labels.dims();
    let rois: Vec<RoI> = region_rois(&mask)
        .into_iter()
        .map(|r| RoI { region_id: r.region_id, rect: rect_to_feature(r.rect, 4, fw, fh) })
        .collect();
    let x = spaced(Shape::new(1, 2, fh, fw), &mut ctx.rng);
    let pooled = mask_roi_pool_forward(&x, &rois, &coarse.labels, 3)?;
    let ups: Vec<Tensor> = pooled.iter().map(|p| Tensor::randn(p.values.shape(), 1.0, &mut ctx.rng)).collect();
    let g = mask_roi_pool_backward(&pooled, &ups, x.shape())?;
    ctx.check("mask_roi_pool", &x, &g, |t| {
        mask_roi_pool_forward(t, &rois, &coarse.labels, 3)
            .expect("shape")
            .iter()
            .zip(&ups)
            .map(|(p, u)| dot(&p.values, u))
            .sum()
    });

    let shape = Shape::new(1, 1, n, n);
    let pred = Tensor::uniform(shape, 0.05, 0.95, &mut ctx.rng);
    let gt: Vec<f64> = (0..n * n).map(|_| ctx.rng.random_bool(0.4) as u8 as f64).collect();
    let (_, g) = cross_entropy(pred.data(), &gt);
    ctx.check("cross_entropy", &pred, &Tensor::from_vec(shape, g)?, |p| cross_entropy(p.data(), &gt).0);
    let labels = random_regions(n, 6, &mut ctx.rng);
    let labels = labels.labels().data().to_vec();
    let (_, g) = edge_loss_with_grad(pred.data(), &labels);
    ctx.check("edge_loss", &pred, &Tensor::from_vec(shape, g)?, |p| edge_loss_with_grad(p.data(), &labels).0);
    Ok(())
}

fn network_sample(cfg: &RunConfig, seed: u64) -> Result<TrainingSample> {
    let s = render_sample(SUITE_SIZE, &mut sample_rng(seed, 0))?;
    let slic = crate::segment::SlicParams { regions: cfg.superpixels.min(SUITE_SIZE * SUITE_SIZE / 16), ..cfg.slic_params() };
    let superpixels = slic_superpixels(&s.image, slic)?;
    let edges = edge_regions(&thin_edges(&s.edge_prob, cfg.edge_threshold));
    Ok(TrainingSample { image: s.image, gt: s.gt, superpixels, edges })
}

/// Runs every layer check and both network checks with the configured
/// architecture, probe step and tolerance.
pub fn gradient_suite(cfg: &RunConfig, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut ctx = Ctx {
        rng: ChaCha8Rng::seed_from_u64(seed),
        step: cfg.gradcheck_step,
        tol: cfg.gradcheck_tolerance,
        entries: Vec::new(),
    };
    layer_checks(&mut ctx)?;

    let sample = network_sample(cfg, seed)?;
    let mut net = RexNet::new(cfg.net_config(), seed)?;
    offset_zero_biases(&mut net, 0.01);
    let per = cfg.gradcheck_samples;
    let s1 = stage1_gradcheck(&net, &prepare_stage1(&sample)?, per, ctx.step, ctx.tol, seed)?;
    let item = prepare_stage2(&net, &sample)?;
    let opts = LossOptions { lambda_e: cfg.lambda_e.max(0.1), deep_supervision: true };
    let s2 = stage2_gradcheck(&net, &item, opts, per, ctx.step, ctx.tol, seed)?;
    let mut entries = ctx.entries;
    for (prefix, r) in [("stage1_loss", &s1), ("stage2_loss", &s2)] {
        entries.extend(r.per_tensor.iter().map(|(n, rep)| (format!("{prefix}:{n}"), rep.clone())));
    }
    Ok(SuiteReport { entries, rejected: s1.rejected + s2.rejected, elapsed: start.elapsed() })
}
