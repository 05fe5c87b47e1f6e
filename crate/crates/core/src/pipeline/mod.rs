//! Dataset-level commands: corpus generation, segmentation, training,
//! prediction, depth refinement, evaluation and gradient checking.
//!
//! Per-image work runs on the rayon pool and is collected in manifest order;
//! every file is written atomically, so reruns over unchanged inputs produce
//! byte-identical outputs.

mod config;
mod manifest;
mod suite;

pub use config::RunConfig;
pub use manifest::{
    DatasetManifest, SampleEntry, Split, DEPTH_DIR, EDGES_DIR, GT_DIR, IMAGES_DIR, MANIFEST_FILE, MASKS_EDGE_DIR,
    MASKS_SP_DIR, PRED_DIR,
};
pub use suite::{gradient_suite, SuiteReport, SUITE_SIZE};

use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::corpus::{render_sample, sample_rng};
use crate::depth::refine;
use crate::error::{Error, Result};
use crate::io::{
    gray16_png_bytes, gray8_png_bytes, gt_png_bytes, mask_png_bytes, read_depth_png, read_gray_png, read_gt_png,
    read_mask_png, read_rgb_png, rgb_png_bytes, write_atomic,
};
use crate::metrics::{aggregate, evaluate, pr_csv, pr_svg, reports_csv, EvalReport};
use crate::net::{load_checkpoint, save_checkpoint, train_two_stage, RexNet, TrainingLog, TrainingSample};
use crate::plane::{DepthPlane, ImagePlane, Plane, SaliencyMap};
use crate::segment::{edge_regions, slic_superpixels, thin_edges, RegionMask};

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const CONFIG_FILE: &str = "config.txt";
pub const GRADCHECK_FILE: &str = "gradcheck.csv";
pub const PR_PLOT_FILE: &str = "pr.svg";

/// Prediction file suffixes and their plot labels.
pub const MAP_KINDS: [(&str, &str); 6] = [
    ("ss", "S_S"),
    ("se", "S_E"),
    ("sc", "S_C"),
    ("s", "S"),
    ("s1", "S1"),
    ("s2", "S2"),
];

/// Test-split stream offset, so the test scenes do not depend on `n_train`.
const TEST_STREAM: u64 = 1 << 32;

#[derive(Clone, Debug)]
pub struct LoadedSample {
    pub image: ImagePlane,
    pub gt: Plane<bool>,
    pub depth: Option<DepthPlane>,
    pub edge_prob: Option<Plane<f64>>,
}

fn check_dims(path: &Path, expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::file(
            path,
            format!("size {}x{} does not match image size {}x{}", actual.0, actual.1, expected.0, expected.1),
        ));
    }
    Ok(())
}

pub fn load_sample(entry: &SampleEntry) -> Result<LoadedSample> {
    let image = read_rgb_png(&entry.image)?;
    let dims = image.dims();
    let gt = read_gt_png(&entry.gt)?;
    check_dims(&entry.gt, dims, gt.dims())?;
    let depth = entry.depth.as_deref().map(read_depth_png).transpose()?;
    if let (Some(d), Some(p)) = (&depth, &entry.depth) {
        check_dims(p, dims, d.dims())?;
    }
    let edge_prob = entry.edge_prob.as_deref().map(read_gray_png).transpose()?;
    if let (Some(e), Some(p)) = (&edge_prob, &entry.edge_prob) {
        check_dims(p, dims, e.dims())?;
    }
    Ok(LoadedSample { image, gt, depth, edge_prob })
}

/// Sobel magnitude of luminance scaled to `[0, 1]`; stands in for a missing
/// edge-probability map.
pub fn gradient_edge_prob(image: &ImagePlane) -> Plane<f64> {
    let lum = image.luminance();
    let (w, h) = lum.dims();
    let at = |x: isize, y: isize| *lum.get(x.clamp(0, w as isize - 1) as usize, y.clamp(0, h as isize - 1) as usize);
    let mag = Plane::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        let gx = at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1) - at(x - 1, y - 1) - 2.0 * at(x - 1, y) - at(x - 1, y + 1);
        let gy = at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1) - at(x - 1, y - 1) - 2.0 * at(x, y - 1) - at(x + 1, y - 1);
        (gx * gx + gy * gy).sqrt()
    });
    let peak = mag.data().iter().copied().fold(0.0, f64::max);
    mag.map(|&v| if peak > 0.0 { v / peak } else { 0.0 })
}

/// Superpixel and edge-region masks for one image.
pub fn segment_image(image: &ImagePlane, edge_prob: Option<&Plane<f64>>, cfg: &RunConfig) -> Result<(RegionMask, RegionMask)> {
    let (w, h) = image.dims();
    let slic = crate::segment::SlicParams { regions: cfg.superpixels.min(w * h), ..cfg.slic_params() };
    let superpixels = slic_superpixels(image, slic)?;
    let fallback;
    let prob = match edge_prob {
        Some(p) => p,
        None => {
            fallback = gradient_edge_prob(image);
            &fallback
        }
    };
    let edges = edge_regions(&thin_edges(prob, cfg.edge_threshold));
    Ok((superpixels, edges))
}

/// Cached masks when both exist with matching size, otherwise computed.
fn masks_for(entry: &SampleEntry, sample: &LoadedSample, cfg: &RunConfig) -> Result<(RegionMask, RegionMask)> {
    if let (Some(sp), Some(ed)) = (&entry.superpixel_mask, &entry.edge_mask) {
        let (a, b) = (read_mask_png(sp)?, read_mask_png(ed)?);
        check_dims(sp, sample.image.dims(), a.labels().dims())?;
        check_dims(ed, sample.image.dims(), b.labels().dims())?;
        return Ok((a, b));
    }
    segment_image(&sample.image, sample.edge_prob.as_ref(), cfg)
}

fn sample_id(split: Split, i: usize) -> String {
    format!("{split}_{i:04}")
}

/// Writes a synthetic corpus of `cfg.n_train + cfg.n_test` scenes under `root`.
pub fn cmd_gen(cfg: &RunConfig, root: &Path) -> Result<usize> {
    let entries: Vec<(String, Split, u64)> = (0..cfg.n_train)
        .map(|i| (sample_id(Split::Train, i), Split::Train, i as u64))
        .chain((0..cfg.n_test).map(|i| (sample_id(Split::Test, i), Split::Test, TEST_STREAM + i as u64)))
        .collect();
    entries.par_iter().try_for_each(|(id, _, stream)| -> Result<()> {
        let s = render_sample(cfg.image_size, &mut sample_rng(cfg.seed, *stream))?;
        let name = format!("{id}.png");
        write_atomic(&root.join(IMAGES_DIR).join(&name), &rgb_png_bytes(&s.image)?)?;
        write_atomic(&root.join(GT_DIR).join(&name), &gt_png_bytes(&s.gt)?)?;
        write_atomic(&root.join(DEPTH_DIR).join(&name), &gray16_png_bytes(&s.depth)?)?;
        write_atomic(&root.join(EDGES_DIR).join(&name), &gray8_png_bytes(&s.edge_prob)?)?;
        Ok(())
    })?;
    let list: Vec<(String, Split)> = entries.into_iter().map(|(id, split, _)| (id, split)).collect();
    DatasetManifest::write(root, &list)?;
    info!("generated {} train and {} test scenes in {}", cfg.n_train, cfg.n_test, root.display());
    Ok(list.len())
}

/// Writes both region masks for every sample as 16-bit PNGs.
pub fn cmd_segment(cfg: &RunConfig, manifest: &DatasetManifest) -> Result<usize> {
    manifest.samples.par_iter().try_for_each(|entry| -> Result<()> {
        let sample = load_sample(entry)?;
        let (sp, ed) = segment_image(&sample.image, sample.edge_prob.as_ref(), cfg)?;
        let (sp_path, ed_path) = manifest.mask_paths(&entry.id);
        write_atomic(&sp_path, &mask_png_bytes(&sp)?)?;
        write_atomic(&ed_path, &mask_png_bytes(&ed)?)
    })?;
    info!("segmented {} images", manifest.samples.len());
    Ok(manifest.samples.len())
}

/// Loads the images and masks of one split in manifest order.
pub fn training_samples(cfg: &RunConfig, manifest: &DatasetManifest, split: Split) -> Result<Vec<TrainingSample>> {
    let entries: Vec<&SampleEntry> = manifest.split(split).collect();
    entries
        .par_iter()
        .map(|entry| {
            let sample = load_sample(entry)?;
            let (superpixels, edges) = masks_for(entry, &sample, cfg)?;
            Ok(TrainingSample { image: sample.image, gt: sample.gt, superpixels, edges })
        })
        .collect()
}

/// Two-stage training on the train split. Writes `checkpoint/`, the loss log
/// and the effective config under `out`. On a non-finite loss the last
/// snapshot is saved before the error is returned.
pub fn cmd_train(cfg: &RunConfig, manifest: &DatasetManifest, out: &Path) -> Result<Option<TrainingLog>> {
    let samples = training_samples(cfg, manifest, Split::Train)?;
    if samples.is_empty() {
        warn!("no training samples in {}; nothing to do", manifest.root.display());
        return Ok(None);
    }
    let mut net = RexNet::new(cfg.net_config(), cfg.seed)?;
    let result = train_two_stage(&mut net, &samples, &cfg.train_config());
    save_checkpoint(&net, &out.join(CHECKPOINT_DIR))?;
    let log = result?;
    write_atomic(&out.join(TRAIN_LOG_FILE), log.to_csv().as_bytes())?;
    write_atomic(&out.join(CONFIG_FILE), cfg.to_text().as_bytes())?;
    Ok(Some(log))
}

pub fn load_network(cfg: &RunConfig, checkpoint: &Path) -> Result<RexNet> {
    let mut net = RexNet::zeroed(cfg.net_config())?;
    load_checkpoint(&mut net, checkpoint)?;
    Ok(net)
}

/// The value a map takes after an 8-bit PNG roundtrip.
pub fn quantize(map: &SaliencyMap) -> SaliencyMap {
    map.map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}

pub fn pred_path(dir: &Path, id: &str, kind: &str) -> PathBuf {
    dir.join(format!("{id}_{kind}.png"))
}

fn write_refined(cfg: &RunConfig, dir: &Path, id: &str, s0: &SaliencyMap, depth: &DepthPlane, mask: &RegionMask, image: &ImagePlane) -> Result<()> {
    let (s1, s2) = refine(s0, depth, mask, image, cfg.depth_params())?;
    write_atomic(&pred_path(dir, id, "s1"), &gray8_png_bytes(&s1)?)?;
    write_atomic(&pred_path(dir, id, "s2"), &gray8_png_bytes(&s2)?)
}

/// Writes `S_S`, `S_E`, `S_C` and `S` for every test image; with
/// `depth_refine` on, also `S1`/`S2` where depth is available.
pub fn cmd_predict(cfg: &RunConfig, manifest: &DatasetManifest, checkpoint: &Path, out: &Path) -> Result<usize> {
    let entries: Vec<&SampleEntry> = manifest.split(Split::Test).collect();
    if entries.is_empty() {
        warn!("no test samples in {}; nothing to do", manifest.root.display());
        return Ok(0);
    }
    let net = load_network(cfg, checkpoint)?;
    entries.par_iter().try_for_each(|entry| -> Result<()> {
        let sample = load_sample(entry)?;
        let (sp, ed) = masks_for(entry, &sample, cfg)?;
        let p = net.predict(&sample.image, &sp, &ed)?;
        for (kind, map) in [("ss", &p.s_s), ("se", &p.s_e), ("sc", &p.s_c), ("s", &p.s)] {
            write_atomic(&pred_path(out, &entry.id, kind), &gray8_png_bytes(map)?)?;
        }
        if let (true, Some(depth)) = (cfg.depth_refine, &sample.depth) {
            write_refined(cfg, out, &entry.id, &quantize(&p.s), depth, &sp, &sample.image)?;
        }
        Ok(())
    })?;
    info!("wrote predictions for {} test images to {}", entries.len(), out.display());
    Ok(entries.len())
}

/// Refines the stored `S` of every test image that has depth into `S1`/`S2`.
pub fn cmd_refine_depth(cfg: &RunConfig, manifest: &DatasetManifest, predictions: &Path) -> Result<usize> {
    let entries: Vec<&SampleEntry> = manifest.split(Split::Test).filter(|e| e.depth.is_some()).collect();
    entries.par_iter().try_for_each(|entry| -> Result<()> {
        let sample = load_sample(entry)?;
        let depth = sample.depth.as_ref().expect("filtered on depth");
        let s_path = pred_path(predictions, &entry.id, "s");
        let s0 = read_gray_png(&s_path)?;
        check_dims(&s_path, sample.image.dims(), s0.dims())?;
        let (sp, _) = masks_for(entry, &sample, cfg)?;
        write_refined(cfg, predictions, &entry.id, &s0, depth, &sp, &sample.image)
    })?;
    info!("refined {} predictions", entries.len());
    Ok(entries.len())
}

/// Dataset-level result for one map kind.
#[derive(Clone, Debug)]
pub struct KindSummary {
    pub kind: &'static str,
    pub label: &'static str,
    pub images: usize,
    pub report: EvalReport,
}

/// Evaluates every prediction kind present for the test split. Writes
/// `eval_<kind>.csv`, `pr_<kind>.csv` and one `pr.svg` under `out`.
pub fn cmd_eval(manifest: &DatasetManifest, predictions: &Path, out: &Path) -> Result<Vec<KindSummary>> {
    let entries: Vec<&SampleEntry> = manifest.split(Split::Test).collect();
    let gts: Vec<Plane<bool>> = entries.par_iter().map(|e| read_gt_png(&e.gt)).collect::<Result<_>>()?;
    let mut summaries = Vec::new();
    for (kind, label) in MAP_KINDS {
        let present: Vec<usize> = (0..entries.len())
            .filter(|&i| pred_path(predictions, &entries[i].id, kind).is_file())
            .collect();
        if present.is_empty() {
            continue;
        }
        let reports: Vec<Option<EvalReport>> = present
            .par_iter()
            .map(|&i| {
                let path = pred_path(predictions, &entries[i].id, kind);
                let map = read_gray_png(&path)?;
                check_dims(&path, gts[i].dims(), map.dims())?;
                evaluate(&map, &gts[i]).map_err(|e| Error::file(&path, e))
            })
            .collect::<Result<_>>()?;
        let rows: Vec<(String, EvalReport)> = present
            .iter()
            .zip(reports)
            .filter_map(|(&i, r)| r.map(|r| (entries[i].id.clone(), r)))
            .collect();
        if rows.is_empty() {
            continue;
        }
        let per_image: Vec<EvalReport> = rows.iter().map(|(_, r)| r.clone()).collect();
        let report = aggregate(&per_image)?;
        write_atomic(&out.join(format!("eval_{kind}.csv")), reports_csv(&rows, Some(&report)).as_bytes())?;
        write_atomic(&out.join(format!("pr_{kind}.csv")), pr_csv(&report).as_bytes())?;
        summaries.push(KindSummary { kind, label, images: rows.len(), report });
    }
    if !summaries.is_empty() {
        let curves: Vec<(&str, &EvalReport)> = summaries.iter().map(|s| (s.label, &s.report)).collect();
        write_atomic(&out.join(PR_PLOT_FILE), pr_svg(&curves).as_bytes())?;
    }
    Ok(summaries)
}

/// Runs the gradient suite; writes `gradcheck.csv` under `out` when given.
pub fn cmd_gradcheck(cfg: &RunConfig, out: Option<&Path>) -> Result<SuiteReport> {
    let report = gradient_suite(cfg, cfg.seed)?;
    if let Some(dir) = out {
        write_atomic(&dir.join(GRADCHECK_FILE), report.to_csv().as_bytes())?;
    }
    Ok(report)
}
