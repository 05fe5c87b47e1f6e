//! RGB-D refinement: position prior and local compactness prior.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::plane::{DepthPlane, ImagePlane, SaliencyMap};
use crate::segment::{label_means, RegionMask};
use crate::tensor::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthParams {
    pub sigma: f64,
    pub sigma_dep: f64,
    /// In 0–255 RGB units.
    pub sigma_col: f64,
}

impl Default for DepthParams {
    fn default() -> Self {
        DepthParams {
            sigma: 5.0,
            sigma_dep: 0.02,
            sigma_col: 5.0,
        }
    }
}

/// Raw depth (0 = invalid) to `[0, 1]` with nearer pixels larger.
///
/// Invalid pixels take the value of the nearest valid pixel (breadth-first,
/// 4-neighbour, row-major seed order). Constant or fully invalid input maps to
/// 0.5 everywhere.
pub fn transform_depth(raw: &DepthPlane) -> Result<DepthPlane> {
    if raw.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("raw depth".into()));
    }
    let filled = fill_invalid(raw);
    let (lo, hi) = filled
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    // also catches NaN
    if !(hi > lo) {
        return Ok(raw.map(|_| 0.5));
    }
    Ok(filled.map(|&v| (hi - v) / (hi - lo)))
}

fn fill_invalid(raw: &DepthPlane) -> DepthPlane {
    let (w, h) = raw.dims();
    let mut out = raw.clone();
    let mut done: Vec<bool> = raw.data().iter().map(|&v| v != 0.0).collect();
    let mut queue: VecDeque<usize> = (0..w * h).filter(|&i| done[i]).collect();
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let v = out.data()[i];
        let mut visit = |j: usize| {
            if !done[j] {
                done[j] = true;
                out.data_mut()[j] = v;
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
    out
}

/// The multiplicative factor `1 / (1 + exp(-σ·D))`.
pub fn position_factor(d: f64, sigma: f64) -> f64 {
    sigmoid(sigma * d)
}

pub fn position_prior(s0: &SaliencyMap, depth: &DepthPlane, sigma: f64) -> Result<SaliencyMap> {
    if s0.dims() != depth.dims() {
        return Err(Error::shape("saliency vs depth", s0.dims(), depth.dims()));
    }
    let data = s0
        .data()
        .iter()
        .zip(depth.data())
        .map(|(&s, &d)| s * position_factor(d, sigma))
        .collect();
    SaliencyMap::from_vec(s0.width(), s0.height(), data)
}

/// Region-constant smoothing of region-mean `s1` over each region and its
/// 4-adjacent neighbours, weighted by depth and mean-colour similarity and
/// normalised to sum to 1.
pub fn compactness_prior(
    s1: &SaliencyMap,
    mask: &RegionMask,
    depth: &DepthPlane,
    image: &ImagePlane,
    params: DepthParams,
) -> Result<SaliencyMap> {
    let dims = mask.labels().dims();
    for (what, d) in [("saliency", s1.dims()), ("depth", depth.dims()), ("image", image.dims())] {
        if d != dims {
            return Err(Error::ShapeMismatch {
                context: "compactness prior inputs vs mask",
                expected: format!("{dims:?}"),
                actual: format!("{what} {d:?}"),
            });
        }
    }
    let labels = mask.labels();
    let s = label_means(s1, labels)?;
    let dm = label_means(depth, labels)?;
    let col: Vec<[f64; 3]> = {
        let ch = |k: usize| label_means(&image.map(|p| 255.0 * p[k]), labels);
        let (r, g, b) = (ch(0)?, ch(1)?, ch(2)?);
        (0..s.len()).map(|i| [r[i], g[i], b[i]]).collect()
    };
    let adj = mask.adjacency();
    let two_dep = 2.0 * params.sigma_dep * params.sigma_dep;
    let two_col = 2.0 * params.sigma_col * params.sigma_col;
    let refined: Vec<f64> = (0..s.len())
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for j in std::iter::once(i).chain(adj[i].iter().map(|&j| j as usize)) {
                let dd = dm[i] - dm[j];
                let dc: f64 = (0..3).map(|k| (col[i][k] - col[j][k]).powi(2)).sum();
                let wgt = (-dd * dd / two_dep).exp() * (-dc / two_col).exp();
                num += wgt * s[j];
                den += wgt;
            }
            // den >= 1 from the self term
            num / den
        })
        .collect();
    Ok(labels.map(|&l| refined[l as usize]))
}

/// Runs S0 → S1 → S2 on a raw depth map.
pub fn refine(
    s0: &SaliencyMap,
    raw_depth: &DepthPlane,
    mask: &RegionMask,
    image: &ImagePlane,
    params: DepthParams,
) -> Result<(SaliencyMap, SaliencyMap)> {
    let d = transform_depth(raw_depth)?;
    let s1 = position_prior(s0, &d, params.sigma)?;
    let s2 = compactness_prior(&s1, mask, &d, image, params)?;
    Ok((s1, s2))
}
