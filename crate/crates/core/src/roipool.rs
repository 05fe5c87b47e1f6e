//! Mask-based RoI pooling.
//!
//! Each RoI's rectangle on the feature map is split into an `out × out` grid of
//! sub-windows. A sub-window outputs the max over the feature cells that lie in
//! it *and* carry the RoI's region id in the coarse mask, or exactly 0 when no
//! such cell exists. Channels share the spatial mask.

use crate::error::{Error, Result};
use crate::plane::LabelGrid;
use crate::segment::{Rect, RoI};
use crate::tensor::{Shape, Tensor};

pub const POOLED_SIZE: usize = 7;

#[derive(Clone, Debug, PartialEq)]
pub struct PooledRegionFeature {
    pub region_id: u32,
    /// `(1, c, out, out)`
    pub values: Tensor,
    /// Flat index into the feature tensor per output cell; `None` for empty
    /// sub-windows.
    pub argmax: Vec<Option<usize>>,
    /// The region has no cell in the coarse mask, so every output is 0.
    pub vanished: bool,
}

/// Integer sub-window boundaries `floor(i·len/parts)` for `i = 0..=parts`.
pub fn split_bounds(len: usize, parts: usize) -> Vec<usize> {
    (0..=parts).map(|i| i * len / parts).collect()
}

/// Maps a full-resolution rectangle onto a feature map downsampled by `factor`,
/// flooring the start and ceiling the (exclusive) end so the result covers it.
pub fn rect_to_feature(rect: Rect, factor: usize, feat_w: usize, feat_h: usize) -> Rect {
    let x0 = (rect.x0 / factor).min(feat_w - 1);
    let y0 = (rect.y0 / factor).min(feat_h - 1);
    let x1 = ((rect.x1 + 1).div_ceil(factor) - 1).clamp(x0, feat_w - 1);
    let y1 = ((rect.y1 + 1).div_ceil(factor) - 1).clamp(y0, feat_h - 1);
    Rect { x0, y0, x1, y1 }
}

/// `rois` carry rectangles in feature-map coordinates and region ids in the
/// label space of `mask`, whose dims must equal the feature map's.
pub fn mask_roi_pool_forward(
    features: &Tensor,
    rois: &[RoI],
    mask: &LabelGrid,
    out: usize,
) -> Result<Vec<PooledRegionFeature>> {
    let s = features.shape();
    if s.n != 1 {
        return Err(Error::shape("roi pooling expects a single image", 1, s.n));
    }
    if mask.dims() != (s.w, s.h) {
        return Err(Error::shape("roi pooling mask vs features (w, h)", (s.w, s.h), mask.dims()));
    }
    if out == 0 {
        return Err(Error::InvalidArgument("pooled size must be positive".into()));
    }
    let mut present = vec![false; mask.data().iter().max().map_or(0, |&m| m as usize + 1)];
    for &l in mask.data() {
        present[l as usize] = true;
    }
    rois.iter()
        .map(|roi| {
            let r = roi.rect;
            if r.x1 >= s.w || r.y1 >= s.h || r.x0 > r.x1 || r.y0 > r.y1 {
                return Err(Error::InvalidArgument(format!("RoI {r:?} outside {}x{} feature map", s.w, s.h)));
            }
            let vanished = !present.get(roi.region_id as usize).copied().unwrap_or(false);
            let mut values = Tensor::zeros(Shape::new(1, s.c, out, out));
            let mut argmax = vec![None; s.c * out * out];
            if !vanished {
                let ys = split_bounds(r.height(), out);
                let xs = split_bounds(r.width(), out);
                for oy in 0..out {
                    for ox in 0..out {
                        // cells of this sub-window inside the region
                        let mut cells = Vec::new();
                        for y in r.y0 + ys[oy]..r.y0 + ys[oy + 1] {
                            for x in r.x0 + xs[ox]..r.x0 + xs[ox + 1] {
                                if *mask.get(x, y) == roi.region_id {
                                    cells.push(y * s.w + x);
                                }
                            }
                        }
                        if cells.is_empty() {
                            continue;
                        }
                        for c in 0..s.c {
                            let plane = features.channel(0, c);
                            let mut best = cells[0];
                            for &k in &cells[1..] {
                                if plane[k] > plane[best] {
                                    best = k;
                                }
                            }
                            let o = (c * out + oy) * out + ox;
                            values.data_mut()[o] = plane[best];
                            argmax[o] = Some(c * s.plane() + best);
                        }
                    }
                }
            }
            Ok(PooledRegionFeature {
                region_id: roi.region_id,
                values,
                argmax,
                vanished,
            })
        })
        .collect()
}

/// Scatters each upstream value onto its argmax source; contributions from
/// different RoIs are summed in RoI order.
pub fn mask_roi_pool_backward(
    pooled: &[PooledRegionFeature],
    upstream: &[Tensor],
    feature_shape: Shape,
) -> Result<Tensor> {
    if pooled.len() != upstream.len() {
        return Err(Error::shape("roi pooling upstream count", pooled.len(), upstream.len()));
    }
    let mut grad = Tensor::zeros(feature_shape);
    for (p, u) in pooled.iter().zip(upstream) {
        if u.shape() != p.values.shape() {
            return Err(Error::shape("roi pooling upstream", p.values.shape(), u.shape()));
        }
        let g = grad.data_mut();
        for (src, &v) in p.argmax.iter().zip(u.data()) {
            if let Some(i) = src {
                g[*i] += v;
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plane::Plane;
    use crate::tensor::finite_difference_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn full(w: usize, h: usize) -> Rect {
        Rect { x0: 0, y0: 0, x1: w - 1, y1: h - 1 }
    }

    #[test]
    fn constant_features_whole_region() {
        let f = Tensor::filled(Shape::new(1, 3, 10, 9), 2.5);
        let mask = Plane::filled(9, 10, 0u32);
        let p = mask_roi_pool_forward(&f, &[RoI { region_id: 0, rect: full(9, 10) }], &mask, 7).unwrap();
        assert!(p[0].values.data().iter().all(|&v| v == 2.5));
        assert!(p[0].argmax.iter().all(Option::is_some));
    }

    #[test]
    fn left_columns_region() {
        let f = Tensor::from_vec(Shape::new(1, 1, 4, 4), (1..=16).map(f64::from).collect()).unwrap();
        let mask = Plane::from_fn(4, 4, |x, _| if x < 2 { 1 } else { 0 });
        let p = mask_roi_pool_forward(&f, &[RoI { region_id: 1, rect: full(4, 4) }], &mask, 2).unwrap();
        assert_eq!(p[0].values.data(), &[6.0, 0.0, 14.0, 0.0]);
        assert_eq!(p[0].argmax[1], None);
    }

    #[test]
    fn absent_region_pools_to_zero() {
        let f = Tensor::filled(Shape::new(1, 2, 3, 3), 1.0);
        let mask = Plane::filled(3, 3, 0u32);
        let p = mask_roi_pool_forward(&f, &[RoI { region_id: 4, rect: full(3, 3) }], &mask, 7).unwrap();
        assert!(p[0].vanished);
        assert!(p[0].values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_rois_produce_empty_cells() {
        // a 3-wide RoI split into 7 parts has empty sub-windows
        assert_eq!(split_bounds(3, 7), vec![0, 0, 0, 1, 1, 2, 2, 3]);
        let f = Tensor::filled(Shape::new(1, 1, 3, 3), 5.0);
        let mask = Plane::filled(3, 3, 0u32);
        let p = mask_roi_pool_forward(&f, &[RoI { region_id: 0, rect: full(3, 3) }], &mask, 7).unwrap();
        let nonzero = p[0].values.data().iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nonzero, 9);
    }

    #[test]
    fn rect_mapping_covers() {
        let r = Rect { x0: 17, y0: 0, x1: 40, y1: 15 };
        assert_eq!(rect_to_feature(r, 16, 6, 6), Rect { x0: 1, y0: 0, x1: 2, y1: 0 });
        let r = Rect { x0: 0, y0: 90, x1: 95, y1: 95 };
        assert_eq!(rect_to_feature(r, 16, 6, 6), Rect { x0: 0, y0: 5, x1: 5, y1: 5 });
    }

    #[test]
    fn backward_scatters_and_sums() {
        let f = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mask = Plane::filled(2, 2, 0u32);
        let roi = RoI { region_id: 0, rect: full(2, 2) };
        let p = mask_roi_pool_forward(&f, &[roi, roi], &mask, 1).unwrap();
        let up = vec![Tensor::filled(Shape::new(1, 1, 1, 1), 0.5), Tensor::filled(Shape::new(1, 1, 1, 1), 2.0)];
        let g = mask_roi_pool_backward(&p, &up, f.shape()).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 2.5]);
        let z = mask_roi_pool_backward(&p, &[Tensor::zeros(up[0].shape()), Tensor::zeros(up[0].shape())], f.shape()).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (w, h, c) = (9, 8, 3);
        let f = Tensor::randn(Shape::new(1, c, h, w), 1.0, &mut rng);
        let mask = Plane::from_fn(w, h, |x, y| ((x / 3) + (y / 4) * 3) as u32);
        let rois: Vec<RoI> = (0..6)
            .map(|r| {
                let (bx, by) = (r % 3, r / 3);
                RoI { region_id: r as u32, rect: Rect { x0: bx * 3, y0: by * 4, x1: (bx * 3 + 4).min(w - 1), y1: by * 4 + 3 } }
            })
            .collect();
        let pooled = mask_roi_pool_forward(&f, &rois, &mask, 2).unwrap();
        let ups: Vec<Tensor> = pooled.iter().map(|p| Tensor::randn(p.values.shape(), 1.0, &mut rng)).collect();
        let g = mask_roi_pool_backward(&pooled, &ups, f.shape()).unwrap();
        let rep = finite_difference_check(
            |p| {
                let t = Tensor::from_vec(f.shape(), p.to_vec()).unwrap();
                mask_roi_pool_forward(&t, &rois, &mask, 2)
                    .unwrap()
                    .iter()
                    .zip(&ups)
                    .map(|(a, u)| a.values.data().iter().zip(u.data()).map(|(x, y)| x * y).sum::<f64>())
                    .sum()
            },
            f.data(),
            g.data(),
            1e-5,
            1e-4,
        );
        assert!(rep.passed, "{rep:?}");
        // mass conservation
        let up_sum: f64 = pooled
            .iter()
            .zip(&ups)
            .flat_map(|(p, u)| p.argmax.iter().zip(u.data()).filter(|(a, _)| a.is_some()).map(|(_, v)| *v))
            .sum();
        assert!((g.sum() - up_sum).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = Tensor::randn(Shape::new(1, 2, 6, 6), 1.0, &mut rng);
        let bumped = f.map(|v| v + (v * 13.0).sin().abs());
        let mask = Plane::from_fn(6, 6, |x, _| (x >= 3) as u32);
        let rois = [RoI { region_id: 1, rect: full(6, 6) }];
        let a = mask_roi_pool_forward(&f, &rois, &mask, 3).unwrap();
        let b = mask_roi_pool_forward(&bumped, &rois, &mask, 3).unwrap();
        for (x, y) in a[0].values.data().iter().zip(b[0].values.data()) {
            assert!(y >= x);
        }
    }
}
