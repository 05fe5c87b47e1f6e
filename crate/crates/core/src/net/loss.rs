use crate::error::{Error, Result};
use crate::plane::{LabelGrid, Plane, SaliencyMap};
use crate::segment::{label_means, RegionMask};

pub const CE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy and its gradient. Predictions are clamped to
/// `[ε, 1−ε]`; clamped entries get zero gradient.
pub fn cross_entropy(pred: &[f64], gt: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len().max(1) as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| {
            let pc = p.clamp(CE_EPS, 1.0 - CE_EPS);
            loss -= g * pc.ln() + (1.0 - g) * (1.0 - pc).ln();
            if pc != p {
                0.0
            } else {
                -(g / p - (1.0 - g) / (1.0 - p)) / n
            }
        })
        .collect();
    (loss / n, grad)
}

/// `½·mean((p − regionmean(p))²)` and its gradient `(p − regionmean(p)) / N`.
pub fn edge_loss_with_grad(pred: &[f64], labels: &[u32]) -> (f64, Vec<f64>) {
    let n = pred.len().max(1) as f64;
    let grid_p = Plane::from_vec(pred.len(), 1, pred.to_vec()).expect("sized");
    let grid_l = Plane::from_vec(labels.len(), 1, labels.to_vec()).expect("sized");
    let means = label_means(&grid_p, &grid_l).expect("same dims");
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(labels)
        .map(|(&p, &l)| {
            let d = p - means[l as usize];
            loss += d * d;
            d / n
        })
        .collect();
    (0.5 * loss / n, grad)
}

/// Area-averages `gt` down to `width × height` (after replication padding to a
/// whole number of blocks) and thresholds at 0.5.
pub fn downsample_gt(gt: &Plane<bool>, width: usize, height: usize) -> Result<Plane<bool>> {
    if gt.dims() == (width, height) {
        return Ok(gt.clone());
    }
    let f = gt.width().div_ceil(width.max(1));
    if width == 0 || f == 0 || gt.height().div_ceil(f) != height {
        return Err(Error::shape("ground-truth downsampling", gt.dims(), (width, height)));
    }
    let padded = gt.pad_replicate(width * f, height * f);
    let area = (f * f) as f64;
    Ok(Plane::from_fn(width, height, |bx, by| {
        let mut s = 0usize;
        for y in by * f..(by + 1) * f {
            for x in bx * f..(bx + 1) * f {
                s += *padded.get(x, y) as usize;
            }
        }
        s as f64 / area >= 0.5
    }))
}

/// Binary cross-entropy of a map against ground truth, downsampling the
/// ground truth to the map's resolution when needed.
pub fn cross_entropy_loss(pred: &SaliencyMap, gt: &Plane<bool>) -> Result<f64> {
    let gt = downsample_gt(gt, pred.width(), pred.height())?;
    let g: Vec<f64> = gt.data().iter().map(|&b| b as u8 as f64).collect();
    Ok(cross_entropy(pred.data(), &g).0)
}

/// Edge-preserving loss with the mask resampled to the map's resolution by
/// nearest neighbour.
pub fn edge_loss(pred: &SaliencyMap, mask: &RegionMask) -> f64 {
    edge_loss_labels(pred, mask.labels())
}

pub fn edge_loss_labels(pred: &SaliencyMap, labels: &LabelGrid) -> f64 {
    let labels = labels.resample_nearest(pred.width(), pred.height());
    edge_loss_with_grad(pred.data(), labels.data()).0
}

/// Sum over the branch maps (when `deep_supervision`) and the branch-fused map
/// of `CE + λ_E·edge_loss`.
pub fn deep_supervised_loss(
    branch_maps: &[SaliencyMap],
    s_c: &SaliencyMap,
    gt: &Plane<bool>,
    mask: &RegionMask,
    lambda_e: f64,
    deep_supervision: bool,
) -> Result<f64> {
    let term = |m: &SaliencyMap| -> Result<f64> { Ok(cross_entropy_loss(m, gt)? + lambda_e * edge_loss(m, mask)) };
    let mut total = term(s_c)?;
    if deep_supervision {
        for m in branch_maps {
            total += term(m)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_cases() {
        let gt = [0.0, 1.0, 1.0, 0.0];
        let exact = [CE_EPS, 1.0 - CE_EPS, 1.0 - CE_EPS, CE_EPS];
        assert!(cross_entropy(&exact, &gt).0 <= 1e-6);
        let (half, _) = cross_entropy(&[0.5; 4], &gt);
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);
        let wrong = [1.0, 0.0, 0.0, 1.0];
        let (l, g) = cross_entropy(&wrong, &gt);
        assert!((l + CE_EPS.ln()).abs() < 1e-6);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn edge_loss_cases() {
        let constant = Plane::from_fn(4, 2, |x, _| if x < 2 { 0.2 } else { 0.7 });
        let m = RegionMask::new(Plane::from_fn(4, 2, |x, _| (x >= 2) as u32)).unwrap();
        assert!(edge_loss(&constant, &m) <= 1e-12);
        let halves = Plane::from_fn(4, 2, |x, _| (x >= 2) as u8 as f64);
        assert!((edge_loss(&halves, &RegionMask::single(4, 2)) - 0.125).abs() < 1e-15);
        let shifted = halves.map(|v| v + 0.3);
        assert!((edge_loss(&shifted, &RegionMask::single(4, 2)) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn gt_downsampling() {
        let gt = Plane::from_fn(16, 16, |x, y| x < 8 && y < 4);
        let d = downsample_gt(&gt, 2, 2).unwrap();
        // top-left block is exactly half salient
        assert_eq!(d.data(), &[true, false, false, false]);
        let gt = Plane::from_fn(16, 16, |x, y| x < 8 && y < 3);
        assert_eq!(downsample_gt(&gt, 2, 2).unwrap().data(), &[false; 4]);
    }

    #[test]
    fn deep_loss_all_half() {
        let gt = Plane::from_fn(8, 8, |x, _| x < 4);
        let m = RegionMask::single(8, 8);
        let half = Plane::filled(1, 1, 0.5);
        let maps = vec![half.clone(); 4];
        let l = deep_supervised_loss(&maps, &half, &gt, &m, 0.1, true).unwrap();
        assert!((l - 5.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let l1 = deep_supervised_loss(&maps, &half, &gt, &m, 0.1, false).unwrap();
        assert!((l1 - std::f64::consts::LN_2).abs() < 1e-12);
    }
}
