use super::mask::RegionMask;
use crate::error::{Error, Result};
use crate::plane::{LabelGrid, Plane, SaliencyMap};

/// Block-majority downsampling of a region mask.
///
/// `labels` keeps the *original* region ids so RoIs computed at full resolution
/// address it directly. Regions that win no block are listed in `vanished`.
#[derive(Clone, Debug, PartialEq)]
pub struct DownsampledMask {
    pub labels: LabelGrid,
    pub factor: usize,
    pub source_regions: usize,
    pub vanished: Vec<u32>,
}

impl DownsampledMask {
    pub fn contains(&self, region_id: u32) -> bool {
        (region_id as usize) < self.source_regions && self.vanished.binary_search(&region_id).is_err()
    }

    /// Contiguously relabelled mask plus the original-id → new-id mapping.
    /// Connectivity is not guaranteed at the coarse scale, so pieces of a
    /// region that became disconnected keep one shared label.
    pub fn relabeled(&self) -> (LabelGrid, Vec<Option<u32>>) {
        let mut map = vec![None; self.source_regions];
        let mut next = 0u32;
        let grid = self.labels.map(|&l| {
            *map[l as usize].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        });
        (grid, map)
    }
}

/// Pads by edge replication to a multiple of `factor`, then assigns each
/// `factor × factor` block its majority label (ties to the smallest label).
pub fn downsample_mask(mask: &RegionMask, factor: usize) -> Result<DownsampledMask> {
    if factor == 0 {
        return Err(Error::InvalidArgument("downsample factor must be positive".into()));
    }
    let padded = mask.labels().pad_to_multiple(factor);
    let (w, h) = (padded.width() / factor, padded.height() / factor);
    let mut counts: Vec<u32> = vec![0; mask.region_count()];
    let mut present = vec![false; mask.region_count()];
    let mut touched = Vec::with_capacity(factor * factor);
    let labels = Plane::from_fn(w, h, |bx, by| {
        touched.clear();
        for y in by * factor..(by + 1) * factor {
            for x in bx * factor..(bx + 1) * factor {
                let l = *padded.get(x, y);
                if counts[l as usize] == 0 {
                    touched.push(l);
                }
                counts[l as usize] += 1;
            }
        }
        let mut best = (0u32, u32::MAX);
        for &l in &touched {
            let c = counts[l as usize];
            if c > best.0 || (c == best.0 && l < best.1) {
                best = (c, l);
            }
        }
        for &l in &touched {
            counts[l as usize] = 0;
        }
        present[best.1 as usize] = true;
        best.1
    });
    let vanished = present
        .iter()
        .enumerate()
        .filter(|(_, &p)| !p)
        .map(|(i, _)| i as u32)
        .collect();
    Ok(DownsampledMask {
        labels,
        factor,
        source_regions: mask.region_count(),
        vanished,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegionLabel {
    Salient,
    Background,
    Ignore,
}

/// Fraction of salient pixels above which (strictly) a region counts as salient;
/// background when the complementary fraction exceeds it.
pub const LABEL_FRACTION: f64 = 0.8;

pub fn region_label(mask: &RegionMask, gt: &Plane<bool>) -> Result<Vec<RegionLabel>> {
    if gt.dims() != mask.labels().dims() {
        return Err(Error::shape("ground truth vs mask", mask.labels().dims(), gt.dims()));
    }
    let mut inside = vec![0usize; mask.region_count()];
    let mut total = vec![0usize; mask.region_count()];
    for (&l, &g) in mask.labels().data().iter().zip(gt.data()) {
        total[l as usize] += 1;
        if g {
            inside[l as usize] += 1;
        }
    }
    Ok(inside
        .iter()
        .zip(&total)
        .map(|(&i, &t)| {
            let frac = i as f64 / t as f64;
            if frac > LABEL_FRACTION {
                RegionLabel::Salient
            } else if 1.0 - frac > LABEL_FRACTION {
                RegionLabel::Background
            } else {
                RegionLabel::Ignore
            }
        })
        .collect())
}

/// Per-label means of `map` over an arbitrary label grid of the same size.
/// Labels with no pixels get mean 0.
pub fn label_means(map: &SaliencyMap, labels: &LabelGrid) -> Result<Vec<f64>> {
    if map.dims() != labels.dims() {
        return Err(Error::shape("map vs labels", labels.dims(), map.dims()));
    }
    let n = labels.data().iter().max().map_or(0, |&m| m as usize + 1);
    // accumulate offsets from the first value seen, so a region that is
    // already constant reproduces its value exactly
    let mut pivot = vec![None; n];
    let mut sum = vec![0.0; n];
    let mut cnt = vec![0usize; n];
    for (&l, &v) in labels.data().iter().zip(map.data()) {
        let l = l as usize;
        let p = *pivot[l].get_or_insert(v);
        sum[l] += v - p;
        cnt[l] += 1;
    }
    Ok((0..n)
        .map(|l| match pivot[l] {
            None => 0.0,
            Some(p) => p + sum[l] / cnt[l] as f64,
        })
        .collect())
}

/// Replaces every pixel with the mean over its label. `labels` is resampled to
/// the map's resolution by nearest neighbour if needed.
pub fn region_mean_map_labels(map: &SaliencyMap, labels: &LabelGrid) -> SaliencyMap {
    let labels = labels.resample_nearest(map.width(), map.height());
    let means = label_means(map, &labels).expect("resampled to map dims");
    labels.map(|&l| means[l as usize])
}

pub fn region_mean_map(map: &SaliencyMap, mask: &RegionMask) -> SaliencyMap {
    region_mean_map_labels(map, mask.labels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(w: usize, h: usize, f: impl Fn(usize, usize) -> u32) -> RegionMask {
        RegionMask::new(Plane::from_fn(w, h, f)).unwrap()
    }

    #[test]
    fn constant_mask_stays_constant() {
        let d = downsample_mask(&RegionMask::single(40, 20), 16).unwrap();
        assert_eq!(d.labels.dims(), (3, 2));
        assert!(d.labels.data().iter().all(|&l| l == 0));
        assert!(d.vanished.is_empty());
    }

    #[test]
    fn vertical_halves() {
        let d = downsample_mask(&mask(32, 32, |x, _| (x >= 16) as u32), 16).unwrap();
        assert_eq!(d.labels.data(), &[0, 1, 0, 1]);
    }

    #[test]
    fn three_stripes_majority() {
        // horizontal stripes of height 16 offset so each block is a clear majority
        let m = mask(48, 48, |_, y| match y {
            0..=17 => 0,
            18..=30 => 1,
            _ => 2,
        });
        let d = downsample_mask(&m, 16).unwrap();
        // oracle: count labels per 16x16 block
        for by in 0..3 {
            for bx in 0..3 {
                let mut counts = [0; 3];
                for y in by * 16..by * 16 + 16 {
                    for x in bx * 16..bx * 16 + 16 {
                        counts[m.label(x, y) as usize] += 1;
                    }
                }
                let best = (0..3).max_by_key(|&l| (counts[l], std::cmp::Reverse(l))).unwrap();
                assert_eq!(*d.labels.get(bx, by), best as u32);
                assert_eq!(best, by);
            }
        }
    }

    #[test]
    fn small_region_vanishes() {
        let m = mask(32, 16, |x, y| (x < 2 && y < 2) as u32 + (x >= 16) as u32 * 2);
        let d = downsample_mask(&m, 16).unwrap();
        assert_eq!(d.vanished, vec![1]);
        assert!(!d.contains(1));
        let (grid, map) = d.relabeled();
        assert_eq!(grid.data(), &[0, 1]);
        assert_eq!(map, vec![Some(0), None, Some(1)]);
    }

    #[test]
    fn labeling_rule() {
        let m = RegionMask::single(10, 10);
        let all = Plane::filled(10, 10, true);
        assert_eq!(region_label(&m, &all).unwrap(), vec![RegionLabel::Salient]);
        let half = Plane::from_fn(10, 10, |x, _| x < 5);
        assert_eq!(region_label(&m, &half).unwrap(), vec![RegionLabel::Ignore]);
        let mut n = 0;
        let p81 = Plane::from_fn(10, 10, |_, _| {
            n += 1;
            n <= 81
        });
        assert_eq!(region_label(&m, &p81).unwrap(), vec![RegionLabel::Salient]);
        let mut n = 0;
        let p80 = Plane::from_fn(10, 10, |_, _| {
            n += 1;
            n <= 80
        });
        assert_eq!(region_label(&m, &p80).unwrap(), vec![RegionLabel::Ignore]);
        let none = Plane::filled(10, 10, false);
        assert_eq!(region_label(&m, &none).unwrap(), vec![RegionLabel::Background]);
    }

    #[test]
    fn mean_map_cases() {
        let m = mask(4, 2, |x, _| (x >= 2) as u32);
        let constant = Plane::from_fn(4, 2, |x, _| if x >= 2 { 0.3 } else { 0.9 });
        assert_eq!(region_mean_map(&constant, &m), constant);
        let one = RegionMask::single(2, 1);
        let halves = Plane::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(region_mean_map(&halves, &one).data(), &[0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn mean_map_matches_accumulation_and_is_idempotent(
            vals in proptest::collection::vec(0.0f64..1.0, 48),
            split in 1usize..7,
        ) {
            let m = mask(8, 6, |x, y| if x < split { 0 } else if y < 3 { 1 } else { 2 });
            let map = Plane::from_vec(8, 6, vals).unwrap();
            let once = region_mean_map(&map, &m);
            for r in 0..m.region_count() as u32 {
                let (mut s, mut c) = (0.0, 0);
                for (i, &l) in m.labels().data().iter().enumerate() {
                    if l == r { s += map.data()[i]; c += 1; }
                }
                for (i, &l) in m.labels().data().iter().enumerate() {
                    if l == r { prop_assert!((once.data()[i] - s / c as f64).abs() < 1e-12); }
                }
            }
            prop_assert_eq!(region_mean_map(&once, &m), once);
        }

        #[test]
        fn downsample_preserves_labels_except_vanished(seed in 0u64..500) {
            let m = RegionMask::from_components(&Plane::from_fn(37, 29, |x, y| {
                (((x as u64 / 5) * 31 + (y as u64 / 7) * 17 + seed) % 5) as u32
            }));
            let d = downsample_mask(&m, 8).unwrap();
            let mut seen = vec![false; m.region_count()];
            for &l in d.labels.data() { seen[l as usize] = true; }
            for r in 0..m.region_count() as u32 {
                prop_assert_eq!(seen[r as usize], d.contains(r));
            }
            prop_assert_eq!(m.region_sizes().iter().sum::<usize>(), 37 * 29);
        }
    }
}
