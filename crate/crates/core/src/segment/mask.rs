use crate::error::{Error, Result};
use crate::plane::{LabelGrid, Plane};

/// Per-pixel region labels partitioning an image.
///
/// Labels are exactly `0..region_count`, every label occurs, and each label's
/// pixel set is 4-connected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionMask {
    labels: LabelGrid,
    region_count: usize,
}

/// Tight bounding rectangle of a region, inclusive pixel bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoI {
    pub region_id: u32,
    pub rect: Rect,
}

impl RegionMask {
    /// Validates structure; fails if labels are not contiguous or a region is split.
    pub fn new(labels: LabelGrid) -> Result<Self> {
        let region_count = check_labels(&labels)?;
        Ok(RegionMask { labels, region_count })
    }

    /// Renumbers labels in first-occurrence (row-major) order and splits every
    /// label into its 4-connected components, so any label grid becomes valid.
    pub fn from_components(labels: &LabelGrid) -> Self {
        let (comp, count) = connected_components(labels);
        RegionMask {
            labels: comp,
            region_count: count,
        }
    }

    /// Renumbers labels in first-occurrence order without splitting. The caller
    /// guarantees each label is already connected.
    pub(crate) fn relabel_unchecked(labels: &LabelGrid) -> Self {
        let mut map = std::collections::HashMap::new();
        let relabeled = labels.map(|&l| {
            let next = map.len() as u32;
            *map.entry(l).or_insert(next)
        });
        RegionMask {
            region_count: map.len(),
            labels: relabeled,
        }
    }

    pub fn single(width: usize, height: usize) -> Self {
        RegionMask {
            labels: Plane::filled(width, height, 0),
            region_count: 1,
        }
    }

    pub fn labels(&self) -> &LabelGrid {
        &self.labels
    }

    pub fn region_count(&self) -> usize {
        self.region_count
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn label(&self, x: usize, y: usize) -> u32 {
        *self.labels.get(x, y)
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.region_count];
        for &l in self.labels.data() {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Sorted, deduplicated 4-adjacency lists (self excluded).
    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.region_count];
        let (w, h) = self.labels.dims();
        for y in 0..h {
            for x in 0..w {
                let a = self.label(x, y);
                if x + 1 < w {
                    let b = self.label(x + 1, y);
                    if a != b {
                        adj[a as usize].push(b);
                        adj[b as usize].push(a);
                    }
                }
                if y + 1 < h {
                    let b = self.label(x, y + 1);
                    if a != b {
                        adj[a as usize].push(b);
                        adj[b as usize].push(a);
                    }
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    pub fn rois(&self) -> Vec<RoI> {
        region_rois(self)
    }
}

/// One RoI per region with its tight external rectangle.
pub fn region_rois(mask: &RegionMask) -> Vec<RoI> {
    let mut rects: Vec<Option<Rect>> = vec![None; mask.region_count()];
    let (w, h) = mask.labels().dims();
    for y in 0..h {
        for x in 0..w {
            let r = &mut rects[mask.label(x, y) as usize];
            *r = Some(match *r {
                None => Rect { x0: x, y0: y, x1: x, y1: y },
                Some(rc) => Rect {
                    x0: rc.x0.min(x),
                    y0: rc.y0.min(y),
                    x1: rc.x1.max(x),
                    y1: rc.y1.max(y),
                },
            });
        }
    }
    rects
        .into_iter()
        .enumerate()
        .map(|(i, r)| RoI {
            region_id: i as u32,
            rect: r.expect("every label occurs"),
        })
        .collect()
}

/// 4-connected components of equal-label pixels, numbered in row-major
/// first-occurrence order.
pub fn connected_components(labels: &LabelGrid) -> (LabelGrid, usize) {
    let (w, h) = labels.dims();
    let mut out = vec![u32::MAX; w * h];
    let mut count = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if out[start] != u32::MAX {
            continue;
        }
        let l = labels.data()[start];
        out[start] = count;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if out[j] == u32::MAX && labels.data()[j] == l {
                    out[j] = count;
                    stack.push(j);
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
        count += 1;
    }
    (Plane::from_vec(w, h, out).expect("sized"), count as usize)
}

fn check_labels(labels: &LabelGrid) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::InvalidMask("empty mask".into()));
    }
    let max = *labels.data().iter().max().expect("non-empty") as usize;
    let mut seen = vec![false; max + 1];
    for &l in labels.data() {
        seen[l as usize] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidMask(format!("label {missing} is unused (labels must be 0..R)")));
    }
    let (_, components) = connected_components(labels);
    if components != max + 1 {
        return Err(Error::InvalidMask(format!(
            "{} labels but {components} connected components",
            max + 1
        )));
    }
    Ok(max + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: usize, h: usize, v: &[u32]) -> LabelGrid {
        Plane::from_vec(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn validation() {
        assert!(RegionMask::new(grid(2, 2, &[0, 0, 1, 1])).is_ok());
        assert!(RegionMask::new(grid(2, 2, &[0, 0, 2, 2])).is_err());
        // checkerboard: two labels, four components
        assert!(RegionMask::new(grid(2, 2, &[0, 1, 1, 0])).is_err());
    }

    #[test]
    fn from_components_splits_and_relabels() {
        let m = RegionMask::from_components(&grid(3, 1, &[5, 7, 5]));
        assert_eq!(m.labels().data(), &[0, 1, 2]);
        assert_eq!(m.region_count(), 3);
    }

    #[test]
    fn single_region_roi_is_whole_image() {
        let rois = region_rois(&RegionMask::single(5, 4));
        assert_eq!(rois, vec![RoI { region_id: 0, rect: Rect { x0: 0, y0: 0, x1: 4, y1: 3 } }]);
    }

    #[test]
    fn two_pixel_region_rect() {
        // region 1 is pixels (row 2, col 3) and (row 2, col 4)
        let mut v = vec![0u32; 36];
        v[2 * 6 + 3] = 1;
        v[2 * 6 + 4] = 1;
        let m = RegionMask::new(grid(6, 6, &v)).unwrap();
        let rois = region_rois(&m);
        assert_eq!(rois[1].rect, Rect { x0: 3, y0: 2, x1: 4, y1: 2 });
    }

    #[test]
    fn interleaved_labels_span_whole_image() {
        // checkerboard labels are not a valid RegionMask, but RoI extraction is
        // a pure min/max scan and both rects cover the image
        let m = RegionMask {
            labels: grid(4, 4, &[0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 0]),
            region_count: 2,
        };
        let full = Rect { x0: 0, y0: 0, x1: 3, y1: 3 };
        assert!(region_rois(&m).iter().all(|r| r.rect == full));
    }

    #[test]
    fn adjacency_lists() {
        let m = RegionMask::new(grid(3, 2, &[0, 1, 2, 0, 1, 2])).unwrap();
        assert_eq!(m.adjacency(), vec![vec![1], vec![0, 2], vec![1]]);
    }
}
