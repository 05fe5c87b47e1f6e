//! SLIC superpixels: k-means in CIELAB + image-plane space with a compactness
//! weight, followed by a connectivity pass.

use std::collections::BTreeMap;

use super::mask::{connected_components, RegionMask};
use crate::error::{Error, Result};
use crate::plane::{ImagePlane, LabelGrid, Plane};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlicParams {
    pub regions: usize,
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            regions: 200,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB in `[0, 1]` to CIELAB (D65).
pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = (0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b) / 0.950_47;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175 * b;
    let z = (0.019_333_9 * r + 0.119_192 * g + 0.950_304_1 * b) / 1.088_83;
    let f = |t: f64| {
        if t > 0.008_856 {
            t.cbrt()
        } else {
            7.787 * t + 16.0 / 116.0
        }
    };
    let (fx, fy, fz) = (f(x), f(y), f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn lab_dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

pub fn slic_superpixels(image: &ImagePlane, params: SlicParams) -> Result<RegionMask> {
    let (w, h) = image.dims();
    let n = w * h;
    if n == 0 {
        return Err(Error::InvalidArgument("SLIC on an empty image".into()));
    }
    if params.regions == 0 || params.regions > n {
        return Err(Error::InvalidArgument(format!(
            "SLIC region count {} must be in 1..={n}",
            params.regions
        )));
    }
    if params.regions == 1 {
        return Ok(RegionMask::single(w, h));
    }
    let lab = image.map(|&p| rgb_to_lab(p));

    let nx = ((params.regions as f64 * w as f64 / h as f64).sqrt().round() as usize).clamp(1, w);
    let ny = ((params.regions as f64 / nx as f64).round() as usize).clamp(1, h);
    let step_x = w as f64 / nx as f64;
    let step_y = h as f64 / ny as f64;
    let s = (n as f64 / (nx * ny) as f64).sqrt();

    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = (((i as f64 + 0.5) * step_x) as usize).min(w - 1);
            let cy = (((j as f64 + 0.5) * step_y) as usize).min(h - 1);
            let (px, py) = lowest_gradient_near(&lab, cx, cy);
            centers.push(Center {
                lab: *lab.get(px, py),
                x: px as f64,
                y: py as f64,
            });
        }
    }

    let spatial_w = (params.compactness / s).powi(2);
    let mut assign = vec![u32::MAX; n];
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..params.iterations.max(1) {
        assign.iter_mut().for_each(|a| *a = u32::MAX);
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let x0 = (c.x - s).floor().max(0.0) as usize;
            let x1 = ((c.x + s).ceil() as usize).min(w - 1);
            let y0 = (c.y - s).floor().max(0.0) as usize;
            let y1 = ((c.y + s).ceil() as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * w + x;
                    let ds2 = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
                    let d = lab_dist2(lab.get(x, y), &c.lab) + ds2 * spatial_w;
                    if d < dist[i] {
                        dist[i] = d;
                        assign[i] = ci as u32;
                    }
                }
            }
        }
        // pixels outside every search window go to the globally nearest centre
        for i in 0..n {
            if assign[i] == u32::MAX {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                let p = &lab.data()[i];
                let mut best = (f64::INFINITY, 0u32);
                for (ci, c) in centers.iter().enumerate() {
                    let d = lab_dist2(p, &c.lab) + ((x - c.x).powi(2) + (y - c.y).powi(2)) * spatial_w;
                    if d < best.0 {
                        best = (d, ci as u32);
                    }
                }
                assign[i] = best.1;
            }
        }
        let mut acc = vec![([0.0; 3], 0.0, 0.0, 0usize); centers.len()];
        for (i, &a) in assign.iter().enumerate() {
            let e = &mut acc[a as usize];
            let p = &lab.data()[i];
            for k in 0..3 {
                e.0[k] += p[k];
            }
            e.1 += (i % w) as f64;
            e.2 += (i / w) as f64;
            e.3 += 1;
        }
        for (c, (l, sx, sy, cnt)) in centers.iter_mut().zip(acc) {
            if cnt > 0 {
                let k = cnt as f64;
                c.lab = [l[0] / k, l[1] / k, l[2] / k];
                c.x = sx / k;
                c.y = sy / k;
            }
        }
    }

    let labels = Plane::from_vec(w, h, assign).expect("sized");
    Ok(enforce_connectivity(&labels))
}

fn lowest_gradient_near(lab: &Plane<[f64; 3]>, cx: usize, cy: usize) -> (usize, usize) {
    let (w, h) = lab.dims();
    let grad = |x: usize, y: usize| -> f64 {
        if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
            return f64::INFINITY;
        }
        lab_dist2(lab.get(x + 1, y), lab.get(x - 1, y)) + lab_dist2(lab.get(x, y + 1), lab.get(x, y - 1))
    };
    let mut best = (grad(cx, cy), cx, cy);
    for y in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
        for x in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
            let g = grad(x, y);
            if g < best.0 {
                best = (g, x, y);
            }
        }
    }
    (best.1, best.2)
}

/// Keeps the largest connected piece of every label and merges each remaining
/// (orphan) piece into the neighbouring piece it shares the longest boundary
/// with, smallest orphans first.
pub fn enforce_connectivity(labels: &LabelGrid) -> RegionMask {
    let (w, h) = labels.dims();
    let (comp, count) = connected_components(labels);
    let comp_label: Vec<u32> = {
        let mut v = vec![0; count];
        for (i, &c) in comp.data().iter().enumerate() {
            v[c as usize] = labels.data()[i];
        }
        v
    };
    let mut size = vec![0usize; count];
    for &c in comp.data() {
        size[c as usize] += 1;
    }
    let mut largest: BTreeMap<u32, usize> = BTreeMap::new();
    for c in 0..count {
        let l = comp_label[c];
        match largest.get(&l) {
            Some(&best) if size[best] >= size[c] => {}
            _ => {
                largest.insert(l, c);
            }
        }
    }
    // shared-boundary edge counts between components
    let mut border: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); count];
    for y in 0..h {
        for x in 0..w {
            let a = *comp.get(x, y) as usize;
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx < w && ny < h {
                    let b = *comp.get(nx, ny) as usize;
                    if a != b {
                        *border[a].entry(b).or_default() += 1;
                        *border[b].entry(a).or_default() += 1;
                    }
                }
            }
        }
    }
    let mut parent: Vec<usize> = (0..count).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut orphans: Vec<usize> = (0..count).filter(|&c| largest[&comp_label[c]] != c).collect();
    orphans.sort_by_key(|&c| (size[c], c));
    for o in orphans {
        let root = find(&mut parent, o);
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for (&nb, &cnt) in &border[o] {
            let r = find(&mut parent, nb);
            if r != root {
                *votes.entry(r).or_default() += cnt;
            }
        }
        // most shared edges, ties to the smallest root id
        if let Some((&target, _)) = votes.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) {
            parent[root] = target;
        }
    }
    let merged = comp.map(|&c| c);
    let roots: Vec<u32> = (0..count).map(|c| find(&mut parent, c) as u32).collect();
    let merged = merged.map(|&c| roots[c as usize]);
    RegionMask::relabel_unchecked(&merged)
}
