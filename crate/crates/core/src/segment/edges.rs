//! Edge thinning and edge-bounded region formation.

use log::warn;

use super::mask::{connected_components, RegionMask};
use crate::plane::{LabelGrid, Plane};

/// Edge-detector output in `[0, 1]`.
pub type EdgeProbMap = Plane<f64>;
/// `true` marks an edge pixel.
pub type EdgeMap = Plane<bool>;

pub fn clamp_edges(map: &mut EdgeProbMap) {
    map.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

fn smooth_121(map: &EdgeProbMap) -> Plane<f64> {
    let (w, h) = map.dims();
    let at = |x: isize, y: isize| *map.get(x.clamp(0, w as isize - 1) as usize, y.clamp(0, h as isize - 1) as usize);
    let horiz = Plane::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        0.25 * at(x - 1, y) + 0.5 * at(x, y) + 0.25 * at(x + 1, y)
    });
    let hat = |x: usize, y: isize| *horiz.get(x, y.clamp(0, h as isize - 1) as usize);
    Plane::from_fn(w, h, |x, y| {
        let y = y as isize;
        0.25 * hat(x, y - 1) + 0.5 * hat(x, y) + 0.25 * hat(x, y + 1)
    })
}

/// Non-maximum suppression across the local edge normal, then hysteresis.
///
/// The normal is the direction of strongest negative curvature of the lightly
/// smoothed map; a pixel survives if its smoothed value is a maximum along that
/// normal (strictly above the preceding neighbour, so plateaus keep one pixel).
/// Survivors whose raw probability reaches `threshold` seed edges, and survivors
/// at or above `threshold / 2` that are 8-connected to a seed are kept.
pub fn thin_edges(edges: &EdgeProbMap, threshold: f64) -> EdgeMap {
    let (w, h) = edges.dims();
    if w == 0 || h == 0 {
        return Plane::filled(w, h, false);
    }
    let s = smooth_121(edges);
    let at = |x: isize, y: isize| *s.get(x.clamp(0, w as isize - 1) as usize, y.clamp(0, h as isize - 1) as usize);
    let mut nms = Plane::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let v = at(xi, yi);
            if v <= 0.0 {
                continue;
            }
            let exx = at(xi + 1, yi) - 2.0 * v + at(xi - 1, yi);
            let eyy = at(xi, yi + 1) - 2.0 * v + at(xi, yi - 1);
            let exy = (at(xi + 1, yi + 1) - at(xi + 1, yi - 1) - at(xi - 1, yi + 1) + at(xi - 1, yi - 1)) / 4.0;
            // principal axis of the larger eigenvalue; the normal is perpendicular
            let theta = 0.5 * (2.0 * exy).atan2(exx - eyy) + std::f64::consts::FRAC_PI_2;
            let (dx, dy) = quantize_direction(theta);
            let prev = neighbour(x, y, -dx, -dy, w, h).map(|(a, b)| *s.get(a, b)).unwrap_or(0.0);
            let next = neighbour(x, y, dx, dy, w, h).map(|(a, b)| *s.get(a, b)).unwrap_or(0.0);
            if v > prev && v >= next {
                nms.set(x, y, true);
            }
        }
    }
    let low = threshold * 0.5;
    let mut out = Plane::filled(w, h, false);
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if *nms.get(x, y) && *edges.get(x, y) >= threshold && !*out.get(x, y) {
                out.set(x, y, true);
                stack.push((x, y));
                while let Some((cx, cy)) = stack.pop() {
                    for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                        for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                            if !*out.get(nx, ny) && *nms.get(nx, ny) && *edges.get(nx, ny) >= low {
                                out.set(nx, ny, true);
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn quantize_direction(theta: f64) -> (isize, isize) {
    let deg = theta.to_degrees().rem_euclid(180.0);
    if !(22.5..157.5).contains(&deg) {
        (1, 0)
    } else if deg < 67.5 {
        (1, 1)
    } else if deg < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

fn neighbour(x: usize, y: usize, dx: isize, dy: isize, w: usize, h: usize) -> Option<(usize, usize)> {
    let nx = x as isize + dx;
    let ny = y as isize + dy;
    (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h).then_some((nx as usize, ny as usize))
}

/// 3×3 binary closing (dilate, then erode). Out-of-image pixels count as
/// background for the dilation and as foreground for the erosion so the
/// border does not eat edges.
pub fn close_edges(map: &EdgeMap) -> EdgeMap {
    let (w, h) = map.dims();
    let dilated = Plane::from_fn(w, h, |x, y| {
        (y.saturating_sub(1)..=(y + 1).min(h - 1))
            .any(|ny| (x.saturating_sub(1)..=(x + 1).min(w - 1)).any(|nx| *map.get(nx, ny)))
    });
    Plane::from_fn(w, h, |x, y| {
        (y as isize - 1..=y as isize + 1).all(|ny| {
            (x as isize - 1..=x as isize + 1).all(|nx| {
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                    true
                } else {
                    *dilated.get(nx as usize, ny as usize)
                }
            })
        })
    })
}

/// Regions bounded by edges: closing, connected components of the non-edge
/// pixels, then every edge pixel is absorbed into the 4-neighbouring region it
/// touches most (ties to the smaller label), layer by layer.
pub fn edge_regions(thinned: &EdgeMap) -> RegionMask {
    let (w, h) = thinned.dims();
    let closed = close_edges(thinned);
    if closed.data().iter().all(|&e| e) {
        warn!("edge map covers every pixel; falling back to a single region");
        return RegionMask::single(w, h);
    }
    // edge pixels get a shared sentinel so components only form over non-edges
    const EDGE: u32 = u32::MAX;
    let src: LabelGrid = closed.map(|&e| if e { EDGE } else { 0 });
    let (comp, _) = connected_components(&src);
    // connected_components numbers edge blobs too; renumber non-edge ones densely
    let mut remap = std::collections::HashMap::new();
    let mut labels: Vec<u32> = comp
        .data()
        .iter()
        .zip(closed.data())
        .map(|(&c, &e)| {
            if e {
                EDGE
            } else {
                let next = remap.len() as u32;
                *remap.entry(c).or_insert(next)
            }
        })
        .collect();

    loop {
        let mut updates = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if labels[i] != EDGE {
                    continue;
                }
                let mut votes: Vec<(u32, usize)> = Vec::with_capacity(4);
                for (dx, dy) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                    if let Some((nx, ny)) = neighbour(x, y, dx, dy, w, h) {
                        let l = labels[ny * w + nx];
                        if l != EDGE {
                            match votes.iter_mut().find(|(v, _)| *v == l) {
                                Some(e) => e.1 += 1,
                                None => votes.push((l, 1)),
                            }
                        }
                    }
                }
                if let Some(&(l, _)) = votes.iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))) {
                    updates.push((i, l));
                }
            }
        }
        if updates.is_empty() {
            break;
        }
        for (i, l) in updates {
            labels[i] = l;
        }
    }
    let grid = Plane::from_vec(w, h, labels).expect("sized");
    RegionMask::relabel_unchecked(&grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_map_has_no_edges() {
        let e = thin_edges(&Plane::filled(10, 10, 0.0), 0.5);
        assert!(e.data().iter().all(|&v| !v));
    }

    #[test]
    fn isolated_pixel_survives() {
        let mut m = Plane::filled(9, 9, 0.0);
        m.set(4, 4, 0.9);
        let e = thin_edges(&m, 0.5);
        assert_eq!(e.data().iter().filter(|&&v| v).count(), 1);
        assert!(*e.get(4, 4));
    }

    #[test]
    fn wide_ridge_thins_to_centreline() {
        let (w, h) = (20, 15);
        let m = Plane::from_fn(w, h, |_, y| if (6..=8).contains(&y) { 0.9 } else { 0.0 });
        let e = thin_edges(&m, 0.5);
        for x in 0..w {
            // oracle: per column, the row where the ridge profile peaks after smoothing is its middle
            let col: Vec<usize> = (0..h).filter(|&y| *e.get(x, y)).collect();
            assert_eq!(col, vec![7], "column {x}");
        }
    }

    #[test]
    fn no_edges_one_region() {
        assert_eq!(edge_regions(&Plane::filled(8, 6, false)).region_count(), 1);
    }

    #[test]
    fn all_edges_degenerates_to_one_region() {
        assert_eq!(edge_regions(&Plane::filled(4, 4, true)).region_count(), 1);
    }

    #[test]
    fn horizontal_line_splits_plane() {
        let e = Plane::from_fn(10, 8, |_, y| y == 3);
        let m = edge_regions(&e);
        assert_eq!(m.region_count(), 2);
        RegionMask::new(m.labels().clone()).unwrap();
    }

    #[test]
    fn closed_square_gives_inside_and_outside() {
        let (x0, y0, x1, y1) = (4usize, 3usize, 12usize, 10usize);
        let e = Plane::from_fn(18, 14, |x, y| {
            let on_x = (x == x0 || x == x1) && (y0..=y1).contains(&y);
            let on_y = (y == y0 || y == y1) && (x0..=x1).contains(&x);
            on_x || on_y
        });
        let m = edge_regions(&e);
        assert_eq!(m.region_count(), 2);
        // flood-fill oracle: interior pixels strictly inside the contour
        let interior = (x1 - x0 - 1) * (y1 - y0 - 1);
        let inside_label = m.label(8, 6);
        let inside = m.labels().data().iter().filter(|&&l| l == inside_label).count();
        assert_eq!(inside, interior);
    }

    #[test]
    fn small_gap_is_closed() {
        // a vertical line with a one-pixel gap still separates left from right
        let e = Plane::from_fn(9, 9, |x, y| x == 4 && y != 4);
        let m = edge_regions(&e);
        assert_eq!(m.region_count(), 2);
    }
}
