//! Synthetic salient-object scenes: 1–3 coloured shapes on a textured
//! background, with matching ground truth, blurred outline edge maps and a
//! depth map in which every shape is nearer than the background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::plane::{ImagePlane, Plane};

/// Bounds on the salient area fraction of a generated scene.
pub const MIN_AREA_FRACTION: f64 = 0.05;
pub const MAX_AREA_FRACTION: f64 = 0.5;

const MAX_ATTEMPTS: usize = 200;
const MIN_COLOR_DISTANCE: f64 = 0.35;

#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub image: ImagePlane,
    pub gt: Plane<bool>,
    /// Edge probability in `[0, 1]`.
    pub edge_prob: Plane<f64>,
    /// Raw 16-bit distance; 0 marks invalid pixels.
    pub depth: Plane<u16>,
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, theta: f64 },
    Rectangle { cx: f64, cy: f64, hx: f64, hy: f64, theta: f64 },
    Triangle { v: [(f64, f64); 3] },
}

impl Shape {
    fn contains(&self, px: f64, py: f64) -> bool {
        match *self {
            Shape::Ellipse { cx, cy, rx, ry, theta } => {
                let (u, v) = rotate(px - cx, py - cy, theta);
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            Shape::Rectangle { cx, cy, hx, hy, theta } => {
                let (u, v) = rotate(px - cx, py - cy, theta);
                u.abs() <= hx && v.abs() <= hy
            }
            Shape::Triangle { v } => {
                let side = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0) * (py - a.1) - (b.1 - a.1) * (px - a.0);
                let s = [side(v[0], v[1]), side(v[1], v[2]), side(v[2], v[0])];
                s.iter().all(|&d| d >= 0.0) || s.iter().all(|&d| d <= 0.0)
            }
        }
    }

    fn center(&self) -> (f64, f64) {
        match *self {
            Shape::Ellipse { cx, cy, .. } | Shape::Rectangle { cx, cy, .. } => (cx, cy),
            Shape::Triangle { v } => ((v[0].0 + v[1].0 + v[2].0) / 3.0, (v[0].1 + v[1].1 + v[2].1) / 3.0),
        }
    }

    fn random(size: f64, rng: &mut ChaCha8Rng) -> Shape {
        let cx = rng.random_range(0.2..0.8) * size;
        let cy = rng.random_range(0.2..0.8) * size;
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let scale = |rng: &mut ChaCha8Rng| rng.random_range(0.1..0.26) * size;
        match rng.random_range(0..3) {
            0 => Shape::Ellipse { cx, cy, rx: scale(rng), ry: scale(rng), theta },
            1 => Shape::Rectangle { cx, cy, hx: scale(rng) * 0.85, hy: scale(rng) * 0.85, theta },
            _ => {
                let r = scale(rng) * 1.3;
                let base = rng.random_range(0.0..std::f64::consts::TAU);
                let mut v = [(0.0, 0.0); 3];
                for (k, p) in v.iter_mut().enumerate() {
                    let a = base + k as f64 * std::f64::consts::TAU / 3.0 + rng.random_range(-0.4..0.4);
                    *p = (cx + r * a.cos(), cy + r * a.sin());
                }
                Shape::Triangle { v }
            }
        }
    }
}

fn rotate(x: f64, y: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (c * x + s * y, -s * x + c * y)
}

/// Independent generator for sample `index` of a corpus seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)]
}

fn color_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Index of the topmost shape covering each pixel centre (0 = background).
fn layout(shapes: &[Shape], size: usize) -> Plane<u8> {
    Plane::from_fn(size, size, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        shapes
            .iter()
            .enumerate()
            .rev()
            .find(|(_, s)| s.contains(px, py))
            .map_or(0, |(i, _)| i as u8 + 1)
    })
}

fn blur_121(map: &Plane<f64>) -> Plane<f64> {
    let (w, h) = map.dims();
    let at = |p: &Plane<f64>, x: isize, y: isize| *p.get(x.clamp(0, w as isize - 1) as usize, y.clamp(0, h as isize - 1) as usize);
    let horiz = Plane::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        0.25 * at(map, x - 1, y) + 0.5 * at(map, x, y) + 0.25 * at(map, x + 1, y)
    });
    Plane::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        0.25 * at(&horiz, x, y - 1) + 0.5 * at(&horiz, x, y) + 0.25 * at(&horiz, x, y + 1)
    })
}

/// Renders one scene. `size` must be a positive multiple of 16.
pub fn render_sample(size: usize, rng: &mut ChaCha8Rng) -> Result<SyntheticSample> {
    if size == 0 || !size.is_multiple_of(16) {
        return Err(Error::InvalidArgument(format!("corpus image size {size} must be a positive multiple of 16")));
    }
    let total = (size * size) as f64;
    let count = rng.random_range(1..=3);
    let mut shapes = Vec::new();
    let mut ids = Plane::filled(size, size, 0u8);
    for _ in 0..MAX_ATTEMPTS {
        shapes = (0..count).map(|_| Shape::random(size as f64, rng)).collect();
        ids = layout(&shapes, size);
        let visible = (1..=count as u8).all(|k| ids.data().iter().filter(|&&v| v == k).count() >= size);
        let frac = ids.data().iter().filter(|&&v| v > 0).count() as f64 / total;
        if visible && (MIN_AREA_FRACTION..=MAX_AREA_FRACTION).contains(&frac) {
            break;
        }
        shapes.clear();
    }
    if shapes.is_empty() {
        // Fallback keeps generation infallible: a centred ellipse covering ~20%.
        let r = (0.2 * total / std::f64::consts::PI).sqrt();
        let c = size as f64 / 2.0;
        shapes = vec![Shape::Ellipse { cx: c, cy: c, rx: r, ry: r, theta: 0.0 }];
        ids = layout(&shapes, size);
    }

    let background = random_color(rng);
    let mut colors = vec![background];
    while colors.len() <= shapes.len() {
        let c = random_color(rng);
        if color_distance(c, background) >= MIN_COLOR_DISTANCE {
            colors.push(c);
        }
    }
    let (fx, fy) = (rng.random_range(0.1..0.5), rng.random_range(0.1..0.5));
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let amp = rng.random_range(0.03..0.1);
    let noise = Normal::new(0.0, 0.02).expect("valid std");
    let image = Plane::from_fn(size, size, |x, y| {
        let k = *ids.get(x, y) as usize;
        let texture = if k == 0 { amp * (fx * x as f64 + fy * y as f64 + phase).sin() } else { 0.0 };
        colors[k].map(|c| (c + texture + noise.sample(rng)).clamp(0.0, 1.0))
    });
    let gt = ids.map(|&k| k > 0);

    // Outline contrast varies along each contour like a learned detector's
    // response; strongly modulated contours break after thinning.
    let modulation: Vec<(f64, f64, f64, (f64, f64))> = shapes
        .iter()
        .map(|sh| {
            let amp = rng.random_range(0.0..0.9);
            let freq = rng.random_range(1..=2) as f64;
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (amp, freq, phase, sh.center())
        })
        .collect();
    let outline = Plane::from_fn(size, size, |x, y| {
        let k = *ids.get(x, y);
        let mut top = 0u8;
        for (nx, ny) in [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)] {
            if nx < size && ny < size && *ids.get(nx, ny) != k {
                top = top.max(k.max(*ids.get(nx, ny)));
            }
        }
        if top == 0 {
            return 0.0;
        }
        let (amp, freq, phase, (cx, cy)) = modulation[top as usize - 1];
        let theta = (y as f64 + 0.5 - cy).atan2(x as f64 + 0.5 - cx);
        1.0 - amp * (0.5 + 0.5 * (freq * theta + phase).sin())
    });
    let blurred = blur_121(&outline);
    let peak = blurred.data().iter().copied().fold(0.0, f64::max);
    let edge_prob = blurred.map(|&v| if peak > 0.0 { v / peak } else { 0.0 });
    let edge_prob = Plane::from_fn(size, size, |x, y| (edge_prob.get(x, y) + rng.random_range(0.0..0.05)).clamp(0.0, 1.0));

    let near: Vec<f64> = (0..shapes.len()).map(|_| rng.random_range(12_000.0..25_000.0)).collect();
    let depth_noise = Normal::new(0.0, 200.0).expect("valid std");
    let depth = Plane::from_fn(size, size, |x, y| {
        if rng.random_bool(0.005) {
            return 0;
        }
        let k = *ids.get(x, y) as usize;
        let base = if k == 0 { 45_000.0 - 10_000.0 * y as f64 / size as f64 } else { near[k - 1] };
        (base + depth_noise.sample(rng)).round().clamp(1.0, 65_535.0) as u16
    });

    Ok(SyntheticSample { image, gt, edge_prob, depth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_fraction_and_determinism() {
        for i in 0..20 {
            let a = render_sample(64, &mut sample_rng(3, i)).unwrap();
            let b = render_sample(64, &mut sample_rng(3, i)).unwrap();
            assert_eq!(a.image, b.image);
            assert_eq!(a.depth, b.depth);
            let frac = a.gt.data().iter().filter(|&&g| g).count() as f64 / a.gt.len() as f64;
            assert!((MIN_AREA_FRACTION..=MAX_AREA_FRACTION).contains(&frac), "{frac}");
            assert!(a.edge_prob.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn shapes_are_nearer_than_background() {
        let s = render_sample(48, &mut sample_rng(1, 0)).unwrap();
        let mean = |want: bool| {
            let v: Vec<f64> = s
                .depth
                .data()
                .iter()
                .zip(s.gt.data())
                .filter(|(&d, &g)| d > 0 && g == want)
                .map(|(&d, _)| d as f64)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(true) < mean(false));
    }

    #[test]
    fn size_must_be_multiple_of_16() {
        assert!(render_sample(40, &mut sample_rng(0, 0)).is_err());
    }
}
