//! Dense 2-D grids used for images, depth, saliency maps and label maps.

use crate::error::{Error, Result};

/// Row-major `width × height` grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plane<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// RGB image with channels in `[0, 1]`.
pub type ImagePlane = Plane<[f64; 3]>;
/// Scalar depth per pixel.
pub type DepthPlane = Plane<f64>;
/// Single-channel map; saliency maps live in `[0, 1]`.
pub type SaliencyMap = Plane<f64>;
/// Integer labels with no structural guarantees (see `RegionMask` for those).
pub type LabelGrid = Plane<u32>;

impl<T: Clone> Plane<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape("plane data", width * height, data.len()));
        }
        Ok(Plane { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Plane<U> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Pads bottom/right by replicating the last row/column.
    pub fn pad_replicate(&self, width: usize, height: usize) -> Self {
        assert!(width >= self.width && height >= self.height);
        Plane::from_fn(width, height, |x, y| {
            self.get(x.min(self.width - 1), y.min(self.height - 1)).clone()
        })
    }

    /// Pads bottom/right by replication so both dims are multiples of `multiple`.
    pub fn pad_to_multiple(&self, multiple: usize) -> Self {
        let w = self.width.div_ceil(multiple) * multiple;
        let h = self.height.div_ceil(multiple) * multiple;
        if w == self.width && h == self.height {
            self.clone()
        } else {
            self.pad_replicate(w, h)
        }
    }

    /// Top-left crop.
    pub fn crop(&self, width: usize, height: usize) -> Self {
        assert!(width <= self.width && height <= self.height);
        Plane::from_fn(width, height, |x, y| self.get(x, y).clone())
    }

    /// Nearest-neighbour resampling using pixel-centre alignment.
    pub fn resample_nearest(&self, width: usize, height: usize) -> Self {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Plane::from_fn(width, height, |x, y| {
            let src_x = (((x as f64 + 0.5) * sx) as usize).min(self.width - 1);
            let src_y = (((y as f64 + 0.5) * sy) as usize).min(self.height - 1);
            self.get(src_x, src_y).clone()
        })
    }
}

impl Plane<f64> {
    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn variance(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }
}

impl Plane<[f64; 3]> {
    pub fn luminance(&self) -> Plane<f64> {
        self.map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pad_and_crop_roundtrip() {
        let p = Plane::from_fn(3, 2, |x, y| (x + 10 * y) as f64);
        let padded = p.pad_to_multiple(4);
        assert_eq!(padded.dims(), (4, 4));
        assert_eq!(*padded.get(3, 3), 12.0);
        assert_eq!(padded.crop(3, 2), p);
    }

    #[test]
    fn nearest_resample_upscales_by_repeat() {
        let p = Plane::from_vec(2, 1, vec![1u32, 2]).unwrap();
        let up = p.resample_nearest(4, 2);
        assert_eq!(up.data(), &[1, 1, 2, 2, 1, 1, 2, 2]);
        assert_eq!(up.resample_nearest(2, 1), p);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Plane::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
