//! Atomic file writes and PNG conversion for planes and masks.

use std::io::{Cursor, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{Error, Result};
use crate::plane::{DepthPlane, ImagePlane, Plane, SaliencyMap};
use crate::segment::RegionMask;

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::file(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::file(path, e))?;
    tmp.persist(path).map_err(|e| Error::file(path, e.error))?;
    Ok(())
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|e| Error::file(path, e))
}

fn encode<P: image::PixelWithColorType>(buf: &ImageBuffer<P, Vec<P::Subpixel>>) -> Result<Vec<u8>>
where
    [P::Subpixel]: image::EncodableLayout,
    P: image::Pixel,
{
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::InvalidArgument(format!("PNG encoding failed: {e}")))?;
    Ok(out.into_inner())
}

fn is_16bit(img: &DynamicImage) -> bool {
    img.color().bytes_per_pixel() / img.color().channel_count() == 2
}

/// 8- or 16-bit PNG as RGB in `[0, 1]`.
pub fn read_rgb_png(path: &Path) -> Result<ImagePlane> {
    let img = decode(path)?;
    if is_16bit(&img) {
        let rgb = img.to_rgb16();
        let (w, h) = rgb.dimensions();
        let data = rgb.pixels().map(|p| p.0.map(|v| v as f64 / 65535.0)).collect();
        Plane::from_vec(w as usize, h as usize, data)
    } else {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let data = rgb.pixels().map(|p| p.0.map(|v| v as f64 / 255.0)).collect();
        Plane::from_vec(w as usize, h as usize, data)
    }
}

/// Grayscale PNG scaled to `[0, 1]` by its bit depth.
pub fn read_gray_png(path: &Path) -> Result<Plane<f64>> {
    let img = decode(path)?;
    let l = img.to_luma16();
    let (w, h) = l.dimensions();
    let data = l.pixels().map(|p| p.0[0] as f64 / 65535.0).collect();
    Plane::from_vec(w as usize, h as usize, data)
}

/// Binary ground truth: 8-bit value ≥ 128.
pub fn read_gt_png(path: &Path) -> Result<Plane<bool>> {
    let img = decode(path)?;
    let l = img.to_luma8();
    let (w, h) = l.dimensions();
    let data = l.pixels().map(|p| p.0[0] >= 128).collect();
    Plane::from_vec(w as usize, h as usize, data)
}

/// Raw 16-bit depth values; 0 marks invalid pixels.
pub fn read_depth_png(path: &Path) -> Result<DepthPlane> {
    let img = decode(path)?;
    let l = img.to_luma16();
    let (w, h) = l.dimensions();
    let data = l.pixels().map(|p| p.0[0] as f64).collect();
    Plane::from_vec(w as usize, h as usize, data)
}

pub fn read_mask_png(path: &Path) -> Result<RegionMask> {
    let img = decode(path)?;
    let l = img.to_luma16();
    let (w, h) = l.dimensions();
    let data = l.pixels().map(|p| p.0[0] as u32).collect();
    RegionMask::new(Plane::from_vec(w as usize, h as usize, data)?).map_err(|e| Error::file(path, e))
}

pub fn rgb_png_bytes(image: &ImagePlane) -> Result<Vec<u8>> {
    let (w, h) = image.dims();
    let buf = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Rgb(image.get(x as usize, y as usize).map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
    });
    encode(&buf)
}

/// `[0, 1]` map as 8-bit grayscale.
pub fn gray8_png_bytes(map: &SaliencyMap) -> Result<Vec<u8>> {
    let (w, h) = map.dims();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Luma([(map.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8])
    });
    encode(&buf)
}

pub fn gray16_png_bytes(values: &Plane<u16>) -> Result<Vec<u8>> {
    let (w, h) = values.dims();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(w as u32, h as u32, |x, y| Luma([*values.get(x as usize, y as usize)]));
    encode(&buf)
}

pub fn mask_png_bytes(mask: &RegionMask) -> Result<Vec<u8>> {
    if mask.region_count() > 65536 {
        return Err(Error::InvalidMask(format!(
            "{} regions exceed the 16-bit PNG label range",
            mask.region_count()
        )));
    }
    gray16_png_bytes(&mask.labels().map(|&l| l as u16))
}

pub fn gt_png_bytes(gt: &Plane<bool>) -> Result<Vec<u8>> {
    gray8_png_bytes(&gt.map(|&g| g as u8 as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let mask = RegionMask::new(Plane::from_fn(5, 3, |x, _| (x >= 2) as u32 + (x >= 4) as u32 * 299)).unwrap_err();
        assert!(matches!(mask, Error::InvalidMask(_)));
        let mask = RegionMask::new(Plane::from_fn(5, 3, |x, _| (x >= 2) as u32)).unwrap();
        let p = dir.path().join("m.png");
        write_atomic(&p, &mask_png_bytes(&mask).unwrap()).unwrap();
        assert_eq!(read_mask_png(&p).unwrap(), mask);

        let map = Plane::from_fn(4, 4, |x, y| (x + 4 * y) as f64 / 15.0);
        let p = dir.path().join("s.png");
        write_atomic(&p, &gray8_png_bytes(&map).unwrap()).unwrap();
        let back = read_gray_png(&p).unwrap();
        for (a, b) in back.data().iter().zip(map.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }

        let depth = Plane::from_fn(3, 2, |x, y| (x * 1000 + y) as u16);
        let p = dir.path().join("d.png");
        write_atomic(&p, &gray16_png_bytes(&depth).unwrap()).unwrap();
        assert_eq!(read_depth_png(&p).unwrap(), depth.map(|&v| v as f64));

        let img = Plane::from_fn(3, 2, |x, y| [x as f64 / 2.0, y as f64, 0.0]);
        let p = dir.path().join("i.png");
        write_atomic(&p, &rgb_png_bytes(&img).unwrap()).unwrap();
        let back = read_rgb_png(&p).unwrap();
        assert_eq!(back.get(1, 1), &[128.0 / 255.0, 1.0, 0.0]);
    }

    #[test]
    fn truncated_png_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        let bytes = gray8_png_bytes(&Plane::filled(8, 8, 0.5)).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        let err = read_gt_png(&p).unwrap_err().to_string();
        assert!(err.contains("bad.png"), "{err}");
    }
}
