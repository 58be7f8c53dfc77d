//! PNG image input and output.
//!
//! Images are stored as 16-bit RGB PNGs holding linear values; pixel data in
//! memory is `[f64; 3]` per pixel in [0, 1], row major. 16 bits keep the
//! quantization floor (1/65535) far below every tolerance used in testing.

use std::path::Path;

use anyhow::{bail, Context, Result};
use image::{ImageBuffer, Rgb};

pub struct LoadedImage {
    pub pixels: Vec<[f64; 3]>,
    pub width: usize,
    pub height: usize,
}

pub fn save_png(path: &Path, pixels: &[[f64; 3]], width: usize, height: usize) -> Result<()> {
    assert_eq!(pixels.len(), width * height);
    let mut buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::new(width as u32, height as u32);
    for (i, p) in pixels.iter().enumerate() {
        let x = (i % width) as u32;
        let y = (i / width) as u32;
        let q = |v: f64| (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        buf.put_pixel(x, y, Rgb([q(p[0]), q(p[1]), q(p[2])]));
    }
    buf.save(path)
        .with_context(|| format!("writing image {}", path.display()))
}

pub fn load_png(path: &Path) -> Result<LoadedImage> {
    let img = image::open(path).with_context(|| format!("reading image {}", path.display()))?;
    let rgb = img.to_rgb16();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        bail!("empty image {}", path.display());
    }
    let pixels = rgb
        .pixels()
        .map(|p| {
            [
                p.0[0] as f64 / 65535.0,
                p.0[1] as f64 / 65535.0,
                p.0[2] as f64 / 65535.0,
            ]
        })
        .collect();
    Ok(LoadedImage {
        pixels,
        width: w,
        height: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let px: Vec<[f64; 3]> = (0..12)
            .map(|i| {
                let v = i as f64 / 11.0;
                [v, 1.0 - v, 0.5 * v]
            })
            .collect();
        save_png(&path, &px, 4, 3).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!((back.width, back.height), (4, 3));
        for (a, b) in px.iter().zip(&back.pixels) {
            for ch in 0..3 {
                assert!((a[ch] - b[ch]).abs() <= 0.5 / 65535.0 + 1e-12);
            }
        }
    }

    #[test]
    fn missing_file_is_error() {
        assert!(load_png(Path::new("/nonexistent/x.png")).is_err());
    }
}
