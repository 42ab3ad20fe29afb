use std::path::Path;

use crate::error::{Error, Result};

/// RGB image with channels in `[0, 1]`, stored row-major as `[r, g, b]` triples.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::CorruptFile(format!(
                "expected {} bytes for {width}x{height} RGB, got {}",
                width * height * 3,
                bytes.len()
            )));
        }
        Ok(Self { width, height, data: bytes.iter().map(|&b| b as f64 / 255.0).collect() })
    }

    /// Per-channel mean over all pixels.
    pub fn mean_color(&self) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for px in self.data.chunks_exact(3) {
            for c in 0..3 {
                acc[c] += px[c];
            }
        }
        let n = self.pixel_count().max(1) as f64;
        acc.map(|v| v / n)
    }
}

/// `round(v * 255)` clamped to a byte; halves round up.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = image::ImageReader::open(path)?
        .with_guessed_format()
        .map_err(|e| Error::CorruptFile(format!("{}: {e}", path.display())))?;
    match reader.format() {
        Some(image::ImageFormat::Png) => {}
        other => {
            return Err(Error::UnsupportedFormat(format!("{}: {:?}", path.display(), other)));
        }
    }
    let decoded = reader.decode().map_err(|e| Error::CorruptFile(format!("{}: {e}", path.display())))?;
    let rgb = match decoded {
        image::DynamicImage::ImageRgb8(rgb) => rgb,
        image::DynamicImage::ImageRgba8(_) | image::DynamicImage::ImageLuma8(_) | image::DynamicImage::ImageLumaA8(_) => {
            decoded.to_rgb8()
        }
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: only 8-bit PNG is supported, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = rgb.dimensions();
    ImageBuffer::from_bytes(w as usize, h as usize, rgb.as_raw())
}

pub fn save_image(img: &ImageBuffer, path: &Path) -> Result<()> {
    save_rgb_bytes(img.width, img.height, &img.to_bytes(), path)
}

pub(crate) fn save_rgb_bytes(width: usize, height: usize, bytes: &[u8], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    image::save_buffer_with_format(path, bytes, width as u32, height as u32, image::ColorType::Rgb8, image::ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Loads a single-channel mask, mapping bytes to `[0, 1]`. RGB masks use the
/// first channel.
pub fn load_mask(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let decoded = image::open(path).map_err(|e| Error::CorruptFile(format!("{}: {e}", path.display())))?;
    let luma = decoded.to_luma8();
    let (w, h) = luma.dimensions();
    Ok((w as usize, h as usize, luma.as_raw().iter().map(|&b| b as f64 / 255.0).collect()))
}

pub fn save_mask(width: usize, height: usize, values: &[f64], path: &Path) -> Result<()> {
    let bytes: Vec<u8> = values.iter().map(|&v| quantize(v)).collect();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    image::save_buffer_with_format(path, &bytes, width as u32, height as u32, image::ColorType::L8, image::ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn byte_mapping_endpoints() {
        let img = ImageBuffer::from_bytes(3, 1, &[0, 0, 0, 255, 255, 255, 128, 128, 128]).unwrap();
        assert_eq!(img.get(0, 0), [0.0; 3]);
        assert_eq!(img.get(1, 0), [1.0; 3]);
        assert!((img.get(2, 0)[0] - 0.501_96).abs() < 1e-5);
        assert_eq!(img.get(2, 0)[0], 128.0 / 255.0);
    }

    #[test]
    fn quantize_rounds_half_up() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(1.7), 255);
    }

    #[test]
    fn save_load_quantization_bound() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let img = ImageBuffer::from_fn(100, 100, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
        let path = dir.path().join("x.png");
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!((back.width, back.height), (100, 100));
        let err = img.data.iter().zip(&back.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1.0 / 510.0 + 1e-15, "err {err}");
    }

    #[test]
    fn missing_and_non_png() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_image(&dir.path().join("nope.png")), Err(Error::MissingFile(_))));
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"definitely not an image").unwrap();
        assert!(matches!(load_image(&p), Err(Error::UnsupportedFormat(_)) | Err(Error::CorruptFile(_))));
    }
}
