use crate::error::{Error, Result};
use crate::math::{cell, lerp, sigmoid};
use crate::projection::{uv_to_pixel, BoundingBox2, PixelCoord};

/// Bilinear lookup position on a `width x height` grid.
#[derive(Clone, Copy, Debug)]
pub struct Bilinear {
    pub x0: usize,
    pub y0: usize,
    pub fx: f64,
    pub fy: f64,
}

impl Bilinear {
    #[inline]
    pub fn at(x: f64, y: f64, width: usize, height: usize) -> Self {
        let (x0, fx) = cell(x, width);
        let (y0, fy) = cell(y, height);
        Self { x0, y0, fx, fy }
    }

    /// Interpolates channel `c` of an interleaved `channels`-wide image.
    #[inline]
    pub fn sample(&self, values: &[f64], width: usize, channels: usize, c: usize) -> f64 {
        let i00 = (self.y0 * width + self.x0) * channels + c;
        let i10 = i00 + channels;
        let i01 = i00 + width * channels;
        let i11 = i01 + channels;
        let top = lerp(values[i00], values[i10], self.fx);
        let bot = lerp(values[i01], values[i11], self.fx);
        lerp(top, bot, self.fy)
    }

    /// Derivatives of the interpolant of channel `c` w.r.t. `x` and `y`.
    #[inline]
    pub fn slopes(&self, values: &[f64], width: usize, channels: usize, c: usize) -> (f64, f64) {
        let i00 = (self.y0 * width + self.x0) * channels + c;
        let i10 = i00 + channels;
        let i01 = i00 + width * channels;
        let i11 = i01 + channels;
        let (v00, v10, v01, v11) = (values[i00], values[i10], values[i01], values[i11]);
        let dx = (1.0 - self.fy) * (v10 - v00) + self.fy * (v11 - v01);
        let dy = lerp(v01, v11, self.fx) - lerp(v00, v10, self.fx);
        (dx, dy)
    }

    /// Pixel indices of the four taps with their weights.
    #[inline]
    pub fn taps(&self, width: usize) -> [(usize, f64); 4] {
        let i00 = self.y0 * width + self.x0;
        [
            (i00, (1.0 - self.fx) * (1.0 - self.fy)),
            (i00 + 1, self.fx * (1.0 - self.fy)),
            (i00 + width, (1.0 - self.fx) * self.fy),
            (i00 + width + 1, self.fx * self.fy),
        ]
    }
}

/// Learnable `height x width x 3` image of raw (pre-sigmoid) values, covering
/// `canvas` in canonical coordinates. Row 0 is the canvas `v` minimum.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalImage {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub canvas: BoundingBox2,
}

/// Result of a color lookup, kept for the backward pass.
#[derive(Clone, Copy, Debug)]
pub struct ColorSample {
    pub rgb: [f64; 3],
    pub pixel: PixelCoord,
    pub lookup: Bilinear,
}

impl CanonicalImage {
    pub fn new(height: usize, width: usize, canvas: BoundingBox2) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::InvalidConfig(format!("canonical image must be at least 2x2, got {height}x{width}")));
        }
        Ok(Self { height, width, values: vec![0.0; height * width * 3], canvas })
    }

    #[inline]
    pub fn locate(&self, uv: [f64; 2]) -> (PixelCoord, Bilinear) {
        let px = uv_to_pixel(uv, &self.canvas, self.height, self.width);
        (px, Bilinear::at(px.x, px.y, self.width, self.height))
    }

    #[inline]
    pub fn sample(&self, uv: [f64; 2]) -> ColorSample {
        let (pixel, lookup) = self.locate(uv);
        let rgb = [0, 1, 2].map(|c| sigmoid(lookup.sample(&self.values, self.width, 3, c)));
        ColorSample { rgb, pixel, lookup }
    }

    /// `sigmoid(bilinear(uv))` per channel.
    pub fn query_color(&self, uv: [f64; 2]) -> [f64; 3] {
        self.sample(uv).rgb
    }

    /// Backward through the lookup: scatters `d loss / d rgb` onto the raw
    /// pixels and returns `d loss / d uv`.
    #[inline]
    pub fn backward(&self, s: &ColorSample, d_rgb: [f64; 3], grad: &mut [f64]) -> [f64; 2] {
        let mut d_uv = [0.0; 2];
        let taps = s.lookup.taps(self.width);
        for c in 0..3 {
            let d_raw = d_rgb[c] * s.rgb[c] * (1.0 - s.rgb[c]);
            if d_raw == 0.0 {
                continue;
            }
            for (idx, w) in taps {
                grad[idx * 3 + c] += d_raw * w;
            }
            let (dx, dy) = s.lookup.slopes(&self.values, self.width, 3, c);
            d_uv[0] += d_raw * dx * s.pixel.dx_du;
            d_uv[1] += d_raw * dy * s.pixel.dy_dv;
        }
        d_uv
    }

    /// Doubles each axis (4x pixels) with align-corners bilinear resampling.
    pub fn upscale(&self) -> Result<Self> {
        self.resample(2 * self.height, 2 * self.width)
    }

    pub fn resample(&self, height: usize, width: usize) -> Result<Self> {
        let mut out = Self::new(height, width, self.canvas)?;
        for y in 0..height {
            let sy = y as f64 * (self.height - 1) as f64 / (height - 1) as f64;
            for x in 0..width {
                let sx = x as f64 * (self.width - 1) as f64 / (width - 1) as f64;
                let b = Bilinear::at(sx, sy, self.width, self.height);
                for c in 0..3 {
                    out.values[(y * width + x) * 3 + c] = b.sample(&self.values, self.width, 3, c);
                }
            }
        }
        Ok(out)
    }

    /// Visible colors `sigmoid(raw)`.
    pub fn colors(&self) -> Vec<f64> {
        self.values.iter().map(|&v| sigmoid(v)).collect()
    }
}
