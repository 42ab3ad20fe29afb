//! Multi-resolution hash encoding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::projection::BoundingBox3;

const PRIMES: [u64; 3] = [1, 2_654_435_761, 805_459_861];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HashGridConfig {
    pub levels: usize,
    pub features: usize,
    pub log2_table_size: u32,
    pub base_resolution: usize,
    pub finest_resolution: usize,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        Self { levels: 16, features: 2, log2_table_size: 19, base_resolution: 16, finest_resolution: 512 }
    }
}

impl HashGridConfig {
    pub fn table_size(&self) -> usize {
        1 << self.log2_table_size
    }

    pub fn output_dim(&self) -> usize {
        3 + self.features * self.levels
    }

    pub fn growth(&self) -> f64 {
        if self.levels <= 1 {
            return 2.0;
        }
        ((self.finest_resolution as f64).ln() - (self.base_resolution as f64).ln()) / (self.levels - 1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.features == 0 || self.base_resolution == 0 {
            return Err(Error::InvalidConfig("hash grid needs levels, features and base resolution > 0".into()));
        }
        if self.levels > 1 && self.finest_resolution <= self.base_resolution {
            return Err(Error::InvalidConfig("hash grid growth factor must exceed 1".into()));
        }
        if self.log2_table_size > 30 {
            return Err(Error::InvalidConfig("hash table too large".into()));
        }
        Ok(())
    }

    pub fn resolutions(&self) -> Vec<usize> {
        let g = self.growth();
        (0..self.levels)
            .map(|l| ((self.base_resolution as f64) * (g * l as f64).exp()).floor().max(1.0) as usize)
            .collect()
    }
}

/// Per-level learnable feature tables over a 3D domain box.
#[derive(Clone, Debug, PartialEq)]
pub struct HashGrid {
    pub config: HashGridConfig,
    pub domain: BoundingBox3,
    resolutions: Vec<usize>,
    /// `levels * table_size * features` values, level-major.
    pub tables: Vec<f64>,
}

impl HashGrid {
    pub fn new(config: HashGridConfig, domain: BoundingBox3) -> Result<Self> {
        config.validate()?;
        let resolutions = config.resolutions();
        let tables = vec![0.0; config.levels * config.table_size() * config.features];
        Ok(Self { config, domain, resolutions, tables })
    }

    pub fn init_uniform(&mut self, rng: &mut impl Rng, scale: f64) {
        for v in &mut self.tables {
            *v = rng.gen_range(-scale..scale);
        }
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn resolutions(&self) -> &[usize] {
        &self.resolutions
    }

    /// Visits the 8 interpolation corners of level `level` as
    /// `(offset into tables, trilinear weight)`.
    #[inline]
    fn for_each_corner(&self, level: usize, x: &Vec3, mut f: impl FnMut(usize, f64)) {
        let res = self.resolutions[level];
        let t = self.config.table_size();
        let d = self.config.features;
        let side = res as u64 + 1;
        let dense = side * side * side <= t as u64;
        let mut base = [0u64; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let lo = self.domain.min[a];
            let hi = self.domain.max[a];
            let u = ((x[a] - lo) / (hi - lo)).clamp(0.0, 1.0) * res as f64;
            let b = u.floor().min((res - 1) as f64).max(0.0);
            base[a] = b as u64;
            frac[a] = u - b;
        }
        let level_offset = level * t;
        for corner in 0..8u64 {
            let mut w = 1.0;
            let mut c = [0u64; 3];
            for a in 0..3 {
                let bit = (corner >> a) & 1;
                c[a] = base[a] + bit;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            let idx = if dense {
                (c[0] + c[1] * side + c[2] * side * side) as usize
            } else {
                let h = (c[0].wrapping_mul(PRIMES[0]) ^ c[1].wrapping_mul(PRIMES[1]) ^ c[2].wrapping_mul(PRIMES[2])) as u32;
                (h as usize) & (t - 1)
            };
            f((level_offset + idx) * d, w);
        }
    }

    /// Writes `[x, w_1 H_1(x), ..., w_K H_K(x)]` into `out`.
    pub fn encode_into(&self, x: &Vec3, weights: Option<&[f64]>, out: &mut [f64]) {
        let d = self.config.features;
        debug_assert_eq!(out.len(), self.output_dim());
        out[0] = x.x;
        out[1] = x.y;
        out[2] = x.z;
        for level in 0..self.config.levels {
            let lw = weights.map_or(1.0, |w| w[level]);
            let dst = 3 + level * d;
            let mut acc = [0.0f64; 8];
            self.for_each_corner(level, x, |off, w| {
                for f in 0..d {
                    acc[f] += w * self.tables[off + f];
                }
            });
            for f in 0..d {
                out[dst + f] = lw * acc[f];
            }
        }
    }

    pub fn encode(&self, x: &Vec3, weights: Option<&[f64]>) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim()];
        self.encode_into(x, weights, &mut out);
        out
    }

    /// Adds `d loss / d tables` given `grad_out`, the gradient with respect to
    /// the full encoding output (the raw-`x` entries are ignored).
    pub fn accumulate_grad(&self, x: &Vec3, weights: Option<&[f64]>, grad_out: &[f64], grad_tables: &mut [f64]) {
        let d = self.config.features;
        for level in 0..self.config.levels {
            let lw = weights.map_or(1.0, |w| w[level]);
            let g = &grad_out[3 + level * d..3 + (level + 1) * d];
            if lw == 0.0 || g.iter().all(|&v| v == 0.0) {
                continue;
            }
            self.for_each_corner(level, x, |off, w| {
                let s = lw * w;
                for f in 0..d {
                    grad_tables[off + f] += s * g[f];
                }
            });
        }
    }
}
