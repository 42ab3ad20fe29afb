use crate::error::{Error, Result};
use crate::math::{lerp, sigmoid, softplus, Vec3, DENSITY_SHIFT};
use crate::projection::BoundingBox3;

/// Single-channel voxel grid of raw (pre-activation) density values. Voxel
/// centers sit on the domain corners (align-corners); `x` varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub res: [usize; 3],
    pub values: Vec<f64>,
    pub domain: BoundingBox3,
}

/// Trilinear cell lookup: base voxel and fractional offsets.
#[derive(Clone, Copy, Debug)]
pub struct GridCell {
    base: [usize; 3],
    frac: [f64; 3],
}

impl DensityGrid {
    pub fn new(res: [usize; 3], domain: BoundingBox3) -> Result<Self> {
        if res.iter().any(|&n| n < 2) {
            return Err(Error::InvalidConfig(format!("density grid needs >= 2 voxels per axis, got {res:?}")));
        }
        Ok(Self { res, values: vec![0.0; res[0] * res[1] * res[2]], domain })
    }

    pub fn constant(res: [usize; 3], domain: BoundingBox3, raw: f64) -> Result<Self> {
        let mut g = Self::new(res, domain)?;
        g.values.fill(raw);
        Ok(g)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.res[1] + j) * self.res[0] + i
    }

    pub fn voxel_count(&self) -> usize {
        self.values.len()
    }

    /// Cell containing `p`, or `None` outside the domain.
    #[inline]
    pub fn locate(&self, p: &Vec3) -> Option<GridCell> {
        if !self.domain.contains(p) {
            return None;
        }
        let mut base = [0; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let n = self.res[a];
            let x = (p[a] - self.domain.min[a]) / (self.domain.max[a] - self.domain.min[a]) * (n - 1) as f64;
            let (b, f) = crate::math::cell(x, n);
            base[a] = b;
            frac[a] = f;
        }
        Some(GridCell { base, frac })
    }

    #[inline]
    pub fn raw_in_cell(&self, c: &GridCell) -> f64 {
        let [i, j, k] = c.base;
        let [fx, fy, fz] = c.frac;
        let v = |di: usize, dj: usize, dk: usize| self.values[self.index(i + di, j + dj, k + dk)];
        let c00 = lerp(v(0, 0, 0), v(1, 0, 0), fx);
        let c10 = lerp(v(0, 1, 0), v(1, 1, 0), fx);
        let c01 = lerp(v(0, 0, 1), v(1, 0, 1), fx);
        let c11 = lerp(v(0, 1, 1), v(1, 1, 1), fx);
        lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz)
    }

    /// Interpolated raw value, `None` outside the domain.
    pub fn raw_at(&self, p: &Vec3) -> Option<f64> {
        self.locate(p).map(|c| self.raw_in_cell(&c))
    }

    /// `softplus(trilinear(p) + shift)`, zero outside the domain.
    pub fn query_density(&self, p: &Vec3) -> f64 {
        self.raw_at(p).map_or(0.0, |r| softplus(r + DENSITY_SHIFT))
    }

    /// Density and its derivative with respect to the interpolated raw value.
    #[inline]
    pub fn density_with_slope(raw: f64) -> (f64, f64) {
        (softplus(raw + DENSITY_SHIFT), sigmoid(raw + DENSITY_SHIFT))
    }

    /// Scatters `g` (gradient w.r.t. the interpolated raw value) onto the 8
    /// cell corners.
    #[inline]
    pub fn accumulate_grad(&self, c: &GridCell, g: f64, grad: &mut [f64]) {
        let [i, j, k] = c.base;
        let [fx, fy, fz] = c.frac;
        for dk in 0..2 {
            let wz = if dk == 1 { fz } else { 1.0 - fz };
            for dj in 0..2 {
                let wy = if dj == 1 { fy } else { 1.0 - fy };
                for di in 0..2 {
                    let wx = if di == 1 { fx } else { 1.0 - fx };
                    grad[self.index(i + di, j + dj, k + dk)] += g * wx * wy * wz;
                }
            }
        }
    }

    /// Trilinear resample onto a new resolution over the same domain.
    pub fn resample(&self, res: [usize; 3]) -> Result<Self> {
        let mut out = Self::new(res, self.domain)?;
        for k in 0..res[2] {
            for j in 0..res[1] {
                for i in 0..res[0] {
                    let pos = [i, j, k];
                    let mut base = [0; 3];
                    let mut frac = [0.0; 3];
                    for a in 0..3 {
                        let x = pos[a] as f64 * (self.res[a] - 1) as f64 / (res[a] - 1) as f64;
                        let (b, f) = crate::math::cell(x, self.res[a]);
                        base[a] = b;
                        frac[a] = f;
                    }
                    let idx = out.index(i, j, k);
                    out.values[idx] = self.raw_in_cell(&GridCell { base, frac });
                }
            }
        }
        Ok(out)
    }

    /// Doubles the total voxel count: each axis grows by `2^(1/3)`, rounded to
    /// the nearest even count (never shrinking).
    pub fn upscale(&self) -> Result<Self> {
        let res = self.res.map(|n| {
            let grown = 2.0 * ((n as f64 * 2f64.cbrt()) / 2.0).round();
            (grown as usize).max(n)
        });
        self.resample(res)
    }
}

/// Per-axis resolution after `steps` upscales starting from `init`.
pub fn upscaled_resolution(init: [usize; 3], steps: usize) -> [usize; 3] {
    let mut res = init;
    for _ in 0..steps {
        res = res.map(|n| ((2.0 * ((n as f64 * 2f64.cbrt()) / 2.0).round()) as usize).max(n));
    }
    res
}

/// Initial per-axis resolution that reaches roughly `final_res` after `steps`
/// upscales.
pub fn initial_resolution(final_res: [usize; 3], steps: usize) -> [usize; 3] {
    let shrink = 2f64.powf(steps as f64 / 3.0);
    final_res.map(|n| ((2.0 * (n as f64 / shrink / 2.0).round()) as usize).max(2))
}
