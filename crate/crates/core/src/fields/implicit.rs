//! MLP replacements for the explicit density grid and canonical image, used
//! by the corresponding ablation settings.

use crate::encoding::positional_encode_into;
use crate::fields::mlp::{Mlp, MlpTrace};
use crate::math::{sigmoid, softplus, Vec3, DENSITY_SHIFT};
use crate::projection::{BoundingBox2, BoundingBox3};

/// Density `softplus(mlp(γ(p)) + shift)` inside `domain`, zero outside.
#[derive(Clone, Debug, PartialEq)]
pub struct ImplicitDensity {
    pub bands: usize,
    pub domain: BoundingBox3,
    pub mlp: Mlp,
}

impl ImplicitDensity {
    pub fn input_dim(bands: usize) -> usize {
        3 * (1 + 2 * bands)
    }

    /// Returns `(σ, dσ/draw)`, or `None` outside the domain.
    #[inline]
    pub fn forward(&self, q: &Vec3, trace: &mut MlpTrace) -> Option<(f64, f64)> {
        if !self.domain.contains(q) {
            return None;
        }
        positional_encode_into(&[q.x, q.y, q.z], self.bands, None, self.mlp.input_mut(trace));
        self.mlp.forward(trace);
        let raw = trace.output()[0] + DENSITY_SHIFT;
        Some((softplus(raw), sigmoid(raw)))
    }

    #[inline]
    pub fn backward(&self, trace: &mut MlpTrace, d_raw: f64, grad: &mut [f64]) {
        self.mlp.backward(trace, &[d_raw], grad, false);
    }
}

/// Canonical colors `sigmoid(mlp(γ(uv)))` with `uv` normalized over `canvas`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImplicitCanonical {
    pub bands: usize,
    pub canvas: BoundingBox2,
    pub mlp: Mlp,
}

impl ImplicitCanonical {
    pub fn input_dim(bands: usize) -> usize {
        2 * (1 + 2 * bands)
    }

    fn normalize(&self, uv: [f64; 2]) -> [f64; 2] {
        let e = self.canvas.extent();
        [
            2.0 * (uv[0] - self.canvas.min[0]) / e[0] - 1.0,
            2.0 * (uv[1] - self.canvas.min[1]) / e[1] - 1.0,
        ]
    }

    #[inline]
    pub fn forward(&self, uv: [f64; 2], trace: &mut MlpTrace) -> [f64; 3] {
        let x = self.normalize(uv);
        positional_encode_into(&x, self.bands, None, self.mlp.input_mut(trace));
        self.mlp.forward(trace);
        let o = trace.output();
        [sigmoid(o[0]), sigmoid(o[1]), sigmoid(o[2])]
    }

    /// Backward from `d loss / d rgb`; returns `d loss / d uv`.
    #[inline]
    pub fn backward(&self, uv: [f64; 2], rgb: [f64; 3], trace: &mut MlpTrace, d_rgb: [f64; 3], grad: &mut [f64]) -> [f64; 2] {
        let d_raw = [0, 1, 2].map(|c| d_rgb[c] * rgb[c] * (1.0 - rgb[c]));
        self.mlp.backward(trace, &d_raw, grad, true);
        let gin = trace.input_grad();
        let x = self.normalize(uv);
        let e = self.canvas.extent();
        let mut d_x = [gin[0], gin[1]];
        let mut freq = 1.0;
        for k in 0..self.bands {
            freq *= 2.0;
            let base = 2 * (1 + 2 * k);
            for i in 0..2 {
                let (s, c) = (freq * x[i]).sin_cos();
                d_x[i] += gin[base + i] * freq * c - gin[base + 2 + i] * freq * s;
            }
        }
        [d_x[0] * 2.0 / e[0], d_x[1] * 2.0 / e[1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn canonical_uv_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bands = 3;
        let net = ImplicitCanonical {
            bands,
            canvas: BoundingBox2::new([-1.5, -1.0], [1.5, 1.0]).unwrap(),
            mlp: Mlp::init(&[ImplicitCanonical::input_dim(bands), 12, 3], &mut rng, false),
        };
        let up = [0.3, -0.9, 0.4];
        let f = |uv: [f64; 2]| {
            let mut t = net.mlp.new_trace();
            let c = net.forward(uv, &mut t);
            c[0] * up[0] + c[1] * up[1] + c[2] * up[2]
        };
        let uv = [0.2, -0.35];
        let mut t = net.mlp.new_trace();
        let rgb = net.forward(uv, &mut t);
        let mut g = vec![0.0; net.mlp.param_count()];
        let d = net.backward(uv, rgb, &mut t, up, &mut g);
        let h = 1e-6;
        for k in 0..2 {
            let mut a = uv;
            a[k] += h;
            let mut b = uv;
            b[k] -= h;
            let fd = (f(a) - f(b)) / (2.0 * h);
            assert!((fd - d[k]).abs() < 1e-7, "{fd} vs {}", d[k]);
        }
    }

    #[test]
    fn density_is_zero_outside_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = ImplicitDensity {
            bands: 2,
            domain: BoundingBox3::unit_cube(),
            mlp: Mlp::init(&[ImplicitDensity::input_dim(2), 8, 1], &mut rng, false),
        };
        let mut t = net.mlp.new_trace();
        assert!(net.forward(&Vec3::new(2.0, 0.0, 0.0), &mut t).is_none());
        assert!(net.forward(&Vec3::new(0.2, 0.0, 0.0), &mut t).is_some());
    }
}
