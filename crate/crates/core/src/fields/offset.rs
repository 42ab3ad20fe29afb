use serde::{Deserialize, Serialize};

use crate::encoding::{positional_encode_into, HashGrid, DIRECTION_BANDS};
use crate::fields::mlp::{Mlp, MlpTrace};
use crate::math::Vec3;

/// Encoder kind applied to sample positions before the offset network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Pe,
    Hash,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PositionEncoder {
    Fourier { bands: usize },
    Hash(HashGrid),
}

impl PositionEncoder {
    pub fn output_dim(&self) -> usize {
        match self {
            Self::Fourier { bands } => 3 * (1 + 2 * bands),
            Self::Hash(g) => g.output_dim(),
        }
    }

    /// Number of annealable blocks (bands or levels).
    pub fn band_count(&self) -> usize {
        match self {
            Self::Fourier { bands } => *bands,
            Self::Hash(g) => g.config.levels,
        }
    }

    pub fn encode_into(&self, q: &Vec3, weights: &[f64], out: &mut [f64]) {
        match self {
            Self::Fourier { bands } => positional_encode_into(&[q.x, q.y, q.z], *bands, Some(weights), out),
            Self::Hash(g) => g.encode_into(q, Some(weights), out),
        }
    }
}

/// View-dependent residual `Δp_uv = P_o(p, d)` on top of the canonical
/// projection.
#[derive(Clone, Debug, PartialEq)]
pub struct OffsetNetwork {
    pub encoder: PositionEncoder,
    pub use_viewdir: bool,
    pub mlp: Mlp,
}

pub fn direction_dim() -> usize {
    3 * (1 + 2 * DIRECTION_BANDS)
}

impl OffsetNetwork {
    /// Layer sizes for `hidden` layers of width `width`.
    pub fn layer_sizes(encoder: &PositionEncoder, use_viewdir: bool, hidden: usize, width: usize) -> Vec<usize> {
        let input = encoder.output_dim() + if use_viewdir { direction_dim() } else { 0 };
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat(width).take(hidden));
        sizes.push(2);
        sizes
    }

    /// First-layer base for unit world direction `d`: the bias plus the
    /// contribution of the encoded direction, shared by all samples of a ray.
    pub fn direction_base(&self, d: &Vec3, base: &mut Vec<f64>) {
        base.resize(self.mlp.sizes[1], 0.0);
        if self.use_viewdir {
            let mut e = [0.0; 3 * (1 + 2 * DIRECTION_BANDS)];
            positional_encode_into(&[d.x, d.y, d.z], DIRECTION_BANDS, None, &mut e);
            self.mlp.first_layer_base(&e, self.encoder.output_dim(), base);
        } else {
            self.mlp.first_layer_base(&[], self.encoder.output_dim(), base);
        }
    }

    /// Evaluates the offset for domain point `q` and unit world direction
    /// `d`, leaving the activations in `trace`.
    pub fn forward(&self, q: &Vec3, d: &Vec3, weights: &[f64], trace: &mut MlpTrace) -> [f64; 2] {
        let mut base = Vec::new();
        self.direction_base(d, &mut base);
        self.forward_with_base(q, &base, weights, trace)
    }

    /// Offset for `q` given the first-layer base of the ray direction.
    #[inline]
    pub fn forward_with_base(&self, q: &Vec3, base: &[f64], weights: &[f64], trace: &mut MlpTrace) -> [f64; 2] {
        let pos_dim = self.encoder.output_dim();
        let input = self.mlp.input_mut(trace);
        self.encoder.encode_into(q, weights, &mut input[..pos_dim]);
        self.mlp.forward_with_base(trace, base, pos_dim);
        let out = trace.output();
        [out[0], out[1]]
    }

    /// Adds parameter gradients for `d loss / d offset` to `grad_mlp` and, for
    /// hash encoders, `grad_tables`. The first-layer output gradient is added
    /// to `dir_grad`; [`OffsetNetwork::direction_grad`] turns the per-ray sum
    /// into the direction weight gradient.
    #[inline]
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        q: &Vec3,
        weights: &[f64],
        trace: &mut MlpTrace,
        d_offset: [f64; 2],
        grad_mlp: &mut [f64],
        grad_tables: Option<&mut [f64]>,
        dir_grad: &mut [f64],
    ) {
        let hash = match &self.encoder {
            PositionEncoder::Hash(g) => Some(g),
            PositionEncoder::Fourier { .. } => None,
        };
        let pos_dim = self.encoder.output_dim();
        let input_rows = if hash.is_some() { pos_dim } else { 0 };
        self.mlp.backward_rows(trace, &d_offset, grad_mlp, pos_dim, input_rows, Some(dir_grad));
        if let (Some(g), Some(gt)) = (hash, grad_tables) {
            let gin = &trace.input_grad()[..pos_dim];
            g.accumulate_grad(q, Some(weights), gin, gt);
        }
    }

    /// Direction weight gradient from the summed first-layer output gradient
    /// of all samples along a ray with direction `d`.
    pub fn direction_grad(&self, d: &Vec3, dir_grad: &[f64], grad_mlp: &mut [f64]) {
        if !self.use_viewdir {
            return;
        }
        let mut e = [0.0; 3 * (1 + 2 * DIRECTION_BANDS)];
        positional_encode_into(&[d.x, d.y, d.z], DIRECTION_BANDS, None, &mut e);
        self.mlp.first_layer_tail_grad(&e, self.encoder.output_dim(), dir_grad, grad_mlp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::HashGridConfig;
    use crate::projection::BoundingBox3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn viewdir_toggle_changes_input_width() {
        let enc = PositionEncoder::Fourier { bands: 8 };
        assert_eq!(OffsetNetwork::layer_sizes(&enc, true, 4, 128), vec![78, 128, 128, 128, 128, 2]);
        assert_eq!(OffsetNetwork::layer_sizes(&enc, false, 2, 16), vec![51, 16, 16, 2]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = HashGridConfig { levels: 3, features: 2, log2_table_size: 6, base_resolution: 2, finest_resolution: 8 };
        let mut grid = HashGrid::new(cfg, BoundingBox3::unit_cube()).unwrap();
        grid.init_uniform(&mut rng, 0.5);
        let encoder = PositionEncoder::Hash(grid);
        let sizes = OffsetNetwork::layer_sizes(&encoder, true, 2, 8);
        let net = OffsetNetwork { encoder, use_viewdir: true, mlp: Mlp::init(&sizes, &mut rng, false) };
        let q = Vec3::new(0.3, -0.2, 0.6);
        let d = Vec3::new(0.0, 0.6, -0.8);
        let w = [1.0, 0.7, 0.2];
        let up = [0.8, -0.5];
        let f = |n: &OffsetNetwork| {
            let mut t = n.mlp.new_trace();
            let o = n.forward(&q, &d, &w, &mut t);
            o[0] * up[0] + o[1] * up[1]
        };
        let mut t = net.mlp.new_trace();
        net.forward(&q, &d, &w, &mut t);
        let mut gm = vec![0.0; net.mlp.param_count()];
        let PositionEncoder::Hash(g) = &net.encoder else { unreachable!() };
        let mut gt = vec![0.0; g.tables.len()];
        let mut dg = vec![0.0; sizes[1]];
        net.backward(&q, &w, &mut t, up, &mut gm, Some(&mut gt), &mut dg);
        net.direction_grad(&d, &dg, &mut gm);
        let h = 1e-6;
        for i in 0..gm.len() {
            let mut a = net.clone();
            let mut b = net.clone();
            a.mlp.params[i] += h;
            b.mlp.params[i] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            assert!((fd - gm[i]).abs() < 1e-8, "param {i}: {fd} vs {}", gm[i]);
        }
        for _ in 0..50 {
            let i = rng.gen_range(0..gt.len());
            let mut a = net.clone();
            let mut b = net.clone();
            if let PositionEncoder::Hash(g) = &mut a.encoder {
                g.tables[i] += h;
            }
            if let PositionEncoder::Hash(g) = &mut b.encoder {
                g.tables[i] -= h;
            }
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            assert!((fd - gt[i]).abs() < 1e-8, "{fd} vs {}", gt[i]);
        }
    }
}
