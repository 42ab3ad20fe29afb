use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of Fourier bands used for view directions.
pub const DIRECTION_BANDS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionalEncoderConfig {
    pub bands: usize,
    pub input_dim: usize,
}

impl PositionalEncoderConfig {
    pub fn output_dim(&self) -> usize {
        self.input_dim * (1 + 2 * self.bands)
    }
}

/// Writes `[x, sin(2^1 x), cos(2^1 x), ..., sin(2^K x), cos(2^K x)]` into
/// `out`. Band `k` is scaled by `weights[k - 1]` when weights are given; the
/// raw block never is.
pub fn positional_encode_into(x: &[f64], bands: usize, weights: Option<&[f64]>, out: &mut [f64]) {
    let d = x.len();
    debug_assert_eq!(out.len(), d * (1 + 2 * bands));
    out[..d].copy_from_slice(x);
    let mut freq = 1.0;
    for k in 0..bands {
        freq *= 2.0;
        let w = weights.map_or(1.0, |w| w[k]);
        let base = d * (1 + 2 * k);
        for i in 0..d {
            let (s, c) = (freq * x[i]).sin_cos();
            out[base + i] = w * s;
            out[base + d + i] = w * c;
        }
    }
}

pub fn positional_encode(x: &[f64], cfg: &PositionalEncoderConfig) -> Vec<f64> {
    let mut out = vec![0.0; cfg.output_dim()];
    positional_encode_into(x, cfg.bands, None, &mut out);
    out
}

/// Fourier encoding of a unit view direction with [`DIRECTION_BANDS`] bands.
pub fn encode_direction(d: &[f64; 3]) -> Result<Vec<f64>> {
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::NonUnitDirection(n));
    }
    Ok(positional_encode(d, &PositionalEncoderConfig { bands: DIRECTION_BANDS, input_dim: 3 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::FRAC_PI_4;

    fn reference(x: &[f64], k: usize) -> Vec<f64> {
        let mut out = x.to_vec();
        for band in 1..=k {
            let f = 2f64.powi(band as i32);
            out.extend(x.iter().map(|v| (f * v).sin()));
            out.extend(x.iter().map(|v| (f * v).cos()));
        }
        out
    }

    #[test]
    fn zero_input() {
        let cfg = PositionalEncoderConfig { bands: 2, input_dim: 3 };
        assert_eq!(
            positional_encode(&[0.0; 3], &cfg),
            vec![0., 0., 0., 0., 0., 0., 1., 1., 1., 0., 0., 0., 1., 1., 1.]
        );
    }

    #[test]
    fn first_sine_block() {
        let cfg = PositionalEncoderConfig { bands: 1, input_dim: 3 };
        let e = positional_encode(&[FRAC_PI_4, 0.0, 0.0], &cfg);
        assert!((e[3] - 1.0).abs() < 1e-15 && e[4] == 0.0 && e[5] == 0.0);
    }

    #[test]
    fn output_lengths() {
        assert_eq!(PositionalEncoderConfig { bands: 8, input_dim: 3 }.output_dim(), 51);
        assert_eq!(encode_direction(&[0.0, 0.0, 1.0]).unwrap().len(), 27);
    }

    #[test]
    fn matches_reference_implementation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let cfg = PositionalEncoderConfig { bands: 8, input_dim: 3 };
        for _ in 0..10_000 {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let a = positional_encode(&x, &cfg);
            let b = reference(&x, 8);
            let err = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn direction_sign_flips_sines() {
        let a = encode_direction(&[1.0, 0.0, 0.0]).unwrap();
        let b = encode_direction(&[-1.0, 0.0, 0.0]).unwrap();
        assert_eq!(a[0], -b[0]);
        for k in 0..4 {
            let s = 3 * (1 + 2 * k);
            assert_eq!(a[s], -b[s]);
            assert_eq!(a[s + 3], b[s + 3]);
        }
        assert_eq!(a, encode_direction(&[1.0, 0.0, 0.0]).unwrap());
    }

    #[test]
    fn non_unit_direction_rejected() {
        assert!(matches!(encode_direction(&[0.0, 0.0, 1.1]), Err(Error::NonUnitDirection(_))));
    }
}
