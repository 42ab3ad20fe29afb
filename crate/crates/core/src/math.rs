//! Scalar activations and small interpolation helpers shared by the field and
//! render code.

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Shift applied to raw density before the softplus, so a raw value of zero
/// yields near-transparent space.
pub const DENSITY_SHIFT: f64 = -6.0;

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `a + t (b - a)`: exact at both endpoints and for `a == b`.
#[inline]
pub fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 1.0 {
        return b;
    }
    a + t * (b - a)
}

/// Splits a continuous coordinate on `[0, n-1]` into a base index and a
/// fractional weight, keeping the base index in `[0, n-2]`.
#[inline]
pub fn cell(x: f64, n: usize) -> (usize, f64) {
    debug_assert!(n >= 2);
    let max_base = (n - 2) as f64;
    let base = x.floor().clamp(0.0, max_base);
    (base as usize, x - base)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    b
                } else {
                    a + (b - a) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_naive() {
        for x in [-20.0, -6.0, -1.0, 0.0, 0.5, 3.0, 29.0, 31.0, 50.0] {
            let naive = (1.0 + f64::exp(x)).ln();
            assert!((softplus(x) - naive).abs() < 1e-12 * naive.max(1.0), "x={x}");
        }
        assert!((softplus(DENSITY_SHIFT) - 0.002_475).abs() < 1e-5);
    }

    #[test]
    fn sigmoid_logit_inverse() {
        for p in [1.0 / 510.0, 0.25, 0.5, 0.9, 1.0 - 1.0 / 510.0] {
            assert!((sigmoid(logit(p)) - p).abs() < 1e-14);
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn lerp_is_exact_on_constants() {
        for t in [0.0, 0.1, 0.33, 0.7, 1.0] {
            assert_eq!(lerp(0.1, 0.1, t), 0.1);
        }
    }

    #[test]
    fn cell_clamps_upper_edge() {
        assert_eq!(cell(3.0, 4), (2, 1.0));
        assert_eq!(cell(0.0, 4), (0, 0.0));
        let (i, f) = cell(1.25, 4);
        assert_eq!(i, 1);
        assert!((f - 0.25).abs() < 1e-15);
    }

    #[test]
    fn linspace_endpoints_exact() {
        let v = linspace(-1.0, 1.0, 65);
        assert_eq!(v[0], -1.0);
        assert_eq!(v[64], 1.0);
        assert_eq!(v[32], 0.0);
    }
}
