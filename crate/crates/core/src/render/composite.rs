//! Discretized volume rendering along one ray.

/// Default transmittance below which compositing stops.
pub const EARLY_EXIT: f64 = 1e-6;

/// Per-sample compositing weights `w_i = T_i α_i` with
/// `T_i = exp(-Σ_{j<i} σ_j δ_j)` and `α_i = 1 - exp(-σ_i δ_i)`.
///
/// Samples from the first one whose transmittance falls below `exit` onward
/// get weight zero; `exit = 0` disables the early exit. Returns the residual
/// transmittance and the number of samples composited.
pub fn weights_into(sigma: &[f64], delta: &[f64], exit: f64, weights: &mut Vec<f64>, trans: &mut Vec<f64>) -> (f64, usize) {
    weights.clear();
    trans.clear();
    let mut optical = 0.0;
    let mut t = 1.0;
    let mut active = sigma.len();
    for (i, (&s, &d)) in sigma.iter().zip(delta).enumerate() {
        if t < exit {
            active = i;
            break;
        }
        let sd = s * d;
        let alpha = -(-sd).exp_m1();
        trans.push(t);
        weights.push(t * alpha);
        optical += sd;
        t = (-optical).exp();
    }
    weights.resize(sigma.len(), 0.0);
    (t, active)
}

/// Composited color, expected depth and residual transmittance of one ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayColor {
    pub rgb: [f64; 3],
    pub depth: f64,
    pub transmittance: f64,
}

/// Composites `colors` with the weights of `sigma`/`delta`; depth completes
/// with the residual transmittance at `t_far` and clamps distances to it.
pub fn composite(sigma: &[f64], delta: &[f64], colors: &[[f64; 3]], t: &[f64], t_far: f64, exit: f64) -> RayColor {
    let mut w = Vec::with_capacity(sigma.len());
    let mut tr = Vec::with_capacity(sigma.len());
    let (t_end, active) = weights_into(sigma, delta, exit, &mut w, &mut tr);
    let mut rgb = [0.0; 3];
    let mut depth = 0.0;
    for i in 0..active {
        for c in 0..3 {
            rgb[c] += w[i] * colors[i][c];
        }
        depth += w[i] * t[i].min(t_far);
    }
    RayColor { rgb, depth: depth + t_end * t_far, transmittance: t_end }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn zero_density_is_black_at_far() {
        let r = composite(&[0.0; 4], &[0.5; 4], &[[0.7; 3]; 4], &[1.0, 2.0, 3.0, 4.0], 9.0, EARLY_EXIT);
        assert_eq!(r.rgb, [0.0; 3]);
        assert_eq!(r.transmittance, 1.0);
        assert_eq!(r.depth, 9.0);
    }

    #[test]
    fn half_opacity_sample() {
        let r = composite(&[LN_2], &[1.0], &[[0.2, 0.4, 0.8]], &[1.0], 5.0, 0.0);
        for (a, b) in r.rgb.iter().zip([0.1, 0.2, 0.4]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn splitting_a_segment_preserves_transmittance() {
        let mut w = Vec::new();
        let mut tr = Vec::new();
        let (a, _) = weights_into(&[0.7, 1.3], &[0.4, 0.6], 0.0, &mut w, &mut tr);
        let (b, _) = weights_into(&[0.7, 0.7, 1.3], &[0.2, 0.2, 0.6], 0.0, &mut w, &mut tr);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn early_exit_changes_little() {
        let sigma: Vec<f64> = (0..64).map(|i| 0.1 * i as f64).collect();
        let delta = vec![0.5; 64];
        let colors: Vec<[f64; 3]> = (0..64).map(|i| [(i as f64 / 64.0), 0.5, 1.0 - i as f64 / 64.0]).collect();
        let t: Vec<f64> = (1..=64).map(|i| i as f64).collect();
        let full = composite(&sigma, &delta, &colors, &t, 70.0, 0.0);
        let fast = composite(&sigma, &delta, &colors, &t, 70.0, EARLY_EXIT);
        for c in 0..3 {
            assert!((full.rgb[c] - fast.rgb[c]).abs() < 1e-6);
        }
    }
}
