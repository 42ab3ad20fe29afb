use rand::Rng;

use crate::error::{Error, Result};
use crate::fields::SceneFrame;
use crate::math::Vec3;
use crate::projection::{contract, NdcRay};
use crate::render::rays::RayBatch;
use crate::scene::SceneKind;

/// Samples along one ray: world distances `t`, integration steps `delta` and
/// domain coordinates `q` (NDC or contracted).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RaySamples {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub q: Vec<Vec3>,
}

impl RaySamples {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn clear(&mut self) {
        self.t.clear();
        self.delta.clear();
        self.q.clear();
    }
}

/// Samples for a whole batch; rays that never enter the scene have none.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet {
    pub rays: Vec<RaySamples>,
}

/// Sampler settings: count, step scale and world near/far.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerSpec {
    pub n: usize,
    pub near: f64,
    pub far: f64,
    /// Multiplier applied to domain-space step lengths.
    pub delta_scale: f64,
}

impl SamplerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidBounds(format!("need at least 2 samples per ray, got {}", self.n)));
        }
        if !(self.near > 0.0) || !(self.far > self.near) {
            return Err(Error::InvalidBounds(format!("need 0 < near < far, got near={} far={}", self.near, self.far)));
        }
        if !(self.delta_scale > 0.0) {
            return Err(Error::InvalidBounds("delta scale must be positive".into()));
        }
        Ok(())
    }
}

/// Sample parameter positions on `[s0, s1]`: inclusive linspace without
/// jitter, stratified otherwise.
#[inline]
fn positions(s0: f64, s1: f64, n: usize, jitter: Option<&[f64]>, out: &mut Vec<f64>) {
    out.clear();
    match jitter {
        None => {
            for i in 0..n {
                out.push(if i + 1 == n { s1 } else { s0 + (s1 - s0) * i as f64 / (n - 1) as f64 });
            }
        }
        Some(u) => {
            let w = (s1 - s0) / n as f64;
            for (i, &ui) in u.iter().enumerate().take(n) {
                out.push(s0 + (i as f64 + ui) * w);
            }
        }
    }
}

/// Fills `out` with samples of the world ray `(o, d)`. Returns `false` when the
/// ray cannot be parameterized (it does not travel away from the reference
/// camera of a forward-facing scene).
pub fn sample_ray_into(
    o: &Vec3,
    d: &Vec3,
    frame: &SceneFrame,
    spec: &SamplerSpec,
    jitter: Option<&[f64]>,
    s_buf: &mut Vec<f64>,
    out: &mut RaySamples,
) -> bool {
    out.clear();
    match frame.kind {
        SceneKind::ForwardFacing => {
            let ndc = frame.ndc.as_ref().expect("forward frame has NDC");
            let Some(ray) = NdcRay::new(o, d, ndc) else { return false };
            positions(0.0, 1.0, spec.n, jitter, s_buf);
            for &s in s_buf.iter() {
                out.t.push(ray.world_t(s));
                out.q.push(ray.point(s));
            }
        }
        SceneKind::Panorama => {
            let s0 = spec.near / (spec.near + 1.0);
            let s1 = spec.far / (spec.far + 1.0);
            positions(s0, s1, spec.n, jitter, s_buf);
            for &s in s_buf.iter() {
                let t = if s == s0 { spec.near } else if s == s1 { spec.far } else { s / (1.0 - s) };
                out.t.push(t);
                out.q.push(contract(&(o + d * t)));
            }
        }
    }
    let n = out.q.len();
    for i in 0..n - 1 {
        out.delta.push(spec.delta_scale * (out.q[i + 1] - out.q[i]).norm());
    }
    let last = out.delta[n - 2];
    out.delta.push(last);
    true
}

/// Deterministic samples for every ray of a batch.
pub fn sample_points(batch: &RayBatch, frame: &SceneFrame, spec: &SamplerSpec) -> Result<SampleSet> {
    spec.validate()?;
    let mut s_buf = Vec::new();
    let rays = batch
        .origins
        .iter()
        .zip(&batch.dirs)
        .map(|(o, d)| {
            let mut r = RaySamples::default();
            sample_ray_into(o, d, frame, spec, None, &mut s_buf, &mut r);
            r
        })
        .collect();
    Ok(SampleSet { rays })
}

/// Draws `n` stratified jitter offsets in `[0, 1)`.
pub fn draw_jitter(rng: &mut impl Rng, n: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..n).map(|_| rng.gen::<f64>()));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::SceneFrame;
    use crate::math::linspace;
    use crate::projection::{panorama_canvas, BoundingBox2, BoundingBox3, NdcConfig};
    use crate::scene::CameraModel;
    use rand::SeedableRng;

    fn forward_frame() -> SceneFrame {
        let cam = CameraModel::perspective(32, 24, 30.0, 30.0, 16.0, 12.0);
        let canvas = BoundingBox2::new([-1.2, -1.2], [1.2, 1.2]).unwrap();
        SceneFrame {
            kind: SceneKind::ForwardFacing,
            ndc: Some(NdcConfig::from_camera(&cam, 1.0).unwrap()),
            near: 1.0,
            far: 10.0,
            canvas,
            domain: BoundingBox3::from_canvas(&canvas),
        }
    }

    fn pano_frame() -> SceneFrame {
        SceneFrame {
            kind: SceneKind::Panorama,
            ndc: None,
            near: 0.1,
            far: 100.0,
            canvas: panorama_canvas(),
            domain: BoundingBox3::unit_cube(),
        }
    }

    #[test]
    fn two_samples_hit_near_and_far() {
        let spec = SamplerSpec { n: 2, near: 0.5, far: 20.0, delta_scale: 1.0 };
        let mut batch = RayBatch::default();
        batch.push(Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0), 0);
        let s = sample_points(&batch, &pano_frame(), &spec).unwrap();
        assert_eq!(s.rays[0].t, vec![0.5, 20.0]);
        assert_eq!(s.rays[0].delta[0], s.rays[0].delta[1]);
    }

    #[test]
    fn forward_depth_samples_are_uniform_in_ndc() {
        let spec = SamplerSpec { n: 65, near: 1.0, far: 10.0, delta_scale: 1.0 };
        let mut batch = RayBatch::default();
        batch.push(Vec3::new(0.1, -0.05, 0.2), Vec3::new(0.1, 0.2, -1.0).normalize(), 0);
        let s = sample_points(&batch, &forward_frame(), &spec).unwrap();
        for (q, z) in s.rays[0].q.iter().zip(linspace(-1.0, 1.0, 65)) {
            assert!((q.z - z).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_bounds() {
        let batch = RayBatch::default();
        for spec in [
            SamplerSpec { n: 1, near: 1.0, far: 2.0, delta_scale: 1.0 },
            SamplerSpec { n: 8, near: 2.0, far: 1.0, delta_scale: 1.0 },
        ] {
            assert!(matches!(sample_points(&batch, &pano_frame(), &spec), Err(Error::InvalidBounds(_))));
        }
    }

    #[test]
    fn jittered_samples_sorted_and_in_range() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let spec = SamplerSpec { n: 16, near: 0.1, far: 100.0, delta_scale: 1.0 };
        let frame = pano_frame();
        let mut s_buf = Vec::new();
        let mut jit = Vec::new();
        let mut out = RaySamples::default();
        for _ in 0..100_000 {
            let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if d.norm() < 1e-3 {
                continue;
            }
            draw_jitter(&mut rng, spec.n, &mut jit);
            sample_ray_into(&Vec3::zeros(), &d.normalize(), &frame, &spec, Some(&jit), &mut s_buf, &mut out);
            assert!(out.t.windows(2).all(|w| w[0] < w[1]));
            assert!(out.t[0] >= spec.near && *out.t.last().unwrap() <= spec.far);
            assert!(out.delta.iter().all(|&d| d > 0.0));
        }
    }
}
