//! Coordinate transforms and the fixed canonical projection.
//!
//! Forward-facing scenes live in normalized device coordinates of the pseudo
//! canonical camera; panorama scenes live in a contracted unit ball around the
//! origin. The canonical projection drops NDC depth for forward-facing scenes
//! and takes azimuth/elevation of the contracted point for panoramas.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};
use crate::scene::{CameraKind, CameraModel, SceneManifest};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NdcConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
    pub near: f64,
    /// Camera-to-world rotation of the reference camera (row-major).
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl NdcConfig {
    pub fn from_camera(cam: &CameraModel, near: f64) -> Result<Self> {
        if cam.kind != CameraKind::Perspective {
            return Err(Error::InvalidConfig("NDC reference camera must be perspective".into()));
        }
        if !(near > 0.0) {
            return Err(Error::InvalidConfig(format!("NDC near plane must be positive, got {near}")));
        }
        let r = cam.rotation;
        Ok(Self {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width as f64,
            height: cam.height as f64,
            near,
            rotation: [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            translation: [cam.translation.x, cam.translation.y, cam.translation.z],
        })
    }

    fn rotation(&self) -> Mat3 {
        Mat3::from_row_slice(&self.rotation)
    }

    pub fn to_camera_frame(&self, p: &Vec3) -> Vec3 {
        self.rotation().transpose() * (p - Vec3::from_row_slice(&self.translation))
    }

    pub fn direction_to_camera_frame(&self, d: &Vec3) -> Vec3 {
        self.rotation().transpose() * d
    }

    #[inline]
    fn xy_from_slope(&self, sx: f64, sy: f64) -> (f64, f64) {
        (
            2.0 * self.fx / self.width * sx + (2.0 * self.cx / self.width - 1.0),
            2.0 * self.fy / self.height * sy + (1.0 - 2.0 * self.cy / self.height),
        )
    }

    /// NDC of a camera-frame point (no near-plane check).
    #[inline]
    pub fn project_camera_point(&self, pc: &Vec3) -> Vec3 {
        let (x, y) = self.xy_from_slope(pc.x / -pc.z, pc.y / -pc.z);
        Vec3::new(x, y, 1.0 + 2.0 * self.near / pc.z)
    }

    /// World point with NDC coordinates `q` (`q.z < 1`).
    pub fn unproject(&self, q: &Vec3) -> Vec3 {
        let zc = 2.0 * self.near / (q.z - 1.0);
        let sx = (q.x - (2.0 * self.cx / self.width - 1.0)) * self.width / (2.0 * self.fx);
        let sy = (q.y - (1.0 - 2.0 * self.cy / self.height)) * self.height / (2.0 * self.fy);
        let pc = Vec3::new(-sx * zc, -sy * zc, zc);
        self.rotation() * pc + Vec3::from_row_slice(&self.translation)
    }
}

/// Maps a world point to NDC of the reference camera.
pub fn ndc_transform(p: &Vec3, cfg: &NdcConfig) -> Result<Vec3> {
    let pc = cfg.to_camera_frame(p);
    if !(pc.z < -cfg.near * (1.0 - 1e-9)) {
        return Err(Error::BehindNearPlane);
    }
    Ok(cfg.project_camera_point(&pc))
}

/// A world ray expressed as a straight segment in NDC: `origin` is where the
/// ray crosses the reference near plane (`z' = -1`), `origin + dir` is its
/// vanishing point (`z' = 1`).
#[derive(Clone, Copy, Debug)]
pub struct NdcRay {
    pub origin: Vec3,
    pub dir: Vec3,
    cam_origin: Vec3,
    cam_dir: Vec3,
    near: f64,
}

impl NdcRay {
    /// `None` when the ray does not travel away from the reference camera.
    pub fn new(o: &Vec3, d: &Vec3, cfg: &NdcConfig) -> Option<Self> {
        let oc = cfg.to_camera_frame(o);
        let dc = cfg.direction_to_camera_frame(d);
        if dc.z >= -1e-12 {
            return None;
        }
        let t0 = (-cfg.near - oc.z) / dc.z;
        let origin = cfg.project_camera_point(&(oc + dc * t0));
        let (x, y) = cfg.xy_from_slope(dc.x / -dc.z, dc.y / -dc.z);
        let dir = Vec3::new(x, y, 1.0) - origin;
        Some(Self { origin, dir, cam_origin: oc, cam_dir: dc, near: cfg.near })
    }

    #[inline]
    pub fn point(&self, s: f64) -> Vec3 {
        self.origin + self.dir * s
    }

    /// World distance along the original ray at NDC parameter `s` (infinite at `s = 1`).
    pub fn world_t(&self, s: f64) -> f64 {
        let zp = -1.0 + 2.0 * s;
        if zp >= 1.0 {
            return f64::INFINITY;
        }
        let zc = 2.0 * self.near / (zp - 1.0);
        (zc - self.cam_origin.z) / self.cam_dir.z
    }
}

/// Radial squash of space into the open unit ball; `f(0) = 0`.
#[inline]
pub fn contract(x: &Vec3) -> Vec3 {
    let n = x.norm();
    if n == 0.0 {
        return Vec3::zeros();
    }
    x * ((1.0 - 1.0 / (n + 1.0)) / n)
}

/// Canonical projection for forward-facing scenes: keep `(x', y')`.
#[inline]
pub fn canonical_init_forward(q: &Vec3) -> [f64; 2] {
    [q.x, q.y]
}

/// Canonical projection for panoramas: azimuth in `[-pi, pi]`, `asin` of the
/// contracted `z` in `[-pi/2, pi/2]`.
pub fn canonical_init_panorama(q: &Vec3) -> Result<[f64; 2]> {
    if q.x == 0.0 && q.y == 0.0 {
        return Err(Error::PoleDegenerate);
    }
    Ok(canonical_init_panorama_total(q))
}

/// Same as [`canonical_init_panorama`] but with azimuth 0 on the pole.
#[inline]
pub fn canonical_init_panorama_total(q: &Vec3) -> [f64; 2] {
    let u = if q.x == 0.0 && q.y == 0.0 { 0.0 } else { q.y.atan2(q.x) };
    [u, q.z.clamp(-1.0, 1.0).asin()]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox2 {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl BoundingBox2 {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        if !(min[0] < max[0] && min[1] < max[1]) {
            return Err(Error::InvalidConfig(format!("degenerate 2D box {min:?}..{max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1]]
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1])]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox3 {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BoundingBox3 {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        if !(0..3).all(|i| min[i] < max[i]) {
            return Err(Error::InvalidConfig(format!("degenerate 3D box {min:?}..{max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn unit_cube() -> Self {
        Self { min: [-1.0; 3], max: [1.0; 3] }
    }

    #[inline]
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Forward-facing grid domain: the canvas box in `(x', y')`, full depth in `z'`.
    pub fn from_canvas(canvas: &BoundingBox2) -> Self {
        Self { min: [canvas.min[0], canvas.min[1], -1.0], max: [canvas.max[0], canvas.max[1], 1.0] }
    }
}

/// Continuous pixel position on the canonical grid, with the derivative of
/// each coordinate with respect to the matching canvas coordinate (zero where
/// the position was clamped to the border).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelCoord {
    pub x: f64,
    pub y: f64,
    pub dx_du: f64,
    pub dy_dv: f64,
}

/// Align-corners affine map from canvas coordinates to pixel centers, clamped
/// to the border.
#[inline]
pub fn uv_to_pixel(uv: [f64; 2], canvas: &BoundingBox2, height: usize, width: usize) -> PixelCoord {
    let sx = (width - 1) as f64 / (canvas.max[0] - canvas.min[0]);
    let sy = (height - 1) as f64 / (canvas.max[1] - canvas.min[1]);
    let x = (uv[0] - canvas.min[0]) * sx;
    let y = (uv[1] - canvas.min[1]) * sy;
    let (x, dx_du) = clamp_with_slope(x, (width - 1) as f64, sx);
    let (y, dy_dv) = clamp_with_slope(y, (height - 1) as f64, sy);
    PixelCoord { x, y, dx_du, dy_dv }
}

#[inline]
fn clamp_with_slope(x: f64, hi: f64, slope: f64) -> (f64, f64) {
    if x < 0.0 || x.is_nan() {
        (0.0, 0.0)
    } else if x > hi {
        (hi, 0.0)
    } else {
        (x, slope)
    }
}

/// Canonical image width for forward-facing scenes from its height, the
/// training image aspect ratio and the NDC canvas.
pub fn canonical_width(height: usize, aspect: f64, canvas: &BoundingBox2) -> usize {
    let [ex, ey] = canvas.extent();
    ((height as f64 * aspect * ex / ey).round() as usize).max(2)
}

/// Equirectangular canonical width.
pub fn panorama_width(height: usize) -> usize {
    2 * height
}

pub fn panorama_canvas() -> BoundingBox2 {
    BoundingBox2 { min: [-PI, -FRAC_PI_2], max: [PI, FRAC_PI_2] }
}

/// `(x', y')` bounding box over both NDC endpoints of every training pixel ray.
pub fn forward_canvas(manifest: &SceneManifest, cfg: &NdcConfig) -> Result<BoundingBox2> {
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for &i in &manifest.train_ids {
        let cam = &manifest.views[i].camera;
        for v in 0..cam.height {
            for u in 0..cam.width {
                let (o, d) = cam.pixel_ray(u, v);
                let Some(ray) = NdcRay::new(&o, &d, cfg) else { continue };
                for s in [0.0, 1.0] {
                    let q = ray.point(s);
                    for k in 0..2 {
                        min[k] = min[k].min(q[k]);
                        max[k] = max[k].max(q[k]);
                    }
                }
            }
        }
    }
    BoundingBox2::new(min, max)
}
