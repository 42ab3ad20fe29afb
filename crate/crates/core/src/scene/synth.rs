//! Procedural scenes with an analytic ground-truth renderer.
//!
//! Forward-facing scenes are stacks of textured, axis-aligned rectangles facing
//! `+z`, viewed by perspective cameras on a jittered grid around the origin.
//! Panorama scenes are a textured box room viewed by spherical cameras placed
//! near the origin. Ground truth comes from exact ray/plane intersection, not
//! from the volume renderer.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::camera::{axis_angle, CameraModel};
use super::image::{save_image, ImageBuffer};
use super::manifest::{save_manifest, SceneKind, SceneManifest, View};
use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

pub const FORWARD_NEAR: f64 = 1.0;
pub const FORWARD_FAR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneLayout {
    /// One constant-color plane filling the view.
    Constant,
    /// One textured plane filling the view.
    Single,
    /// A small front plane over a background plane.
    Two,
    /// Two occluders at different depths over a background plane.
    Three,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub kind: SceneKind,
    /// Total views, training plus held-out.
    pub n_views: usize,
    #[serde(default = "default_eval")]
    pub n_eval: usize,
    /// Image height in pixels (forward-facing images are square, panoramas 2:1).
    pub resolution: usize,
    #[serde(default = "default_layout")]
    pub layout: PlaneLayout,
    /// Half extent of the camera grid along x.
    #[serde(default = "default_baseline")]
    pub baseline: f64,
}

fn default_eval() -> usize {
    2
}
fn default_layout() -> PlaneLayout {
    PlaneLayout::Three
}
fn default_baseline() -> f64 {
    0.25
}

impl SynthSpec {
    pub fn new(seed: u64, kind: SceneKind, n_views: usize, resolution: usize) -> Self {
        Self { seed, kind, n_views, n_eval: default_eval(), resolution, layout: default_layout(), baseline: default_baseline() }
    }

    fn validate(&self) -> Result<()> {
        if self.n_views < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 views, got {}", self.n_views)));
        }
        if self.resolution < 32 {
            return Err(Error::InvalidSpec(format!("resolution must be at least 32, got {}", self.resolution)));
        }
        if self.n_eval >= self.n_views {
            return Err(Error::InvalidSpec("held-out views must leave at least one training view".into()));
        }
        if !(self.baseline >= 0.0 && self.baseline.is_finite()) {
            return Err(Error::InvalidSpec("baseline must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Smooth procedural color: a base color plus two oriented sinusoids.
#[derive(Clone, Debug, PartialEq)]
pub struct Texture {
    pub base: [f64; 3],
    pub waves: Vec<Wave>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Wave {
    pub amplitude: [f64; 3],
    pub frequency: [f64; 2],
    pub phase: f64,
}

impl Texture {
    pub fn constant(rgb: [f64; 3]) -> Self {
        Self { base: rgb, waves: Vec::new() }
    }

    fn random(rng: &mut ChaCha8Rng, base: [f64; 3], scale: f64) -> Self {
        let waves = (0..2)
            .map(|_| {
                let angle = rng.gen_range(0.0..PI);
                let freq = rng.gen_range(2.0..4.0) / scale;
                Wave {
                    amplitude: [rng.gen_range(0.1..0.22), rng.gen_range(0.1..0.22), rng.gen_range(0.1..0.22)],
                    frequency: [freq * angle.cos(), freq * angle.sin()],
                    phase: rng.gen_range(0.0..2.0 * PI),
                }
            })
            .collect();
        Self { base, waves }
    }

    pub fn color(&self, a: f64, b: f64) -> [f64; 3] {
        let mut c = self.base;
        for w in &self.waves {
            let s = (w.frequency[0] * a + w.frequency[1] * b + w.phase).sin();
            for k in 0..3 {
                c[k] += w.amplitude[k] * s;
            }
        }
        c.map(|v| v.clamp(0.02, 0.98))
    }
}

/// Rectangle in the plane `z = -depth`, facing `+z`.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub depth: f64,
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub texture: Texture,
}

impl Plane {
    fn intersect(&self, o: &Vec3, d: &Vec3) -> Option<(f64, [f64; 3])> {
        if d.z.abs() < 1e-12 {
            return None;
        }
        let t = (-self.depth - o.z) / d.z;
        if t <= 0.0 {
            return None;
        }
        let p = o + d * t;
        (p.x >= self.x[0] && p.x <= self.x[1] && p.y >= self.y[0] && p.y <= self.y[1])
            .then(|| (t, self.texture.color(p.x, p.y)))
    }
}

/// Axis-aligned box centered at the origin; walls ordered `-x, +x, -y, +y, -z, +z`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxRoom {
    pub half: [f64; 3],
    pub walls: Vec<Texture>,
}

impl BoxRoom {
    fn intersect(&self, o: &Vec3, d: &Vec3) -> Option<(f64, [f64; 3], usize)> {
        let mut best: Option<(f64, usize)> = None;
        for axis in 0..3 {
            if d[axis].abs() < 1e-15 {
                continue;
            }
            for (side, sign) in [(0usize, -1.0), (1, 1.0)] {
                let t = (sign * self.half[axis] - o[axis]) / d[axis];
                if t > 0.0 && best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, axis * 2 + side));
                }
            }
        }
        let (t, wall) = best?;
        let p = o + d * t;
        let axis = wall / 2;
        let (a, b) = match axis {
            0 => (p.y, p.z),
            1 => (p.x, p.z),
            _ => (p.x, p.y),
        };
        Some((t, self.walls[wall].color(a, b), wall))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    Planes(Vec<Plane>),
    Room(BoxRoom),
}

/// Analytic ray hit: distance, color and the index of the surface hit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub rgb: [f64; 3],
    pub surface: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub spec: SynthSpec,
    pub geometry: Geometry,
    pub cameras: Vec<CameraModel>,
    pub train_ids: Vec<usize>,
    pub eval_ids: Vec<usize>,
}

impl SyntheticScene {
    pub fn build(spec: &SynthSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let geometry = match spec.kind {
            SceneKind::ForwardFacing => Geometry::Planes(forward_planes(spec.layout, &mut rng)),
            SceneKind::Panorama => Geometry::Room(room(&mut rng)),
        };
        let n_train = spec.n_views - spec.n_eval;
        let mut cameras = Vec::with_capacity(spec.n_views);
        match spec.kind {
            SceneKind::ForwardFacing => {
                let res = spec.resolution;
                let f = 1.1 * res as f64;
                let intr = CameraModel::perspective(res, res, f, f, res as f64 / 2.0, res as f64 / 2.0);
                let cols = ((n_train as f64 * 4.0 / 3.0).sqrt().ceil() as usize).max(1);
                let rows = n_train.div_ceil(cols);
                let b = spec.baseline;
                let by = 0.75 * b;
                let jitter = 0.12 * b;
                for i in 0..n_train {
                    let (c, r) = (i % cols, i / cols);
                    let gx = if cols > 1 { -b + 2.0 * b * c as f64 / (cols - 1) as f64 } else { 0.0 };
                    let gy = if rows > 1 { by - 2.0 * by * r as f64 / (rows - 1) as f64 } else { 0.0 };
                    let pos = Vec3::new(
                        gx + rng.gen_range(-jitter..=jitter),
                        gy + rng.gen_range(-jitter..=jitter),
                        rng.gen_range(-jitter..=jitter),
                    );
                    cameras.push(intr.clone().with_pose(small_rotation(&mut rng), pos));
                }
                for _ in 0..spec.n_eval {
                    let pos = Vec3::new(
                        rng.gen_range(-0.8 * b..=0.8 * b),
                        rng.gen_range(-0.8 * by..=0.8 * by),
                        rng.gen_range(-jitter..=jitter),
                    );
                    cameras.push(intr.clone().with_pose(small_rotation(&mut rng), pos));
                }
            }
            SceneKind::Panorama => {
                let intr = CameraModel::spherical(2 * spec.resolution, spec.resolution);
                for _ in 0..spec.n_views {
                    let pos = Vec3::new(
                        rng.gen_range(-0.1..=0.1),
                        rng.gen_range(-0.1..=0.1),
                        rng.gen_range(-0.05..=0.05),
                    );
                    let yaw = rng.gen_range(-PI..PI);
                    cameras.push(intr.clone().with_pose(axis_angle(Vec3::z(), yaw), pos));
                }
            }
        }
        Ok(Self {
            spec: spec.clone(),
            geometry,
            cameras,
            train_ids: (0..n_train).collect(),
            eval_ids: (n_train..spec.n_views).collect(),
        })
    }

    pub fn near_far(&self) -> (Option<f64>, Option<f64>) {
        match self.spec.kind {
            SceneKind::ForwardFacing => (Some(FORWARD_NEAR), Some(FORWARD_FAR)),
            SceneKind::Panorama => (None, None),
        }
    }

    /// Nearest hit among the surfaces selected by `surfaces` (all when `None`).
    pub fn trace(&self, o: &Vec3, d: &Vec3, surfaces: Option<&[usize]>) -> Option<Hit> {
        let keep = |i: usize| surfaces.is_none_or(|s| s.contains(&i));
        match &self.geometry {
            Geometry::Planes(planes) => planes
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .filter_map(|(i, p)| p.intersect(o, d).map(|(t, rgb)| Hit { t, rgb, surface: i }))
                .min_by(|a, b| a.t.total_cmp(&b.t)),
            Geometry::Room(room) => room
                .intersect(o, d)
                .filter(|(_, _, w)| keep(*w))
                .map(|(t, rgb, surface)| Hit { t, rgb, surface }),
        }
    }

    /// Renders a camera analytically; misses are black. Returns the image and
    /// per-pixel hit distance (`None` on a miss).
    pub fn render(&self, cam: &CameraModel, surfaces: Option<&[usize]>) -> (ImageBuffer, Vec<Option<f64>>) {
        let mut img = ImageBuffer::new(cam.width, cam.height);
        let mut depth = Vec::with_capacity(cam.pixel_count());
        for v in 0..cam.height {
            for u in 0..cam.width {
                let (o, d) = cam.pixel_ray(u, v);
                match self.trace(&o, &d, surfaces) {
                    Some(hit) => {
                        img.set(u, v, hit.rgb);
                        depth.push(Some(hit.t));
                    }
                    None => depth.push(None),
                }
            }
        }
        (img, depth)
    }

    pub fn manifest(&self, root: &Path) -> SceneManifest {
        let (near, far) = self.near_far();
        SceneManifest {
            scene_kind: self.spec.kind,
            near,
            far,
            views: self
                .cameras
                .iter()
                .enumerate()
                .map(|(i, c)| View { camera: c.clone(), image: PathBuf::from(format!("view_{i:03}.png")) })
                .collect(),
            train_ids: self.train_ids.clone(),
            eval_ids: self.eval_ids.clone(),
            root: root.to_path_buf(),
        }
    }
}

/// Builds the scene, writes every view as PNG plus `manifest.json` into
/// `out_dir`, and returns the manifest alongside the analytic scene.
pub fn generate_synthetic_scene(spec: &SynthSpec, out_dir: &Path) -> Result<(SceneManifest, SyntheticScene)> {
    let scene = SyntheticScene::build(spec)?;
    std::fs::create_dir_all(out_dir)?;
    let manifest = scene.manifest(out_dir);
    for (i, cam) in scene.cameras.iter().enumerate() {
        let (img, _) = scene.render(cam, None);
        save_image(&img, &manifest.image_path(i))?;
    }
    save_manifest(&manifest, &out_dir.join("manifest.json"))?;
    Ok((manifest, scene))
}

fn small_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
    let max = 1.5f64.to_radians();
    let yaw = rng.gen_range(-max..=max);
    let pitch = rng.gen_range(-max..=max);
    axis_angle(Vec3::y(), yaw) * axis_angle(Vec3::x(), pitch)
}

fn forward_planes(layout: PlaneLayout, rng: &mut ChaCha8Rng) -> Vec<Plane> {
    let background = |rng: &mut ChaCha8Rng, depth: f64| Plane {
        depth,
        x: [-8.0, 8.0],
        y: [-8.0, 8.0],
        texture: Texture::random(rng, [0.3, 0.45, 0.7], 2.0),
    };
    match layout {
        PlaneLayout::Constant => vec![Plane {
            depth: 3.0,
            x: [-8.0, 8.0],
            y: [-8.0, 8.0],
            texture: Texture::constant([0.8, 0.35, 0.2]),
        }],
        PlaneLayout::Single => vec![background(rng, 3.0)],
        PlaneLayout::Two => vec![
            Plane { depth: 2.5, x: [-0.45, 0.45], y: [-0.4, 0.4], texture: Texture::random(rng, [0.75, 0.35, 0.25], 1.0) },
            background(rng, 5.0),
        ],
        PlaneLayout::Three => vec![
            Plane { depth: 2.2, x: [-0.15, 0.75], y: [-0.75, 0.15], texture: Texture::random(rng, [0.8, 0.4, 0.25], 1.0) },
            Plane { depth: 3.5, x: [-1.4, 0.1], y: [-0.2, 1.2], texture: Texture::random(rng, [0.35, 0.75, 0.3], 1.5) },
            background(rng, 6.0),
        ],
    }
}

fn room(rng: &mut ChaCha8Rng) -> BoxRoom {
    let bases = [
        [0.8, 0.4, 0.3],
        [0.3, 0.7, 0.4],
        [0.35, 0.45, 0.8],
        [0.75, 0.7, 0.3],
        [0.5, 0.4, 0.35],
        [0.85, 0.85, 0.8],
    ];
    BoxRoom { half: [3.0, 2.5, 1.5], walls: bases.iter().map(|&b| Texture::random(rng, b, 2.5)).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::image::load_image;
    use crate::scene::manifest::load_manifest;

    #[test]
    fn deterministic_for_seed() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let spec = SynthSpec::new(7, SceneKind::ForwardFacing, 4, 32);
        let (ma, _) = generate_synthetic_scene(&spec, dir_a.path()).unwrap();
        let (mb, _) = generate_synthetic_scene(&spec, dir_b.path()).unwrap();
        for i in 0..4 {
            let a = std::fs::read(ma.image_path(i)).unwrap();
            let b = std::fs::read(mb.image_path(i)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [SceneKind::ForwardFacing, SceneKind::Panorama] {
            let sub = dir.path().join(format!("{kind:?}"));
            let (m, _) = generate_synthetic_scene(&SynthSpec::new(1, kind, 3, 32), &sub).unwrap();
            let loaded = load_manifest(&sub.join("manifest.json")).unwrap();
            assert_eq!(loaded, m);
        }
    }

    #[test]
    fn constant_plane_renders_constant() {
        let mut spec = SynthSpec::new(2, SceneKind::ForwardFacing, 3, 32);
        spec.layout = PlaneLayout::Constant;
        let dir = tempfile::tempdir().unwrap();
        let (m, _) = generate_synthetic_scene(&spec, dir.path()).unwrap();
        let img = load_image(&m.image_path(0)).unwrap();
        let want = [0.8f64, 0.35, 0.2].map(|v| (v * 255.0).round() / 255.0);
        for px in img.data.chunks_exact(3) {
            assert_eq!(px, want);
        }
    }

    #[test]
    fn front_plane_occludes_back() {
        let mut spec = SynthSpec::new(3, SceneKind::ForwardFacing, 3, 48);
        spec.layout = PlaneLayout::Two;
        let scene = SyntheticScene::build(&spec).unwrap();
        let Geometry::Planes(planes) = &scene.geometry else { unreachable!() };
        for cam in &scene.cameras {
            for v in 0..cam.height {
                for u in 0..cam.width {
                    let (o, d) = cam.pixel_ray(u, v);
                    let front = planes[0].intersect(&o, &d);
                    let hit = scene.trace(&o, &d, None).unwrap();
                    if front.is_some() {
                        assert_eq!(hit.surface, 0);
                    } else {
                        assert_eq!(hit.surface, 1);
                    }
                }
            }
        }
    }

    #[test]
    fn room_is_closed() {
        let scene = SyntheticScene::build(&SynthSpec::new(4, SceneKind::Panorama, 3, 32)).unwrap();
        let cam = &scene.cameras[0];
        let (_, depth) = scene.render(cam, None);
        assert!(depth.iter().all(|d| d.is_some()));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(matches!(
            SyntheticScene::build(&SynthSpec::new(1, SceneKind::ForwardFacing, 1, 32)),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            SyntheticScene::build(&SynthSpec::new(1, SceneKind::ForwardFacing, 4, 16)),
            Err(Error::InvalidSpec(_))
        ));
    }
}
