use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

/// Orthonormality tolerance for camera-to-world rotations.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraKind {
    Perspective,
    Spherical,
}

/// Pinhole or equirectangular camera. Perspective cameras look down `-z` in
/// their own frame with `+y` up; spherical cameras have azimuth zero along
/// `+x` and `+z` up.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    pub kind: CameraKind,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera-to-world rotation.
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl CameraModel {
    pub fn perspective(width: usize, height: usize, fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self {
            kind: CameraKind::Perspective,
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn spherical(width: usize, height: usize) -> Self {
        Self {
            kind: CameraKind::Spherical,
            width,
            height,
            fx: 0.0,
            fy: 0.0,
            cx: 0.0,
            cy: 0.0,
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn with_pose(mut self, rotation: Mat3, translation: Vec3) -> Self {
        self.rotation = rotation;
        self.translation = translation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::SchemaViolation("camera has zero size".into()));
        }
        check_rotation(&self.rotation)?;
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::SchemaViolation("non-finite translation".into()));
        }
        if self.kind == CameraKind::Perspective {
            if !(self.fx > 0.0 && self.fy > 0.0) {
                return Err(Error::SchemaViolation("focal lengths must be positive".into()));
            }
            if !(self.cx >= 0.0 && self.cx < self.width as f64) || !(self.cy >= 0.0 && self.cy < self.height as f64) {
                return Err(Error::SchemaViolation("principal point outside the image".into()));
            }
        }
        Ok(())
    }

    /// Unit direction in the camera frame through the center of pixel `(u, v)`.
    pub fn local_direction(&self, u: usize, v: usize) -> Vec3 {
        let (uc, vc) = (u as f64 + 0.5, v as f64 + 0.5);
        match self.kind {
            CameraKind::Perspective => {
                Vec3::new((uc - self.cx) / self.fx, -(vc - self.cy) / self.fy, -1.0).normalize()
            }
            CameraKind::Spherical => {
                let azimuth = 2.0 * PI * (0.5 - uc / self.width as f64);
                let elevation = PI * (0.5 - vc / self.height as f64);
                let (se, ce) = elevation.sin_cos();
                let (sa, ca) = azimuth.sin_cos();
                Vec3::new(ce * ca, ce * sa, se)
            }
        }
    }

    /// World-space ray `(origin, unit direction)` through pixel `(u, v)`.
    pub fn pixel_ray(&self, u: usize, v: usize) -> (Vec3, Vec3) {
        let d = (self.rotation * self.local_direction(u, v)).normalize();
        (self.translation, d)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

pub(crate) fn check_rotation(r: &Mat3) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::NonOrthonormalRotation(f64::INFINITY));
    }
    let dev = (r.transpose() * r - Mat3::identity()).amax();
    if dev >= ROTATION_TOL {
        return Err(Error::NonOrthonormalRotation(dev));
    }
    let det = r.determinant();
    if (det - 1.0).abs() >= ROTATION_TOL {
        return Err(Error::NonOrthonormalRotation((det - 1.0).abs()));
    }
    Ok(())
}

/// Rotation about `axis` (unit) by `angle` radians.
pub fn axis_angle(axis: Vec3, angle: f64) -> Mat3 {
    *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn principal_pixel_looks_down_minus_z() {
        let cam = CameraModel::perspective(8, 6, 10.0, 10.0, 4.5, 3.5);
        let (o, d) = cam.pixel_ray(4, 3);
        assert_eq!(o, Vec3::zeros());
        assert!((d - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn spherical_center_is_plus_x() {
        let cam = CameraModel::spherical(1, 1);
        assert!((cam.local_direction(0, 0) - Vec3::x()).norm() < 1e-15);
        // the four pixels around the center of an even image straddle +x symmetrically
        let cam = CameraModel::spherical(64, 32);
        let sum = cam.local_direction(31, 15) + cam.local_direction(32, 16);
        assert!(sum.y.abs() < 1e-15 && sum.z.abs() < 1e-15 && sum.x > 1.99);
    }

    #[test]
    fn directions_are_unit() {
        let cam = CameraModel::perspective(17, 9, 13.0, 11.0, 8.0, 4.0)
            .with_pose(axis_angle(Vec3::new(0.3, 1.0, 0.2), 0.4), Vec3::new(1.0, 2.0, 3.0));
        for v in 0..9 {
            for u in 0..17 {
                assert!((cam.pixel_ray(u, v).1.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_rotation() {
        let mut cam = CameraModel::perspective(8, 8, 5.0, 5.0, 4.0, 4.0);
        cam.rotation[(0, 0)] = 1.001;
        assert!(matches!(cam.validate(), Err(Error::NonOrthonormalRotation(_))));
        cam.rotation = -Mat3::identity();
        assert!(matches!(cam.validate(), Err(Error::NonOrthonormalRotation(_))));
    }

    #[test]
    fn rejects_bad_intrinsics() {
        let cam = CameraModel::perspective(8, 8, 0.0, 5.0, 4.0, 4.0);
        assert!(matches!(cam.validate(), Err(Error::SchemaViolation(_))));
        let cam = CameraModel::perspective(8, 8, 5.0, 5.0, 8.0, 4.0);
        assert!(matches!(cam.validate(), Err(Error::SchemaViolation(_))));
    }
}
