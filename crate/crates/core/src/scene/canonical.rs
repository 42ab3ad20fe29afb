use super::camera::CameraModel;
use super::manifest::{SceneKind, SceneManifest};
use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

/// Virtual camera whose viewpoint defines the canonical image layout.
///
/// Forward-facing scenes average the camera `z` (backward) and `up` axes of
/// the training views and re-orthonormalize them; the camera sits at the
/// world origin and borrows the intrinsics of the first training view.
/// Panorama scenes use an identity pose at the origin.
pub fn compute_pseudo_canonical_camera(manifest: &SceneManifest) -> Result<CameraModel> {
    let ids: Vec<usize> = if manifest.train_ids.is_empty() {
        (0..manifest.views.len()).collect()
    } else {
        manifest.train_ids.clone()
    };
    let first = ids
        .first()
        .map(|&i| &manifest.views[i].camera)
        .ok_or_else(|| Error::SchemaViolation("no views to average".into()))?;
    match manifest.scene_kind {
        SceneKind::Panorama => Ok(CameraModel::spherical(first.width, first.height)),
        SceneKind::ForwardFacing => {
            let rotations: Vec<Mat3> = ids.iter().map(|&i| manifest.views[i].camera.rotation).collect();
            let rotation = average_rotation(&rotations)?;
            Ok(first.clone().with_pose(rotation, Vec3::zeros()))
        }
    }
}

pub fn average_rotation(rotations: &[Mat3]) -> Result<Mat3> {
    if rotations.len() == 1 {
        return Ok(rotations[0]);
    }
    let n = rotations.len().max(1) as f64;
    let back: Vec3 = rotations.iter().map(|r| r.column(2).into_owned()).sum::<Vec3>() / n;
    let up: Vec3 = rotations.iter().map(|r| r.column(1).into_owned()).sum::<Vec3>() / n;
    if back.norm() < 1e-6 {
        return Err(Error::DegenerateAverage(back.norm()));
    }
    let z = back.normalize();
    let right = up.cross(&z);
    if right.norm() < 1e-6 {
        return Err(Error::DegenerateAverage(right.norm()));
    }
    let x = right.normalize();
    let y = z.cross(&x);
    Ok(Mat3::from_columns(&[x, y, z]))
}
