use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::camera::{check_rotation, CameraKind, CameraModel};
use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    ForwardFacing,
    Panorama,
}

#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub camera: CameraModel,
    /// Image path as written in the manifest, relative to [`SceneManifest::root`].
    pub image: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneManifest {
    pub scene_kind: SceneKind,
    pub near: Option<f64>,
    pub far: Option<f64>,
    pub views: Vec<View>,
    pub train_ids: Vec<usize>,
    pub eval_ids: Vec<usize>,
    /// Directory image paths are resolved against.
    pub root: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    scene_kind: SceneKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    near: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    far: Option<f64>,
    views: Vec<ViewRecord>,
    train_ids: Vec<usize>,
    #[serde(default)]
    eval_ids: Vec<usize>,
}

/// One camera as stored on disk; also the record type of camera path files.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub kind: CameraKind,
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cy: Option<f64>,
    /// Row-major camera-to-world rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl ViewRecord {
    pub fn from_camera(cam: &CameraModel, image: Option<String>) -> Self {
        let r = &cam.rotation;
        let persp = cam.kind == CameraKind::Perspective;
        Self {
            image,
            kind: cam.kind,
            width: cam.width,
            height: cam.height,
            fx: persp.then_some(cam.fx),
            fy: persp.then_some(cam.fy),
            cx: persp.then_some(cam.cx),
            cy: persp.then_some(cam.cy),
            rotation: [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            translation: [cam.translation.x, cam.translation.y, cam.translation.z],
        }
    }

    pub fn to_camera(&self) -> Result<CameraModel> {
        let rotation = Mat3::from_row_slice(&self.rotation);
        check_rotation(&rotation)?;
        let cam = match self.kind {
            CameraKind::Perspective => {
                let need = |v: Option<f64>, name: &str| {
                    v.ok_or_else(|| Error::SchemaViolation(format!("perspective view missing `{name}`")))
                };
                CameraModel::perspective(
                    self.width,
                    self.height,
                    need(self.fx, "fx")?,
                    need(self.fy, "fy")?,
                    need(self.cx, "cx")?,
                    need(self.cy, "cy")?,
                )
            }
            CameraKind::Spherical => CameraModel::spherical(self.width, self.height),
        }
        .with_pose(rotation, Vec3::from_row_slice(&self.translation));
        cam.validate()?;
        Ok(cam)
    }
}

impl SceneManifest {
    pub fn image_path(&self, view: usize) -> PathBuf {
        self.root.join(&self.views[view].image)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_ids.is_empty() {
            return Err(Error::SchemaViolation("manifest needs at least one training view".into()));
        }
        for &i in self.train_ids.iter().chain(&self.eval_ids) {
            if i >= self.views.len() {
                return Err(Error::SchemaViolation(format!("view index {i} out of range")));
            }
        }
        if let (Some(n), Some(f)) = (self.near, self.far) {
            if !(n < f) {
                return Err(Error::SchemaViolation(format!("near {n} must be below far {f}")));
            }
        }
        let want = match self.scene_kind {
            SceneKind::Panorama => CameraKind::Spherical,
            SceneKind::ForwardFacing => {
                match (self.near, self.far) {
                    (Some(n), Some(_)) if n > 0.0 => {}
                    _ => return Err(Error::SchemaViolation("forward-facing scenes need near > 0 and far".into())),
                }
                CameraKind::Perspective
            }
        };
        for (i, v) in self.views.iter().enumerate() {
            if v.camera.kind != want {
                return Err(Error::SchemaViolation(format!(
                    "view {i} has a {:?} camera in a {:?} scene",
                    v.camera.kind, self.scene_kind
                )));
            }
            v.camera.validate()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ManifestFile {
            scene_kind: self.scene_kind,
            near: self.near,
            far: self.far,
            views: self
                .views
                .iter()
                .map(|v| ViewRecord::from_camera(&v.camera, Some(v.image.to_string_lossy().into_owned())))
                .collect(),
            train_ids: self.train_ids.clone(),
            eval_ids: self.eval_ids.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

pub fn save_manifest(manifest: &SceneManifest, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, manifest.to_json()?)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<SceneManifest> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let file: ManifestFile =
        serde_json::from_str(&text).map_err(|e| Error::SchemaViolation(format!("{}: {e}", path.display())))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut views = Vec::with_capacity(file.views.len());
    for rec in &file.views {
        let image = rec
            .image
            .clone()
            .ok_or_else(|| Error::SchemaViolation("view without `image`".into()))?;
        views.push(View { camera: rec.to_camera()?, image: PathBuf::from(image) });
    }
    let manifest = SceneManifest {
        scene_kind: file.scene_kind,
        near: file.near,
        far: file.far,
        views,
        train_ids: file.train_ids,
        eval_ids: file.eval_ids,
        root,
    };
    manifest.validate()?;
    for i in 0..manifest.views.len() {
        let p = manifest.image_path(i);
        if !p.exists() {
            return Err(Error::MissingFile(p));
        }
    }
    Ok(manifest)
}

/// Reads a camera path file: a JSON list of camera records.
pub fn load_camera_path(path: &Path) -> Result<Vec<CameraModel>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let recs: Vec<ViewRecord> = serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| Error::SchemaViolation(format!("{}: {e}", path.display())))?;
    recs.iter().map(ViewRecord::to_camera).collect()
}

pub fn save_camera_path(cams: &[CameraModel], path: &Path) -> Result<()> {
    let recs: Vec<ViewRecord> = cams.iter().map(|c| ViewRecord::from_camera(c, None)).collect();
    std::fs::write(path, serde_json::to_string_pretty(&recs)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::image::{save_image, ImageBuffer};

    fn write_minimal(dir: &Path, body: &str) -> PathBuf {
        save_image(&ImageBuffer::new(4, 4), &dir.join("v0.png")).unwrap();
        let p = dir.join("manifest.json");
        std::fs::write(&p, body).unwrap();
        p
    }

    const VIEW: &str = r#"{"image":"v0.png","kind":"perspective","width":4,"height":4,"fx":4.0,"fy":4.0,"cx":2.0,"cy":2.0,
        "rotation":[1,0,0,0,1,0,0,0,1],"translation":[0,0,0]}"#;

    #[test]
    fn minimal_manifest_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_minimal(
            dir.path(),
            &format!(r#"{{"scene_kind":"forward_facing","near":0.5,"far":10,"views":[{VIEW}],"train_ids":[0],"eval_ids":[]}}"#),
        );
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.train_ids, vec![0]);
        assert_eq!(m.views.len(), 1);
        assert_eq!(m.near, Some(0.5));
    }

    #[test]
    fn panorama_with_perspective_camera_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_minimal(
            dir.path(),
            &format!(r#"{{"scene_kind":"panorama","views":[{VIEW}],"train_ids":[0]}}"#),
        );
        assert!(matches!(load_manifest(&p), Err(Error::SchemaViolation(_))));
    }

    #[test]
    fn unknown_field_and_bad_rotation_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_minimal(
            dir.path(),
            &format!(r#"{{"scene_kind":"forward_facing","near":0.5,"far":10,"bogus":1,"views":[{VIEW}],"train_ids":[0]}}"#),
        );
        assert!(matches!(load_manifest(&p), Err(Error::SchemaViolation(_))));
        let bad = VIEW.replace("[1,0,0,0,1,0,0,0,1]", "[1,0,0,0,1,0.1,0,0,1]");
        let p = write_minimal(
            dir.path(),
            &format!(r#"{{"scene_kind":"forward_facing","near":0.5,"far":10,"views":[{bad}],"train_ids":[0]}}"#),
        );
        assert!(matches!(load_manifest(&p), Err(Error::NonOrthonormalRotation(_))));
    }

    #[test]
    fn missing_image_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(
            &p,
            format!(r#"{{"scene_kind":"forward_facing","near":0.5,"far":10,"views":[{VIEW}],"train_ids":[0]}}"#),
        )
        .unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::MissingFile(_))));
        assert!(matches!(load_manifest(&dir.path().join("none.json")), Err(Error::MissingFile(_))));
    }

    #[test]
    fn near_must_precede_far() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_minimal(
            dir.path(),
            &format!(r#"{{"scene_kind":"forward_facing","near":3,"far":1,"views":[{VIEW}],"train_ids":[0]}}"#),
        );
        assert!(matches!(load_manifest(&p), Err(Error::SchemaViolation(_))));
    }
}
