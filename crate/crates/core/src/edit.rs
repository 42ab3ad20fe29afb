//! Canonical-image editing round trip and mask-based content extraction.
//!
//! Exported PNGs and masks store the canonical image with the maximum canvas
//! `v` in the top row, so they look upright in ordinary image editors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{save_checkpoint, CanonicalImage, Checkpoint, Model};
use crate::math::{logit, sigmoid};
use crate::projection::BoundingBox2;
use crate::render::{render_view, render_view_masked, DensityMask, MaskMode, RenderConfig, ViewRender};
use crate::scene::image::{load_mask, quantize, save_rgb_bytes};
use crate::scene::{load_image, save_image, CameraModel, ImageBuffer};

/// Saturation clamp applied before re-encoding edited colors as logits.
pub const LOGIT_CLAMP: f64 = 1.0 / 510.0;

pub const ROW_ORDER: &str = "top_row_is_v_max";

/// Sidecar describing an exported canonical image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditMeta {
    pub canvas: BoundingBox2,
    pub height: usize,
    pub width: usize,
    pub checkpoint_hash: String,
    pub row_order: String,
}

/// Files produced by [`export_canonical`].
#[derive(Clone, Debug, PartialEq)]
pub struct EditBundle {
    pub image: PathBuf,
    pub meta_path: PathBuf,
    pub meta: EditMeta,
    pub mask: Option<PathBuf>,
}

fn canonical(model: &Model) -> Result<&CanonicalImage> {
    model.image().ok_or_else(|| Error::Unsupported("the model has no explicit canonical image".into()))
}

/// Visible (sigmoid) colors of the canonical image as top-row-first RGB bytes.
pub fn canonical_bytes(image: &CanonicalImage) -> Vec<u8> {
    let (h, w) = (image.height, image.width);
    let mut out = Vec::with_capacity(h * w * 3);
    for row in 0..h {
        let y = h - 1 - row;
        out.extend(image.values[y * w * 3..(y + 1) * w * 3].iter().map(|&v| quantize(sigmoid(v))));
    }
    out
}

pub fn meta_path_for(image: &Path) -> PathBuf {
    let name = image.file_name().and_then(|n| n.to_str()).unwrap_or("canonical");
    let stem = name.strip_suffix(".canonical.png").or_else(|| name.strip_suffix(".png")).unwrap_or(name);
    image.with_file_name(format!("{stem}.meta.json"))
}

/// Writes `<stem>.canonical.png` and `<stem>.meta.json` into `out_dir`.
pub fn export_canonical(ckpt: &Checkpoint, out_dir: &Path, stem: &str) -> Result<EditBundle> {
    let image = canonical(&ckpt.model)?;
    let meta = EditMeta {
        canvas: image.canvas,
        height: image.height,
        width: image.width,
        checkpoint_hash: ckpt.hash.clone(),
        row_order: ROW_ORDER.into(),
    };
    let png = out_dir.join(format!("{stem}.canonical.png"));
    save_rgb_bytes(image.width, image.height, &canonical_bytes(image), &png)
        .map_err(|e| Error::CheckpointIo(format!("{}: {e}", png.display())))?;
    let meta_path = meta_path_for(&png);
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)
        .map_err(|e| Error::CheckpointIo(format!("{}: {e}", meta_path.display())))?;
    Ok(EditBundle { image: png, meta_path, meta, mask: None })
}

pub fn load_meta(path: &Path) -> Result<EditMeta> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Raw canonical value for a visible color.
#[inline]
pub fn encode_visible(v: f64) -> f64 {
    logit(v.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP))
}

/// Replaces the canonical image of `model` with the visible colors of `edited`
/// (top row first). No other parameter is touched.
pub fn apply_canonical(model: &mut Model, edited: &ImageBuffer) -> Result<()> {
    let image = model
        .image_mut()
        .ok_or_else(|| Error::Unsupported("the model has no explicit canonical image".into()))?;
    if edited.width != image.width || edited.height != image.height {
        return Err(Error::DimensionMismatch(format!(
            "edited image is {}x{}, canonical image is {}x{}",
            edited.width, edited.height, image.width, image.height
        )));
    }
    let (h, w) = (image.height, image.width);
    for row in 0..h {
        let y = h - 1 - row;
        let src = &edited.data[row * w * 3..(row + 1) * w * 3];
        for (dst, &v) in image.values[y * w * 3..(y + 1) * w * 3].iter_mut().zip(src) {
            *dst = encode_visible(v);
        }
    }
    Ok(())
}

fn check_meta(ckpt: &Checkpoint, meta: &EditMeta) -> Result<()> {
    let image = canonical(&ckpt.model)?;
    if meta.checkpoint_hash != ckpt.hash {
        return Err(Error::StaleMetadata(format!(
            "metadata was exported from checkpoint {}, this checkpoint is {}",
            meta.checkpoint_hash, ckpt.hash
        )));
    }
    if meta.width != image.width || meta.height != image.height {
        return Err(Error::DimensionMismatch(format!(
            "metadata describes {}x{}, canonical image is {}x{}",
            meta.width, meta.height, image.width, image.height
        )));
    }
    Ok(())
}

/// Loads an edited canonical PNG into the checkpoint's model after checking
/// the sidecar metadata (found next to the PNG unless given).
pub fn import_canonical(ckpt: &mut Checkpoint, edited_png: &Path, meta_path: Option<&Path>) -> Result<()> {
    let meta_path = meta_path.map_or_else(|| meta_path_for(edited_png), Path::to_path_buf);
    let meta = load_meta(&meta_path)?;
    check_meta(ckpt, &meta)?;
    let edited = load_image(edited_png)?;
    apply_canonical(&mut ckpt.model, &edited)
}

/// Imports an edit and writes the resulting checkpoint; returns its hash.
pub fn import_canonical_to(ckpt: &mut Checkpoint, edited_png: &Path, meta_path: Option<&Path>, out: &Path) -> Result<String> {
    import_canonical(ckpt, edited_png, meta_path)?;
    let hash = save_checkpoint(out, &ckpt.model, ckpt.step, &ckpt.run)?;
    ckpt.hash = hash.clone();
    Ok(hash)
}

/// Builds a density mask from top-row-first mask values aligned to the
/// canonical image.
pub fn density_mask(model: &Model, width: usize, height: usize, values: &[f64], mode: MaskMode) -> Result<DensityMask> {
    let image = canonical(model)?;
    if width != image.width || height != image.height || values.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "mask is {width}x{height}, canonical image is {}x{}",
            image.width, image.height
        )));
    }
    let mut rows = Vec::with_capacity(values.len());
    for row in (0..height).rev() {
        rows.extend(values[row * width..(row + 1) * width].iter().map(|v| v.clamp(0.0, 1.0)));
    }
    Ok(DensityMask { width, height, values: rows, canvas: image.canvas, mode })
}

pub fn load_density_mask(model: &Model, path: &Path, mode: MaskMode) -> Result<DensityMask> {
    let (w, h, values) = load_mask(path)?;
    density_mask(model, w, h, &values, mode)
}

/// Renders `cameras` with the density masked by `mask`.
pub fn extract(model: &Model, mask: &DensityMask, cameras: &[CameraModel], config: &RenderConfig, step: u64) -> Result<Vec<ViewRender>> {
    cameras.iter().map(|cam| render_view_masked(model, cam, config, step, Some(mask))).collect()
}

/// Front-to-back composite `C_fg + T_fg · C_bg` of two extraction renders.
pub fn composite_over(fg: &ViewRender, bg: &ViewRender) -> Result<ImageBuffer> {
    if fg.image.width != bg.image.width || fg.image.height != bg.image.height {
        return Err(Error::DimensionMismatch("foreground and background renders differ in size".into()));
    }
    let mut out = fg.image.clone();
    for (i, px) in out.data.chunks_exact_mut(3).enumerate() {
        let t = fg.transmittance[i];
        for c in 0..3 {
            px[c] += t * bg.image.data[i * 3 + c];
        }
    }
    Ok(out)
}

/// Imports an edited canonical image and renders every camera of a path,
/// writing `frame_###.png` into `out_dir` when given.
pub fn stylize_apply(
    ckpt: &mut Checkpoint,
    edited_png: &Path,
    meta_path: Option<&Path>,
    cameras: &[CameraModel],
    config: &RenderConfig,
    out_dir: Option<&Path>,
) -> Result<Vec<ViewRender>> {
    import_canonical(ckpt, edited_png, meta_path)?;
    let mut renders = Vec::with_capacity(cameras.len());
    for (i, cam) in cameras.iter().enumerate() {
        let r = render_view(&ckpt.model, cam, config, ckpt.step)?;
        if let Some(dir) = out_dir {
            save_image(&r.image, &dir.join(format!("frame_{i:03}.png")))?;
        }
        renders.push(r);
    }
    Ok(renders)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ModelConfig, UpscalePlan};
    use crate::scene::{generate_synthetic_scene, SceneKind, SynthSpec};

    fn small_model() -> (tempfile::TempDir, Model) {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec::new(4, SceneKind::ForwardFacing, 3, 32);
        let (m, _) = generate_synthetic_scene(&spec, dir.path()).unwrap();
        let mut cfg = ModelConfig::default();
        cfg.grid_resolution = Some([8, 8, 8]);
        cfg.image_height = 12;
        cfg.offset_layers = 1;
        cfg.offset_width = 8;
        cfg.hash.levels = 2;
        cfg.hash.log2_table_size = 8;
        let model = Model::new(&m, &cfg, UpscalePlan::default(), cfg.anneal_schedule(1.0), 1).unwrap();
        (dir, model)
    }

    fn ckpt(model: Model, dir: &Path) -> Checkpoint {
        let path = dir.join("m.bin");
        let hash = save_checkpoint(&path, &model, 0, &serde_json::Value::Null).unwrap();
        Checkpoint { model, step: 0, run: serde_json::Value::Null, hash }
    }

    #[test]
    fn zero_raw_exports_128() {
        let (dir, mut model) = small_model();
        model.image_mut().unwrap().values.fill(0.0);
        let c = ckpt(model, dir.path());
        let b = export_canonical(&c, dir.path(), "scene").unwrap();
        let img = load_image(&b.image).unwrap();
        assert!(img.data.iter().all(|&v| v == 128.0 / 255.0));
    }

    #[test]
    fn black_pixel_clamps_to_finite_logit() {
        let (_dir, mut model) = small_model();
        let (h, w) = (model.image().unwrap().height, model.image().unwrap().width);
        let img = ImageBuffer::new(w, h);
        apply_canonical(&mut model, &img).unwrap();
        let v = model.image().unwrap().values[0];
        assert_eq!(v, logit(1.0 / 510.0));
        assert!(v.is_finite());
    }

    #[test]
    fn round_trip_changes_raw_by_quantization_only() {
        let (dir, mut model) = small_model();
        for (i, v) in model.image_mut().unwrap().values.iter_mut().enumerate() {
            *v = ((i * 37 % 101) as f64 / 101.0 - 0.5) * 3.0;
        }
        let before = model.image().unwrap().values.clone();
        let mut c = ckpt(model, dir.path());
        let b = export_canonical(&c, dir.path(), "s").unwrap();
        import_canonical(&mut c, &b.image, None).unwrap();
        let after = &c.model.image().unwrap().values;
        for (a, b) in before.iter().zip(after) {
            assert!((a - b).abs() < 0.02, "{a} vs {b}");
        }
    }

    #[test]
    fn export_rows_are_flipped() {
        let (dir, mut model) = small_model();
        let img = model.image_mut().unwrap();
        let w = img.width;
        img.values.fill(-5.0);
        img.values[..w * 3].fill(5.0);
        let h = img.height;
        let c = ckpt(model, dir.path());
        let b = export_canonical(&c, dir.path(), "s").unwrap();
        let png = load_image(&b.image).unwrap();
        assert!(png.get(0, h - 1)[0] > 0.9);
        assert!(png.get(0, 0)[0] < 0.1);
    }

    #[test]
    fn stale_metadata_rejected() {
        let (dir, model) = small_model();
        let mut c = ckpt(model, dir.path());
        let b = export_canonical(&c, dir.path(), "s").unwrap();
        c.hash = "0".repeat(64);
        assert!(matches!(import_canonical(&mut c, &b.image, None), Err(Error::StaleMetadata(_))));
    }

    #[test]
    fn wrong_size_rejected() {
        let (dir, model) = small_model();
        let mut c = ckpt(model, dir.path());
        let b = export_canonical(&c, dir.path(), "s").unwrap();
        save_image(&ImageBuffer::new(3, 3), &b.image).unwrap();
        assert!(matches!(import_canonical(&mut c, &b.image, None), Err(Error::DimensionMismatch(_))));
        assert!(matches!(density_mask(&c.model, 3, 3, &[1.0; 9], MaskMode::Foreground), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn full_and_empty_masks() {
        let (_dir, model) = small_model();
        let img = model.image().unwrap();
        let (w, h) = (img.width, img.height);
        let cam = CameraModel::perspective(8, 8, 9.0, 9.0, 4.0, 4.0);
        let cfg = RenderConfig::exact(16);
        let plain = render_view(&model, &cam, &cfg, 0).unwrap();
        let ones = density_mask(&model, w, h, &vec![1.0; w * h], MaskMode::Foreground).unwrap();
        let fg = extract(&model, &ones, std::slice::from_ref(&cam), &cfg, 0).unwrap();
        assert_eq!(fg[0].image, plain.image);
        let zeros = density_mask(&model, w, h, &vec![0.0; w * h], MaskMode::Foreground).unwrap();
        let empty = extract(&model, &zeros, std::slice::from_ref(&cam), &cfg, 0).unwrap();
        assert!(empty[0].image.data.iter().all(|&v| v == 0.0));
        assert!(empty[0].transmittance.iter().all(|&t| t == 1.0));
    }
}
