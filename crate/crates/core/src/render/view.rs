use std::path::Path;

use crate::error::Result;
use crate::fields::Model;
use crate::render::pipeline::{DensityMask, PassContext, RenderConfig};
use crate::render::rays::all_rays;
use crate::scene::image::save_rgb_bytes;
use crate::scene::{CameraModel, ImageBuffer};

/// A rendered view: colors, expected depth and residual transmittance per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewRender {
    pub image: ImageBuffer,
    pub depth: Vec<f64>,
    pub transmittance: Vec<f64>,
}

/// Renders every pixel of `cam`, optionally with a density mask.
pub fn render_view_masked(model: &Model, cam: &CameraModel, config: &RenderConfig, step: u64, mask: Option<&DensityMask>) -> Result<ViewRender> {
    cam.validate()?;
    config.validate()?;
    let anneal = model.anneal.weights(step);
    let ctx = PassContext::new(model, config, &anneal).with_mask(mask);
    ctx.sampler.validate()?;
    let batch = all_rays(cam);
    let out = ctx.render_batch(&batch);
    let mut image = ImageBuffer::new(cam.width, cam.height);
    for (i, r) in out.iter().enumerate() {
        image.set(i % cam.width, i / cam.width, r.rgb);
    }
    Ok(ViewRender {
        image,
        depth: out.iter().map(|r| r.depth).collect(),
        transmittance: out.iter().map(|r| r.transmittance).collect(),
    })
}

pub fn render_view(model: &Model, cam: &CameraModel, config: &RenderConfig, step: u64) -> Result<ViewRender> {
    render_view_masked(model, cam, config, step, None)
}

/// Writes a depth map as a normalized gray PNG plus a `<name>.txt` sidecar
/// holding `min max` in world units.
pub fn save_depth(depth: &[f64], width: usize, height: usize, path: &Path) -> Result<()> {
    let lo = depth.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = depth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let bytes: Vec<u8> = depth
        .iter()
        .flat_map(|&d| {
            let v = crate::scene::image::quantize((d - lo) / span);
            [v, v, v]
        })
        .collect();
    save_rgb_bytes(width, height, &bytes, path)?;
    std::fs::write(path.with_extension("txt"), format!("{lo} {hi}\n"))?;
    Ok(())
}
