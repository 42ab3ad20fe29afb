//! Per-ray forward and backward passes through density, projection field and
//! canonical colors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::canonical::{Bilinear, ColorSample};
use crate::fields::density::GridCell;
use crate::fields::model::{ColorField, DensityField, Model, Projection};
use crate::fields::{BlockKind, Gradients, MlpTrace};
use crate::math::{sigmoid, softplus, Vec3, DENSITY_SHIFT};
use crate::projection::{uv_to_pixel, BoundingBox2};
use crate::render::composite::{weights_into, RayColor};
use crate::render::rays::RayBatch;
use crate::render::sampling::{sample_ray_into, RaySamples, SamplerSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Samples per ray.
    pub samples: usize,
    /// Multiplier from domain-space step length to integration step.
    pub delta_scale: f64,
    /// Transmittance below which compositing stops; 0 disables.
    pub early_exit: f64,
    /// Samples whose weight falls below this skip the color lookup; 0 disables.
    pub color_threshold: f64,
    /// Rays per rendering tile.
    pub tile_size: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { samples: 128, delta_scale: 32.0, early_exit: crate::render::composite::EARLY_EXIT, color_threshold: 0.0, tile_size: 4096 }
    }
}

impl RenderConfig {
    /// Settings for exact gradients: no early exit and no skipped colors.
    pub fn exact(samples: usize) -> Self {
        Self { samples, early_exit: 0.0, color_threshold: 0.0, ..Self::default() }
    }

    pub fn sampler(&self, model: &Model) -> SamplerSpec {
        SamplerSpec { n: self.samples, near: model.frame.near, far: model.frame.far, delta_scale: self.delta_scale }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_size == 0 {
            return Err(Error::InvalidConfig("tile_size must be positive".into()));
        }
        if !(self.early_exit >= 0.0 && self.early_exit < 1.0) || !(self.color_threshold >= 0.0) {
            return Err(Error::InvalidConfig("early_exit must be in [0,1) and color_threshold >= 0".into()));
        }
        if self.samples < 2 || !(self.delta_scale > 0.0) {
            return Err(Error::InvalidBounds(format!("need samples >= 2 and positive delta_scale, got {} / {}", self.samples, self.delta_scale)));
        }
        Ok(())
    }
}

/// Which side of a mask an extraction keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    Foreground,
    Background,
}

/// Canonical-space mask applied to density at render time.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMask {
    pub width: usize,
    pub height: usize,
    /// Row 0 is the canvas `v` minimum, like the canonical image.
    pub values: Vec<f64>,
    pub canvas: BoundingBox2,
    pub mode: MaskMode,
}

impl DensityMask {
    /// Factor multiplying the density of a sample projecting to `uv`.
    #[inline]
    pub fn factor(&self, uv: [f64; 2]) -> f64 {
        let px = uv_to_pixel(uv, &self.canvas, self.height, self.width);
        let m = Bilinear::at(px.x, px.y, self.width, self.height).sample(&self.values, self.width, 1, 0);
        match self.mode {
            MaskMode::Foreground => m,
            MaskMode::Background => 1.0 - m,
        }
    }
}

/// Reusable per-ray buffers, including what the backward pass needs.
#[derive(Clone, Debug)]
pub struct RayWork {
    pub samples: RaySamples,
    s_buf: Vec<f64>,
    pub sigma: Vec<f64>,
    dsigma: Vec<f64>,
    cells: Vec<Option<GridCell>>,
    pub weights: Vec<f64>,
    trans: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
    /// Whether sample `i` had its projection and color evaluated.
    pub evaluated: Vec<bool>,
    projected: Vec<bool>,
    pub projections: Vec<Projection>,
    /// Explicit-image lookups of evaluated samples.
    pub lookups: Vec<Option<ColorSample>>,
    offset_traces: Vec<MlpTrace>,
    /// Offset-network first-layer base of the current ray direction.
    dir_base: Vec<f64>,
    has_base: bool,
    dir_grad: Vec<f64>,
    dir: Vec3,
    density_traces: Vec<MlpTrace>,
    color_traces: Vec<MlpTrace>,
    pub active: usize,
    pub t_end: f64,
    /// Sum of squared offsets over evaluated samples.
    pub offset_sq: f64,
}

impl RayWork {
    pub fn new(model: &Model, n: usize) -> Self {
        let s = model.scratch();
        let rep = |t: Option<MlpTrace>| t.map_or_else(Vec::new, |t| vec![t; n]);
        Self {
            samples: RaySamples::default(),
            s_buf: Vec::with_capacity(n),
            sigma: Vec::with_capacity(n),
            dsigma: Vec::with_capacity(n),
            cells: Vec::with_capacity(n),
            weights: Vec::with_capacity(n),
            trans: Vec::with_capacity(n),
            colors: Vec::with_capacity(n),
            evaluated: Vec::with_capacity(n),
            projected: Vec::with_capacity(n),
            projections: Vec::with_capacity(n),
            lookups: Vec::with_capacity(n),
            offset_traces: rep(s.offset),
            dir_base: Vec::new(),
            has_base: false,
            dir_grad: Vec::new(),
            dir: Vec3::zeros(),
            density_traces: rep(s.density),
            color_traces: rep(s.color),
            active: 0,
            t_end: 1.0,
            offset_sq: 0.0,
        }
    }

    fn reset(&mut self) {
        self.sigma.clear();
        self.dsigma.clear();
        self.cells.clear();
        self.colors.clear();
        self.evaluated.clear();
        self.projected.clear();
        self.projections.clear();
        self.lookups.clear();
        self.has_base = false;
        self.active = 0;
        self.t_end = 1.0;
        self.offset_sq = 0.0;
    }
}

/// Shared inputs of a rendering pass.
#[derive(Clone, Copy, Debug)]
pub struct PassContext<'a> {
    pub model: &'a Model,
    pub config: &'a RenderConfig,
    pub sampler: SamplerSpec,
    /// Anneal weights of the current step.
    pub anneal: &'a [f64],
    pub mask: Option<&'a DensityMask>,
}

impl<'a> PassContext<'a> {
    pub fn new(model: &'a Model, config: &'a RenderConfig, anneal: &'a [f64]) -> Self {
        Self { model, config, sampler: config.sampler(model), anneal, mask: None }
    }

    pub fn with_mask(mut self, mask: Option<&'a DensityMask>) -> Self {
        self.mask = mask;
        self
    }

    #[inline]
    fn project(&self, work: &mut RayWork, i: usize, d: &Vec3) {
        if work.projected[i] {
            return;
        }
        let q = work.samples.q[i];
        if !work.has_base {
            if let Some(net) = &self.model.offset {
                net.direction_base(d, &mut work.dir_base);
            }
            work.dir = *d;
            work.has_base = true;
        }
        let trace = work.offset_traces.get_mut(i);
        work.projections[i] = self.model.project_with_base(&q, &work.dir_base, self.anneal, trace);
        work.projected[i] = true;
    }

    /// Renders one ray, leaving everything the backward pass needs in `work`.
    pub fn forward_ray(&self, o: &Vec3, d: &Vec3, jitter: Option<&[f64]>, work: &mut RayWork) -> RayColor {
        let model = self.model;
        let far = self.sampler.far;
        work.reset();
        let RayWork { samples, s_buf, .. } = work;
        if !sample_ray_into(o, d, &model.frame, &self.sampler, jitter, s_buf, samples) {
            work.weights.clear();
            return RayColor { rgb: [0.0; 3], depth: far, transmittance: 1.0 };
        }
        let n = work.samples.len();

        for i in 0..n {
            let q = work.samples.q[i];
            let (sigma, ds, cell) = match &model.density {
                DensityField::Grid(g) => match g.locate(&q) {
                    Some(c) => {
                        let raw = g.raw_in_cell(&c) + DENSITY_SHIFT;
                        (softplus(raw), sigmoid(raw), Some(c))
                    }
                    None => (0.0, 0.0, None),
                },
                DensityField::Implicit(m) => match m.forward(&q, &mut work.density_traces[i]) {
                    Some((s, ds)) => (s, ds, None),
                    None => (0.0, 0.0, None),
                },
            };
            work.sigma.push(sigma);
            work.dsigma.push(ds);
            work.cells.push(cell);
            work.projected.push(false);
            work.evaluated.push(false);
            work.projections.push(Projection { uv: [0.0; 2], offset: [0.0; 2] });
            work.lookups.push(None);
            work.colors.push([0.0; 3]);
        }

        if let Some(mask) = self.mask {
            for i in 0..n {
                if work.sigma[i] > 0.0 {
                    self.project(work, i, d);
                    work.sigma[i] *= mask.factor(work.projections[i].uv);
                }
            }
        }

        let (t_end, active) = weights_into(&work.sigma, &work.samples.delta, self.config.early_exit, &mut work.weights, &mut work.trans);
        work.t_end = t_end;
        work.active = active;

        let mut rgb = [0.0; 3];
        let mut depth = 0.0;
        for i in 0..active {
            let w = work.weights[i];
            let in_domain = work.sigma[i] > 0.0 || work.dsigma[i] > 0.0;
            if in_domain && w >= self.config.color_threshold {
                self.project(work, i, d);
                let p = work.projections[i];
                let lookup = model.color_at(p.uv, work.color_traces.get_mut(i));
                work.colors[i] = lookup.rgb;
                work.lookups[i] = lookup.sample;
                work.evaluated[i] = true;
                work.offset_sq += p.offset[0] * p.offset[0] + p.offset[1] * p.offset[1];
                for c in 0..3 {
                    rgb[c] += w * lookup.rgb[c];
                }
            }
            depth += w * work.samples.t[i].min(far);
        }
        RayColor { rgb, depth: depth + t_end * far, transmittance: t_end }
    }

    /// Adds the gradients of `d_rgb · C(r) + uv_coef · Σ‖Δp_uv‖²` for the ray
    /// last rendered into `work`.
    pub fn backward_ray(&self, work: &mut RayWork, d_rgb: [f64; 3], uv_coef: f64, grads: &mut Gradients) {
        let model = self.model;
        let active = work.active;
        if active == 0 {
            return;
        }
        let (g_density, g_color, mut g_offset, mut g_hash) = split_grads(grads);

        // Suffix sums of w_i (c_i · G) for the density gradient.
        let mut suffix = 0.0;
        for k in (0..active).rev() {
            let cg = work.colors[k][0] * d_rgb[0] + work.colors[k][1] * d_rgb[1] + work.colors[k][2] * d_rgb[2];
            let t_next = if k + 1 < work.trans.len() { work.trans[k + 1] } else { work.t_end };
            let d_sigma = work.samples.delta[k] * (t_next * cg - suffix);
            suffix += work.weights[k] * cg;
            let d_raw = d_sigma * work.dsigma[k];
            if d_raw != 0.0 {
                match &model.density {
                    DensityField::Grid(g) => {
                        if let Some(c) = &work.cells[k] {
                            g.accumulate_grad(c, d_raw, g_density);
                        }
                    }
                    DensityField::Implicit(m) => m.backward(&mut work.density_traces[k], d_raw, g_density),
                }
            }
        }

        if let Some(net) = &model.offset {
            work.dir_grad.clear();
            work.dir_grad.resize(net.mlp.sizes[1], 0.0);
        }
        for k in 0..active {
            if !work.evaluated[k] {
                continue;
            }
            let w = work.weights[k];
            let d_c = [w * d_rgb[0], w * d_rgb[1], w * d_rgb[2]];
            let d_uv = match &model.color {
                ColorField::Image(img) => img.backward(work.lookups[k].as_ref().expect("explicit lookup"), d_c, g_color),
                ColorField::Implicit(m) => {
                    let uv = work.projections[k].uv;
                    m.backward(uv, work.colors[k], &mut work.color_traces[k], d_c, g_color)
                }
            };
            if let (Some(net), Some(g_off)) = (&model.offset, g_offset.as_deref_mut()) {
                let off = work.projections[k].offset;
                let d_off = [d_uv[0] + 2.0 * uv_coef * off[0], d_uv[1] + 2.0 * uv_coef * off[1]];
                if d_off[0] != 0.0 || d_off[1] != 0.0 {
                    let q = work.samples.q[k];
                    net.backward(
                        &q,
                        self.anneal,
                        &mut work.offset_traces[k],
                        d_off,
                        g_off,
                        g_hash.as_deref_mut(),
                        &mut work.dir_grad,
                    );
                }
            }
        }
        if let (Some(net), Some(g_off)) = (&model.offset, g_offset) {
            if work.has_base {
                net.direction_grad(&work.dir, &work.dir_grad, g_off);
            }
        }
    }

    /// Forward pass over a batch, parallel over tiles of the current rayon
    /// pool. Output order follows the batch.
    pub fn render_batch(&self, batch: &RayBatch) -> Vec<RayColor> {
        let tile = self.config.tile_size.max(1);
        let idx: Vec<usize> = (0..batch.len()).collect();
        idx.par_chunks(tile)
            .flat_map_iter(|chunk| {
                let mut work = RayWork::new(self.model, self.sampler.n);
                chunk
                    .iter()
                    .map(|&i| self.forward_ray(&batch.origins[i], &batch.dirs[i], None, &mut work))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

/// Splits gradient buffers into (density, color, offset, hash tables).
pub fn split_grads(g: &mut Gradients) -> (&mut [f64], &mut [f64], Option<&mut [f64]>, Option<&mut [f64]>) {
    debug_assert!(g.kinds.len() >= 2 && g.kinds[0] == BlockKind::Density && g.kinds[1] == BlockKind::Color);
    let mut it = g.blocks.iter_mut();
    let density = it.next().expect("density block");
    let color = it.next().expect("color block");
    let offset = it.next().map(|v| v.as_mut_slice());
    let hash = it.next().map(|v| v.as_mut_slice());
    (density, color, offset, hash)
}

/// Per-ray rendering results for a batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RenderOutput {
    pub rgb: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
    pub transmittance: Vec<f64>,
}

/// Renders a ray batch with the model at step `step` (deterministic samples).
pub fn render_rays(model: &Model, batch: &RayBatch, config: &RenderConfig, step: u64) -> Result<RenderOutput> {
    config.validate()?;
    let anneal = model.anneal.weights(step);
    let ctx = PassContext::new(model, config, &anneal);
    ctx.sampler.validate()?;
    let out = ctx.render_batch(batch);
    Ok(RenderOutput {
        rgb: out.iter().map(|r| r.rgb).collect(),
        depth: out.iter().map(|r| r.depth).collect(),
        transmittance: out.iter().map(|r| r.transmittance).collect(),
    })
}
