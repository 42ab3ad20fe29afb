use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{BlockKind, Gradients, Model};
use crate::render::sampling::draw_jitter;
use crate::render::{PassContext, RayBatch, RayWork, RenderConfig};
use crate::train::loss::{loss_tv, loss_tv_backward};

/// Per-step objective settings.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveSettings<'a> {
    pub render: &'a RenderConfig,
    pub lambda_uv: f64,
    /// Effective TV weight for this step (zero once TV is switched off).
    pub lambda_tv: f64,
    /// Seed for stratified sample jitter; `None` samples deterministically.
    pub jitter_seed: Option<u64>,
}

/// The individual loss terms and their weighted sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveTerms {
    pub color: f64,
    pub uv: f64,
    pub tv: f64,
    pub total: f64,
}

/// Gradient buffers for the objective, reduced over a fixed number of lanes
/// so the result does not depend on how many threads run them.
#[derive(Clone, Debug)]
pub struct Objective {
    lanes: Vec<Gradients>,
    pub grads: Gradients,
}

/// Mixes a run seed and a step into a per-step RNG seed.
pub fn step_seed(seed: u64, step: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ step.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Objective {
    pub fn new(model: &Model, lanes: usize) -> Self {
        let g = Gradients::zeros_like(model);
        Self { lanes: vec![g.clone(); lanes.max(1)], grads: g }
    }

    fn fit(&mut self, model: &Model) {
        let shape_ok = |g: &Gradients| {
            g.kinds == model.block_kinds() && g.kinds.iter().zip(&g.blocks).all(|(&k, b)| b.len() == model.block(k).len())
        };
        if !shape_ok(&self.grads) {
            *self = Self::new(model, self.lanes.len());
        }
    }

    /// Evaluates the objective on `batch` (colors required) and leaves its
    /// gradient in `self.grads`.
    pub fn evaluate(&mut self, model: &Model, batch: &RayBatch, settings: &ObjectiveSettings, step: u64) -> Result<ObjectiveTerms> {
        let targets = batch.colors.as_ref().ok_or(Error::EmptyBatch)?;
        let b = batch.len();
        if b == 0 {
            return Err(Error::EmptyBatch);
        }
        settings.render.validate()?;
        self.fit(model);
        let anneal = model.anneal.weights(step);
        let ctx = PassContext::new(model, settings.render, &anneal);
        ctx.sampler.validate()?;
        let n = ctx.sampler.n;
        let inv_b = 1.0 / b as f64;
        let uv_coef = settings.lambda_uv / (b * n) as f64;
        let n_lanes = self.lanes.len();
        let jitter_seed = settings.jitter_seed.map(|s| step_seed(s, step, 1));

        let partials: Vec<(f64, f64)> = self
            .lanes
            .par_iter_mut()
            .enumerate()
            .map(|(lane, grads)| {
                grads.fill(0.0);
                let mut work = RayWork::new(model, n);
                let mut jitter = Vec::with_capacity(n);
                let (mut color_sum, mut uv_sum) = (0.0, 0.0);
                for i in lane * b / n_lanes..(lane + 1) * b / n_lanes {
                    let j = jitter_seed.map(|s| {
                        let mut rng = ChaCha8Rng::seed_from_u64(s);
                        rng.set_stream(i as u64);
                        draw_jitter(&mut rng, n, &mut jitter);
                        jitter.as_slice()
                    });
                    let out = ctx.forward_ray(&batch.origins[i], &batch.dirs[i], j, &mut work);
                    let gt = targets[i];
                    let r = [out.rgb[0] - gt[0], out.rgb[1] - gt[1], out.rgb[2] - gt[2]];
                    color_sum += r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
                    uv_sum += work.offset_sq;
                    let d_rgb = [2.0 * r[0] * inv_b, 2.0 * r[1] * inv_b, 2.0 * r[2] * inv_b];
                    ctx.backward_ray(&mut work, d_rgb, uv_coef, grads);
                }
                (color_sum, uv_sum)
            })
            .collect();

        let lanes = &self.lanes;
        for (bi, block) in self.grads.blocks.iter_mut().enumerate() {
            block.par_chunks_mut(1 << 14).enumerate().for_each(|(ci, chunk)| {
                let start = ci << 14;
                chunk.copy_from_slice(&lanes[0].blocks[bi][start..start + chunk.len()]);
                for lane in &lanes[1..] {
                    for (d, s) in chunk.iter_mut().zip(&lane.blocks[bi][start..]) {
                        *d += s;
                    }
                }
            });
        }

        let color = partials.iter().map(|p| p.0).sum::<f64>() * inv_b;
        let uv = partials.iter().map(|p| p.1).sum::<f64>() / (b * n) as f64;
        let mut tv = 0.0;
        if settings.lambda_tv > 0.0 {
            if let Some(grid) = model.grid() {
                tv = loss_tv(grid);
                let g = self.grads.get_mut(BlockKind::Density).expect("density block");
                loss_tv_backward(grid, settings.lambda_tv, g);
            }
        }
        let total = color + settings.lambda_uv * uv + settings.lambda_tv * tv;
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss(step));
        }
        Ok(ObjectiveTerms { color, uv, tv, total })
    }
}

/// One-shot objective and gradient (single lane).
pub fn total_objective(model: &Model, batch: &RayBatch, settings: &ObjectiveSettings, step: u64) -> Result<(ObjectiveTerms, Gradients)> {
    let mut obj = Objective::new(model, 1);
    let terms = obj.evaluate(model, batch, settings, step)?;
    Ok((terms, obj.grads))
}
