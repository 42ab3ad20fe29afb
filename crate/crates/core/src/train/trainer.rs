use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields::{save_checkpoint, BlockKind, LrGroup, Model};
use crate::render::{image_rays, render_view, RayBatch};
use crate::scene::{load_image, CameraModel, ImageBuffer, SceneManifest};
use crate::train::adam::{adam_step, AdamState};
use crate::train::config::{RunConfig, Schedule};
use crate::train::loss::eval_psnr;
use crate::train::objective::{step_seed, Objective, ObjectiveSettings, ObjectiveTerms};

/// One line of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub color: f64,
    pub uv: f64,
    pub tv: f64,
    pub psnr_eval: Option<f64>,
}

pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,L_color,L_uv,L_tv,psnr_eval")?;
    for r in rows {
        let psnr = r.psnr_eval.map(|p| format!("{p:.4}")).unwrap_or_default();
        writeln!(f, "{},{:e},{:e},{:e},{}", r.step, r.color, r.uv, r.tv, psnr)?;
    }
    Ok(())
}

pub fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// Optimization state of a run.
pub struct Trainer {
    pub run: RunConfig,
    pub schedule: Schedule,
    pub model: Model,
    pub step: u64,
    pub metrics: Vec<MetricsRow>,
    adam: Vec<AdamState>,
    objective: Objective,
    rays: RayBatch,
    eval: Vec<(CameraModel, ImageBuffer)>,
    pool: rayon::ThreadPool,
}

impl Trainer {
    pub fn new(manifest: &SceneManifest, run: &RunConfig) -> Result<Self> {
        manifest.validate()?;
        run.render.validate()?;
        let schedule = run.train.resolve(manifest.scene_kind, &run.model)?;
        let model = Model::new(manifest, &run.model, schedule.plan(), schedule.anneal, run.seed)?;
        let mut rays = RayBatch { colors: Some(Vec::new()), ..RayBatch::default() };
        for &i in &manifest.train_ids {
            let img = load_image(&manifest.image_path(i))?;
            let cam = &manifest.views[i].camera;
            check_size(cam, &img)?;
            let b = image_rays(cam, &img);
            rays.origins.extend(b.origins);
            rays.dirs.extend(b.dirs);
            rays.pixels.extend(b.pixels);
            rays.colors.as_mut().unwrap().extend(b.colors.unwrap());
        }
        let mut eval = Vec::new();
        for &i in &manifest.eval_ids {
            let img = load_image(&manifest.image_path(i))?;
            let cam = manifest.views[i].camera.clone();
            check_size(&cam, &img)?;
            eval.push((cam, img));
        }
        let adam = model.block_kinds().iter().map(|&k| AdamState::new(model.block(k).len())).collect();
        let objective = Objective::new(&model, run.train.lanes);
        let pool = build_pool(run.workers)?;
        Ok(Self { run: run.clone(), schedule, model, step: 0, metrics: Vec::new(), adam, objective, rays, eval, pool })
    }

    fn reset_moments(&mut self, kind: BlockKind) {
        if let Some(i) = self.model.block_kinds().iter().position(|&k| k == kind) {
            self.adam[i] = AdamState::new(self.model.block(kind).len());
        }
    }

    fn apply_milestones(&mut self) -> Result<()> {
        if self.schedule.grid_milestones.contains(&self.step) && self.model.upscale_density()? {
            self.reset_moments(BlockKind::Density);
        }
        if self.schedule.image_milestones.contains(&self.step) && self.model.upscale_image()? {
            self.reset_moments(BlockKind::Color);
        }
        Ok(())
    }

    fn sample_batch(&self) -> RayBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(step_seed(self.run.seed, self.step, 2));
        let total = self.rays.len();
        let colors = self.rays.colors.as_ref().expect("training colors");
        let mut batch = RayBatch { colors: Some(Vec::with_capacity(self.run.train.rays_per_step)), ..RayBatch::default() };
        for _ in 0..self.run.train.rays_per_step {
            let i = rng.gen_range(0..total);
            batch.push(self.rays.origins[i], self.rays.dirs[i], self.rays.pixels[i]);
            batch.colors.as_mut().unwrap().push(colors[i]);
        }
        batch
    }

    /// Runs one optimization step.
    pub fn step_once(&mut self) -> Result<ObjectiveTerms> {
        self.apply_milestones()?;
        let batch = self.sample_batch();
        let settings = ObjectiveSettings {
            render: &self.run.render,
            lambda_uv: self.schedule.lambda_uv,
            lambda_tv: if self.schedule.tv_active(self.step) { self.schedule.lambda_tv } else { 0.0 },
            jitter_seed: Some(self.run.seed),
        };
        let (model, objective, step) = (&self.model, &mut self.objective, self.step);
        let terms = self.pool.install(|| objective.evaluate(model, &batch, &settings, step))?;
        let cfg = self.run.train.adam;
        for (i, kind) in self.model.block_kinds().into_iter().enumerate() {
            let lr = match self.model.lr_group(kind) {
                LrGroup::Grid => self.run.train.lr_grid,
                LrGroup::Net => self.run.train.lr_net,
            };
            let grads = &self.objective.grads.blocks[i];
            adam_step(self.model.block_mut(kind), grads, &mut self.adam[i], lr, &cfg);
        }
        self.step += 1;
        Ok(terms)
    }

    /// Mean PSNR over the held-out views, `None` when there are none.
    pub fn eval_psnr(&self) -> Result<Option<f64>> {
        if self.eval.is_empty() {
            return Ok(None);
        }
        let mut sum = 0.0;
        for (cam, gt) in &self.eval {
            let r = self.pool.install(|| render_view(&self.model, cam, &self.run.render, self.step))?;
            sum += eval_psnr(&r.image, gt)?;
        }
        Ok(Some(sum / self.eval.len() as f64))
    }

    /// Trains to the configured step count.
    pub fn run_to_end(&mut self) -> Result<()> {
        let steps = self.run.train.steps;
        let every = self.run.train.eval_every;
        while self.step < steps {
            let terms = self.step_once()?;
            let last = self.step == steps;
            let psnr = if last || (every > 0 && self.step % every == 0) { self.eval_psnr()? } else { None };
            if psnr.is_some() || self.step % 100 == 0 || last {
                self.metrics.push(MetricsRow { step: self.step, color: terms.color, uv: terms.uv, tv: terms.tv, psnr_eval: psnr });
                log::info!("step {} L_color {:.3e} L_uv {:.3e} psnr {:?}", self.step, terms.color, terms.uv, psnr);
            }
        }
        Ok(())
    }

    pub fn pool(&self) -> &rayon::ThreadPool {
        &self.pool
    }

    /// Writes `checkpoint.bin`, `metrics.csv` and `config.json`; returns the
    /// checkpoint content hash.
    pub fn save(&self, out_dir: &Path) -> Result<String> {
        std::fs::create_dir_all(out_dir)?;
        let hash = save_checkpoint(&out_dir.join("checkpoint.bin"), &self.model, self.step, &self.run.to_value())?;
        write_metrics(&self.metrics, &out_dir.join("metrics.csv"))?;
        std::fs::write(out_dir.join("config.json"), serde_json::to_string_pretty(&self.run.to_value())?)?;
        Ok(hash)
    }
}

fn check_size(cam: &CameraModel, img: &ImageBuffer) -> Result<()> {
    if cam.width != img.width || cam.height != img.height {
        return Err(Error::SchemaViolation(format!(
            "image is {}x{} but camera is {}x{}",
            img.width, img.height, cam.width, cam.height
        )));
    }
    Ok(())
}

/// Trains a model on `manifest` and returns the final trainer state.
pub fn train(manifest: &SceneManifest, run: &RunConfig) -> Result<Trainer> {
    let mut t = Trainer::new(manifest, run)?;
    t.run_to_end()?;
    Ok(t)
}
