use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::encoding::AnnealSchedule;
use crate::error::{Error, Result};
use crate::fields::{ModelConfig, UpscalePlan};
use crate::render::RenderConfig;
use crate::scene::SceneKind;
use crate::train::adam::AdamConfig;

/// Step count the default schedules are written for.
pub const REFERENCE_STEPS: u64 = 60_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    /// Learning rate of the explicit grid and image.
    pub lr_grid: f64,
    /// Learning rate of networks and hash tables.
    pub lr_net: f64,
    /// Projection regularizer weight; unset means the scene-kind default.
    pub lambda_uv: Option<f64>,
    /// Total-variation weight; unset means the scene-kind default.
    pub lambda_tv: Option<f64>,
    pub rays_per_step: usize,
    /// Grid upscaling steps; unset means the scene-kind default scaled to `steps`.
    pub grid_milestones: Option<Vec<u64>>,
    pub image_milestones: Option<Vec<u64>>,
    /// Step after which TV is disabled; unset means 20000 (scaled) for
    /// panoramas and never for forward-facing scenes.
    pub tv_off_step: Option<u64>,
    /// Held-out PSNR interval in steps (0: only after the last step).
    pub eval_every: u64,
    /// Fixed gradient reduction lanes; results do not depend on worker count.
    pub lanes: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: REFERENCE_STEPS,
            lr_grid: 0.1,
            lr_net: 0.001,
            lambda_uv: None,
            lambda_tv: None,
            rays_per_step: 4096,
            grid_milestones: None,
            image_milestones: None,
            tv_off_step: None,
            eval_every: 1000,
            lanes: 4,
            adam: AdamConfig::default(),
        }
    }
}

/// Schedules and weights of a run, with every default resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub grid_milestones: Vec<u64>,
    pub image_milestones: Vec<u64>,
    pub tv_off_step: Option<u64>,
    pub lambda_uv: f64,
    pub lambda_tv: f64,
    pub anneal: AnnealSchedule,
}

impl Schedule {
    pub fn plan(&self) -> UpscalePlan {
        UpscalePlan { grid: self.grid_milestones.len(), image: self.image_milestones.len() }
    }

    pub fn tv_active(&self, step: u64) -> bool {
        self.lambda_tv > 0.0 && self.tv_off_step.is_none_or(|s| step < s)
    }
}

fn default_milestones(kind: SceneKind) -> (Vec<u64>, Vec<u64>) {
    match kind {
        SceneKind::ForwardFacing => (vec![2000, 4000, 6000, 8000], vec![8000, 16000]),
        SceneKind::Panorama => ((1..=8).map(|i| 2000 * i).collect(), vec![4000, 8000, 12000, 16000]),
    }
}

/// Scales reference milestones to `steps`, dropping any that collapse onto
/// step 0, a previous milestone, or the end of training.
fn scale_milestones(ms: &[u64], steps: u64) -> Vec<u64> {
    let scale = steps as f64 / REFERENCE_STEPS as f64;
    let mut out: Vec<u64> = Vec::new();
    for &m in ms {
        let s = (m as f64 * scale).round() as u64;
        if s > 0 && s < steps && out.last().is_none_or(|&l| s > l) {
            out.push(s);
        }
    }
    out
}

fn check_milestones(name: &str, ms: &[u64], steps: u64) -> Result<()> {
    if ms.windows(2).any(|w| w[0] >= w[1]) || ms.iter().any(|&m| m >= steps) {
        return Err(Error::InvalidConfig(format!("{name} must be strictly increasing and below steps ({steps}): {ms:?}")));
    }
    Ok(())
}

impl TrainConfig {
    pub fn scale(&self) -> f64 {
        self.steps as f64 / REFERENCE_STEPS as f64
    }

    pub fn resolve(&self, kind: SceneKind, model: &ModelConfig) -> Result<Schedule> {
        if !(self.lr_grid > 0.0 && self.lr_net > 0.0) {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        if self.rays_per_step == 0 || self.lanes == 0 {
            return Err(Error::InvalidConfig("rays_per_step and lanes must be positive".into()));
        }
        let (g, i) = default_milestones(kind);
        let grid = self.grid_milestones.clone().unwrap_or_else(|| scale_milestones(&g, self.steps));
        let image = self.image_milestones.clone().unwrap_or_else(|| scale_milestones(&i, self.steps));
        check_milestones("grid_milestones", &grid, self.steps)?;
        check_milestones("image_milestones", &image, self.steps)?;
        let (uv, tv) = match kind {
            SceneKind::ForwardFacing => (1e-5, 1e-5),
            SceneKind::Panorama => (1e-1, 1e-4),
        };
        let lambda_uv = self.lambda_uv.unwrap_or(uv);
        let lambda_tv = self.lambda_tv.unwrap_or(tv);
        if !(lambda_uv >= 0.0 && lambda_tv >= 0.0) {
            return Err(Error::InvalidConfig("regularizer weights must be non-negative".into()));
        }
        let tv_off_step = self.tv_off_step.or(match kind {
            SceneKind::Panorama => Some((20_000.0 * self.scale()).round() as u64),
            SceneKind::ForwardFacing => None,
        });
        let anneal = model.anneal_schedule(self.scale());
        if anneal.enabled && anneal.start >= anneal.end {
            return Err(Error::InvalidConfig("anneal start must precede its end".into()));
        }
        Ok(Schedule { grid_milestones: grid, image_milestones: image, tv_off_step, lambda_uv, lambda_tv, anneal })
    }
}

/// Everything a run needs besides the scene data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scene manifest path.
    pub scene: Option<PathBuf>,
    pub seed: u64,
    pub deterministic: bool,
    pub workers: usize,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub render: RenderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: None,
            seed: 0,
            deterministic: true,
            workers: 1,
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            render: RenderConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_value(v: Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_value(load_config_value(path)?)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

pub fn load_config_value(path: &Path) -> Result<Value> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

/// Applies `key.path=value`: the value is parsed as JSON when possible and
/// kept as a string otherwise; missing intermediate objects are created.
pub fn apply_override(config: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override `{spec}` is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidConfig(format!("bad override key `{key}`")));
    }
    let mut node = config;
    for part in &parts[..parts.len() - 1] {
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("override `{key}` descends into a non-object")))?;
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    if node.is_null() {
        *node = Value::Object(Default::default());
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| Error::InvalidConfig(format!("override `{key}` descends into a non-object")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
