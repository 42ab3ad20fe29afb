use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{AnnealSchedule, HashGrid, HashGridConfig};
use crate::error::{Error, Result};
use crate::fields::canonical::{CanonicalImage, ColorSample};
use crate::fields::density::{initial_resolution, DensityGrid};
use crate::fields::implicit::{ImplicitCanonical, ImplicitDensity};
use crate::fields::mlp::{Mlp, MlpTrace};
use crate::fields::offset::{EncoderKind, OffsetNetwork, PositionEncoder};
use crate::math::Vec3;
use crate::projection::{
    canonical_init_forward, canonical_init_panorama_total, canonical_width, forward_canvas, panorama_canvas,
    panorama_width, BoundingBox2, BoundingBox3, NdcConfig,
};
use crate::scene::{compute_pseudo_canonical_camera, SceneKind, SceneManifest};

/// Default near/far distances for panorama sampling (manifests carry none).
pub const PANORAMA_NEAR: f64 = 0.1;
pub const PANORAMA_FAR: f64 = 100.0;

/// Component toggles for the ablation settings I–V.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// I: density from an MLP instead of the voxel grid.
    pub implicit_density: bool,
    /// II: canonical colors from an MLP instead of the explicit image.
    pub implicit_canonical: bool,
    /// III: drop the fixed canonical projection; the network predicts `p_uv` alone.
    pub no_canonical_init: bool,
    /// IV: drop the learned offset; `p_uv` is the canonical projection.
    pub no_offset: bool,
    /// V: the offset network ignores the view direction.
    pub no_viewdir: bool,
}

impl Ablation {
    /// Toggles for setting `1..=5`; `0` is the full model.
    pub fn setting(n: u8) -> Result<Self> {
        let mut a = Self::default();
        match n {
            0 => {}
            1 => a.implicit_density = true,
            2 => a.implicit_canonical = true,
            3 => a.no_canonical_init = true,
            4 => a.no_offset = true,
            5 => a.no_viewdir = true,
            _ => return Err(Error::InvalidConfig(format!("unknown ablation setting {n}"))),
        }
        Ok(a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub pe_bands: usize,
    pub hash: HashGridConfig,
    pub hash_init_scale: f64,
    /// Band annealing; unset means on for Fourier and off for hash encoders.
    pub anneal: Option<bool>,
    /// Anneal window; unset means the 60000-step defaults scaled to the run.
    pub anneal_start: Option<u64>,
    pub anneal_end: Option<u64>,
    pub offset_layers: usize,
    pub offset_width: usize,
    /// Final density grid resolution; unset means the scene-kind default.
    pub grid_resolution: Option<[usize; 3]>,
    /// Final canonical image height.
    pub image_height: usize,
    pub implicit_layers: usize,
    pub implicit_width: usize,
    pub implicit_density_bands: usize,
    pub implicit_canonical_bands: usize,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::Hash,
            pe_bands: 8,
            hash: HashGridConfig::default(),
            hash_init_scale: 1e-4,
            anneal: None,
            anneal_start: None,
            anneal_end: None,
            offset_layers: 4,
            offset_width: 128,
            grid_resolution: None,
            image_height: 768,
            implicit_layers: 3,
            implicit_width: 64,
            implicit_density_bands: 6,
            implicit_canonical_bands: 8,
            ablation: Ablation::default(),
        }
    }
}

pub const ANNEAL_START: u64 = 4000;
pub const ANNEAL_END: u64 = 8000;

impl ModelConfig {
    pub fn final_grid_resolution(&self, kind: SceneKind) -> [usize; 3] {
        self.grid_resolution.unwrap_or(match kind {
            SceneKind::ForwardFacing => [384, 384, 256],
            SceneKind::Panorama => [320, 320, 320],
        })
    }

    /// Anneal schedule for a run whose step counts are scaled by `scale`
    /// relative to the 60000-step defaults.
    pub fn anneal_schedule(&self, scale: f64) -> AnnealSchedule {
        let bands = match self.encoder {
            EncoderKind::Pe => self.pe_bands,
            EncoderKind::Hash => self.hash.levels,
        };
        let enabled = self.anneal.unwrap_or(self.encoder == EncoderKind::Pe);
        let start = self.anneal_start.unwrap_or((ANNEAL_START as f64 * scale).round() as u64);
        let end = self.anneal_end.unwrap_or((ANNEAL_END as f64 * scale).round() as u64).max(start + 1);
        AnnealSchedule { start, end, bands, enabled }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder == EncoderKind::Hash {
            self.hash.validate()?;
        }
        if self.offset_width == 0 || self.implicit_width == 0 {
            return Err(Error::InvalidConfig("network widths must be positive".into()));
        }
        if self.image_height < 2 {
            return Err(Error::InvalidConfig("canonical image height must be >= 2".into()));
        }
        if !(self.hash_init_scale >= 0.0) {
            return Err(Error::InvalidConfig("hash_init_scale must be >= 0".into()));
        }
        Ok(())
    }
}

/// Density source: explicit voxel grid or (ablation I) an MLP.
#[derive(Clone, Debug, PartialEq)]
pub enum DensityField {
    Grid(DensityGrid),
    Implicit(ImplicitDensity),
}

/// Canonical color source: explicit image or (ablation II) an MLP.
#[derive(Clone, Debug, PartialEq)]
pub enum ColorField {
    Image(CanonicalImage),
    Implicit(ImplicitCanonical),
}

/// Learning-rate group of a parameter block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LrGroup {
    Grid,
    Net,
}

/// Identifies one learnable parameter block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Density,
    Color,
    Offset,
    HashTables,
}

impl BlockKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Density => "density",
            Self::Color => "color",
            Self::Offset => "offset",
            Self::HashTables => "hash_tables",
        }
    }
}

/// Gradient (or any per-parameter) buffers mirroring the model blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub kinds: Vec<BlockKind>,
    pub blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        let kinds = model.block_kinds();
        let blocks = kinds.iter().map(|&k| vec![0.0; model.block(k).len()]).collect();
        Self { kinds, blocks }
    }

    pub fn get_mut(&mut self, kind: BlockKind) -> Option<&mut Vec<f64>> {
        let i = self.kinds.iter().position(|&k| k == kind)?;
        Some(&mut self.blocks[i])
    }

    pub fn get(&self, kind: BlockKind) -> Option<&[f64]> {
        let i = self.kinds.iter().position(|&k| k == kind)?;
        Some(&self.blocks[i])
    }

    pub fn fill(&mut self, v: f64) {
        for b in &mut self.blocks {
            b.fill(v);
        }
    }

    /// `self += other`, element by element in index order.
    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Geometry shared by every field: how world rays map into the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFrame {
    pub kind: SceneKind,
    /// Reference camera NDC setup (forward-facing only).
    pub ndc: Option<NdcConfig>,
    pub near: f64,
    pub far: f64,
    pub canvas: BoundingBox2,
    pub domain: BoundingBox3,
}

impl SceneFrame {
    pub fn from_manifest(manifest: &SceneManifest) -> Result<Self> {
        manifest.validate()?;
        let reference = compute_pseudo_canonical_camera(manifest)?;
        match manifest.scene_kind {
            SceneKind::ForwardFacing => {
                let near = manifest.near.unwrap_or(1.0);
                let far = manifest.far.ok_or_else(|| Error::SchemaViolation("forward-facing scene needs far".into()))?;
                let ndc = NdcConfig::from_camera(&reference, near)?;
                let canvas = forward_canvas(manifest, &ndc)?;
                Ok(Self { kind: SceneKind::ForwardFacing, ndc: Some(ndc), near, far, canvas, domain: BoundingBox3::from_canvas(&canvas) })
            }
            SceneKind::Panorama => Ok(Self {
                kind: SceneKind::Panorama,
                ndc: None,
                near: manifest.near.unwrap_or(PANORAMA_NEAR),
                far: manifest.far.unwrap_or(PANORAMA_FAR),
                canvas: panorama_canvas(),
                domain: BoundingBox3::unit_cube(),
            }),
        }
    }

    /// Final canonical image size `(height, width)` for `height`.
    pub fn image_size(&self, height: usize) -> (usize, usize) {
        match self.kind {
            SceneKind::Panorama => (height, panorama_width(height)),
            SceneKind::ForwardFacing => {
                let ndc = self.ndc.as_ref().expect("forward frame has NDC");
                (height, canonical_width(height, ndc.width / ndc.height, &self.canvas))
            }
        }
    }

    /// Fixed canonical projection of a domain point.
    #[inline]
    pub fn canonical_projection(&self, q: &Vec3) -> [f64; 2] {
        match self.kind {
            SceneKind::ForwardFacing => canonical_init_forward(q),
            SceneKind::Panorama => canonical_init_panorama_total(q),
        }
    }
}

/// How many progressive upscales a run applies to each explicit block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UpscalePlan {
    pub grid: usize,
    pub image: usize,
}

/// The complete learnable scene: density, canonical colors, projection offset.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub frame: SceneFrame,
    pub anneal: AnnealSchedule,
    pub density: DensityField,
    pub color: ColorField,
    pub offset: Option<OffsetNetwork>,
}

/// Output of the projection field for one sample.
#[derive(Clone, Copy, Debug)]
pub struct Projection {
    pub uv: [f64; 2],
    /// Learned offset, zero when the offset is disabled.
    pub offset: [f64; 2],
}

impl Model {
    /// Initial model: zero raw density and color, tiny hash features and a
    /// zero last offset layer so the projection starts at the canonical one.
    pub fn new(manifest: &SceneManifest, config: &ModelConfig, plan: UpscalePlan, anneal: AnnealSchedule, seed: u64) -> Result<Self> {
        let frame = SceneFrame::from_manifest(manifest)?;
        Self::with_frame(frame, config, plan, anneal, seed)
    }

    pub fn with_frame(frame: SceneFrame, config: &ModelConfig, plan: UpscalePlan, anneal: AnnealSchedule, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ab = config.ablation;

        let density = if ab.implicit_density {
            let bands = config.implicit_density_bands;
            let mut sizes = vec![ImplicitDensity::input_dim(bands)];
            sizes.extend(std::iter::repeat(config.implicit_width).take(config.implicit_layers));
            sizes.push(1);
            DensityField::Implicit(ImplicitDensity { bands, domain: frame.domain, mlp: Mlp::init(&sizes, &mut rng, true) })
        } else {
            let res = initial_resolution(config.final_grid_resolution(frame.kind), plan.grid);
            DensityField::Grid(DensityGrid::new(res, frame.domain)?)
        };

        let color = if ab.implicit_canonical {
            let bands = config.implicit_canonical_bands;
            let mut sizes = vec![ImplicitCanonical::input_dim(bands)];
            sizes.extend(std::iter::repeat(config.implicit_width).take(config.implicit_layers));
            sizes.push(3);
            ColorField::Implicit(ImplicitCanonical { bands, canvas: frame.canvas, mlp: Mlp::init(&sizes, &mut rng, true) })
        } else {
            let (h, w) = frame.image_size(config.image_height);
            let shrink = (1usize << plan.image) as f64;
            let h0 = ((h as f64 / shrink).round() as usize).max(2);
            let w0 = ((w as f64 / shrink).round() as usize).max(2);
            ColorField::Image(CanonicalImage::new(h0, w0, frame.canvas)?)
        };

        let offset = if ab.no_offset {
            None
        } else {
            let encoder = match config.encoder {
                EncoderKind::Pe => PositionEncoder::Fourier { bands: config.pe_bands },
                EncoderKind::Hash => {
                    let mut g = HashGrid::new(config.hash, frame.domain)?;
                    g.init_uniform(&mut rng, config.hash_init_scale);
                    PositionEncoder::Hash(g)
                }
            };
            if anneal.bands != encoder.band_count() {
                return Err(Error::InvalidConfig("anneal band count does not match the encoder".into()));
            }
            let use_viewdir = !ab.no_viewdir;
            let sizes = OffsetNetwork::layer_sizes(&encoder, use_viewdir, config.offset_layers, config.offset_width);
            let mlp = Mlp::init(&sizes, &mut rng, true);
            Some(OffsetNetwork { encoder, use_viewdir, mlp })
        };

        Ok(Self { config: config.clone(), frame, anneal, density, color, offset })
    }

    pub fn kind(&self) -> SceneKind {
        self.frame.kind
    }

    pub fn block_kinds(&self) -> Vec<BlockKind> {
        let mut kinds = vec![BlockKind::Density, BlockKind::Color];
        if let Some(net) = &self.offset {
            kinds.push(BlockKind::Offset);
            if matches!(net.encoder, PositionEncoder::Hash(_)) {
                kinds.push(BlockKind::HashTables);
            }
        }
        kinds
    }

    pub fn block(&self, kind: BlockKind) -> &[f64] {
        match kind {
            BlockKind::Density => match &self.density {
                DensityField::Grid(g) => &g.values,
                DensityField::Implicit(m) => &m.mlp.params,
            },
            BlockKind::Color => match &self.color {
                ColorField::Image(img) => &img.values,
                ColorField::Implicit(m) => &m.mlp.params,
            },
            BlockKind::Offset => self.offset.as_ref().map_or(&[], |n| &n.mlp.params),
            BlockKind::HashTables => match self.offset.as_ref().map(|n| &n.encoder) {
                Some(PositionEncoder::Hash(g)) => &g.tables,
                _ => &[],
            },
        }
    }

    pub fn block_mut(&mut self, kind: BlockKind) -> &mut [f64] {
        match kind {
            BlockKind::Density => match &mut self.density {
                DensityField::Grid(g) => &mut g.values,
                DensityField::Implicit(m) => &mut m.mlp.params,
            },
            BlockKind::Color => match &mut self.color {
                ColorField::Image(img) => &mut img.values,
                ColorField::Implicit(m) => &mut m.mlp.params,
            },
            BlockKind::Offset => self.offset.as_mut().map_or(&mut [], |n| &mut n.mlp.params),
            BlockKind::HashTables => match self.offset.as_mut().map(|n| &mut n.encoder) {
                Some(PositionEncoder::Hash(g)) => &mut g.tables,
                _ => &mut [],
            },
        }
    }

    pub fn lr_group(&self, kind: BlockKind) -> LrGroup {
        match kind {
            BlockKind::Density if matches!(self.density, DensityField::Grid(_)) => LrGroup::Grid,
            BlockKind::Color if matches!(self.color, ColorField::Image(_)) => LrGroup::Grid,
            _ => LrGroup::Net,
        }
    }

    /// Doubles the voxel count of an explicit density grid. Returns whether
    /// anything changed.
    pub fn upscale_density(&mut self) -> Result<bool> {
        if let DensityField::Grid(g) = &mut self.density {
            *g = g.upscale()?;
            return Ok(true);
        }
        Ok(false)
    }

    /// Quadruples the pixel count of an explicit canonical image.
    pub fn upscale_image(&mut self) -> Result<bool> {
        if let ColorField::Image(img) = &mut self.color {
            *img = img.upscale()?;
            return Ok(true);
        }
        Ok(false)
    }

    pub fn image(&self) -> Option<&CanonicalImage> {
        match &self.color {
            ColorField::Image(img) => Some(img),
            ColorField::Implicit(_) => None,
        }
    }

    pub fn image_mut(&mut self) -> Option<&mut CanonicalImage> {
        match &mut self.color {
            ColorField::Image(img) => Some(img),
            ColorField::Implicit(_) => None,
        }
    }

    pub fn grid(&self) -> Option<&DensityGrid> {
        match &self.density {
            DensityField::Grid(g) => Some(g),
            DensityField::Implicit(_) => None,
        }
    }

    /// Scratch buffers for one worker.
    pub fn scratch(&self) -> FieldScratch {
        FieldScratch {
            offset: self.offset.as_ref().map(|n| n.mlp.new_trace()),
            density: match &self.density {
                DensityField::Implicit(m) => Some(m.mlp.new_trace()),
                DensityField::Grid(_) => None,
            },
            color: match &self.color {
                ColorField::Implicit(m) => Some(m.mlp.new_trace()),
                ColorField::Image(_) => None,
            },
        }
    }

    /// Projection field `p_uv = P_c(q) + P_o(q, d)` for domain point `q` and
    /// unit world direction `d`; `weights` are the anneal weights of the step.
    #[inline]
    pub fn project(&self, q: &Vec3, d: &Vec3, weights: &[f64], trace: Option<&mut MlpTrace>) -> Projection {
        let mut base = Vec::new();
        if let Some(net) = &self.offset {
            net.direction_base(d, &mut base);
        }
        self.project_with_base(q, &base, weights, trace)
    }

    /// [`Model::project`] with the ray's offset-network direction base
    /// precomputed by [`OffsetNetwork::direction_base`].
    #[inline]
    pub fn project_with_base(&self, q: &Vec3, base: &[f64], weights: &[f64], trace: Option<&mut MlpTrace>) -> Projection {
        let offset = match (&self.offset, trace) {
            (Some(net), Some(t)) => net.forward_with_base(q, base, weights, t),
            (Some(net), None) => {
                let mut t = net.mlp.new_trace();
                net.forward_with_base(q, base, weights, &mut t)
            }
            (None, _) => [0.0; 2],
        };
        let uv = if self.config.ablation.no_canonical_init {
            offset
        } else {
            let c = self.frame.canonical_projection(q);
            [c[0] + offset[0], c[1] + offset[1]]
        };
        Projection { uv, offset }
    }

    /// Color at canonical coordinate `uv`.
    #[inline]
    pub fn color_at(&self, uv: [f64; 2], trace: Option<&mut MlpTrace>) -> ColorLookup {
        match &self.color {
            ColorField::Image(img) => {
                let s = img.sample(uv);
                ColorLookup { rgb: s.rgb, sample: Some(s) }
            }
            ColorField::Implicit(m) => {
                let rgb = match trace {
                    Some(t) => m.forward(uv, t),
                    None => m.forward(uv, &mut m.mlp.new_trace()),
                };
                ColorLookup { rgb, sample: None }
            }
        }
    }
}

/// Color lookup result; `sample` is set for the explicit image.
#[derive(Clone, Copy, Debug)]
pub struct ColorLookup {
    pub rgb: [f64; 3],
    pub sample: Option<ColorSample>,
}

/// Per-worker MLP activation buffers.
#[derive(Clone, Debug)]
pub struct FieldScratch {
    pub offset: Option<MlpTrace>,
    pub density: Option<MlpTrace>,
    pub color: Option<MlpTrace>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{SynthSpec, SyntheticScene};

    fn manifest(kind: SceneKind) -> SceneManifest {
        let scene = SyntheticScene::build(&SynthSpec::new(3, kind, 4, 32)).unwrap();
        scene.manifest(std::path::Path::new("."))
    }

    fn small() -> ModelConfig {
        ModelConfig {
            hash: HashGridConfig { levels: 4, features: 2, log2_table_size: 10, base_resolution: 4, finest_resolution: 32 },
            offset_layers: 2,
            offset_width: 16,
            grid_resolution: Some([16, 16, 12]),
            image_height: 32,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn initial_projection_is_canonical() {
        for kind in [SceneKind::ForwardFacing, SceneKind::Panorama] {
            let cfg = small();
            let m = Model::new(&manifest(kind), &cfg, UpscalePlan { grid: 2, image: 1 }, cfg.anneal_schedule(1.0), 1).unwrap();
            let w = vec![1.0; 4];
            let q = Vec3::new(0.1, -0.2, 0.3);
            let d = Vec3::new(0.0, 0.6, -0.8);
            let p = m.project(&q, &d, &w, None);
            assert_eq!(p.uv, m.frame.canonical_projection(&q));
            assert_eq!(p.offset, [0.0, 0.0]);
        }
    }

    #[test]
    fn block_layout_follows_ablation() {
        let mut cfg = small();
        let m = Model::new(&manifest(SceneKind::ForwardFacing), &cfg, UpscalePlan::default(), cfg.anneal_schedule(1.0), 1).unwrap();
        assert_eq!(m.block_kinds(), vec![BlockKind::Density, BlockKind::Color, BlockKind::Offset, BlockKind::HashTables]);
        cfg.ablation = Ablation::setting(4).unwrap();
        let m = Model::new(&manifest(SceneKind::ForwardFacing), &cfg, UpscalePlan::default(), cfg.anneal_schedule(1.0), 1).unwrap();
        assert_eq!(m.block_kinds(), vec![BlockKind::Density, BlockKind::Color]);
        assert_eq!(m.lr_group(BlockKind::Density), LrGroup::Grid);
        cfg.ablation = Ablation::setting(1).unwrap();
        let m = Model::new(&manifest(SceneKind::ForwardFacing), &cfg, UpscalePlan::default(), cfg.anneal_schedule(1.0), 1).unwrap();
        assert_eq!(m.lr_group(BlockKind::Density), LrGroup::Net);
    }

    #[test]
    fn panorama_image_is_twice_as_wide() {
        let cfg = ModelConfig { image_height: 768, ..small() };
        let m = Model::new(&manifest(SceneKind::Panorama), &cfg, UpscalePlan::default(), cfg.anneal_schedule(1.0), 1).unwrap();
        let img = m.image().unwrap();
        assert_eq!((img.height, img.width), (768, 1536));
    }
}
