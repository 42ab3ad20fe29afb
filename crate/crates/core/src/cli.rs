//! Command-line front end: one binary with a subcommand per pipeline stage.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::edit::{export_canonical, extract, import_canonical_to, load_density_mask, stylize_apply};
use crate::error::{Error, Result};
use crate::fields::load_checkpoint;
use crate::render::{render_view, save_depth, MaskMode};
use crate::scene::manifest::load_camera_path;
use crate::scene::{generate_synthetic_scene, load_image, load_manifest, save_image, CameraModel, PlaneLayout, SceneKind, SynthSpec};
use crate::train::{apply_override, eval_psnr, load_config_value, RunConfig, Trainer};

pub const OUT_ENV: &str = "AGAP_OUT";

#[derive(Debug, Parser)]
#[command(name = "canonfield", version, about = "Scene reconstruction with an editable canonical image")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted `key=value` override applied after the config file.
    #[arg(long = "override", global = true, value_name = "K=V")]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker-independent, bit-reproducible execution.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory (default: `$AGAP_OUT/<subcommand>` or `out/<subcommand>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene with analytic ground truth.
    Synth(SynthArgs),
    /// Train a model on a scene manifest.
    Train(TrainArgs),
    /// Render views from a checkpoint.
    Render(ViewArgs),
    /// PSNR between two images, or of a checkpoint on the held-out views.
    Eval(EvalArgs),
    /// Write the canonical image and its metadata sidecar.
    ExportCanonical(CheckpointArg),
    /// Load an edited canonical image into a checkpoint.
    ImportCanonical(ImportArgs),
    /// Render with the density masked by a canonical-space mask.
    Extract(ExtractArgs),
    /// Import an edited canonical image and render a camera path.
    StylizeApply(StylizeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Synth(_) => "synth",
            Self::Train(_) => "train",
            Self::Render(_) => "render",
            Self::Eval(_) => "eval",
            Self::ExportCanonical(_) => "export-canonical",
            Self::ImportCanonical(_) => "import-canonical",
            Self::Extract(_) => "extract",
            Self::StylizeApply(_) => "stylize-apply",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    ForwardFacing,
    Panorama,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LayoutArg {
    Constant,
    Single,
    Two,
    Three,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "forward-facing")]
    pub kind: KindArg,
    /// Total views, training plus held-out.
    #[arg(long, default_value_t = 14)]
    pub views: usize,
    #[arg(long, default_value_t = 2)]
    pub eval_views: usize,
    /// Image height in pixels.
    #[arg(long, default_value_t = 96)]
    pub resolution: usize,
    #[arg(long, value_enum, default_value = "three")]
    pub layout: LayoutArg,
    /// Half extent of the camera grid along x.
    #[arg(long, default_value_t = 0.25)]
    pub baseline: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Scene manifest; overrides `scene` in the config.
    #[arg(long)]
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckpointArg {
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct ViewArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Camera path file (JSON list of camera records).
    #[arg(long, conflicts_with = "scene")]
    pub cameras: Option<PathBuf>,
    /// Scene manifest whose held-out views are rendered.
    #[arg(long)]
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, requires = "gt", conflicts_with = "checkpoint")]
    pub pred: Option<PathBuf>,
    #[arg(long, requires = "pred")]
    pub gt: Option<PathBuf>,
    #[arg(long, requires = "scene")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Edited canonical PNG.
    #[arg(long)]
    pub image: PathBuf,
    /// Metadata sidecar (default: next to the image).
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Foreground,
    Background,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub views: ViewArgs,
    /// Binary mask PNG aligned to the canonical image.
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long, value_enum, default_value = "foreground")]
    pub mode: ModeArg,
}

#[derive(Debug, Args)]
pub struct StylizeArgs {
    #[command(flatten)]
    pub views: ViewArgs,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

/// Parses `argv` (including the program name) and runs it; returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let config = match resolve_config(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match execute(&cli, config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Config file, then overrides, then explicit flags.
pub fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut value = match &common.config {
        Some(p) => load_config_value(p)?,
        None => Value::Object(Default::default()),
    };
    for o in &common.overrides {
        apply_override(&mut value, o)?;
    }
    let mut run = RunConfig::from_value(value)?;
    if let Some(s) = common.seed {
        run.seed = s;
    }
    if common.deterministic {
        run.deterministic = true;
    }
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(Error::InvalidConfig("--workers must be at least 1".into()));
        }
        run.workers = w;
    }
    Ok(run)
}

fn out_dir(common: &Common, command: &str) -> PathBuf {
    if let Some(p) = &common.out {
        return p.clone();
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(command),
        _ => PathBuf::from("out").join(command),
    }
}

fn echo_config(run: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(&run.to_value())?)?;
    Ok(())
}

fn view_cameras(args: &ViewArgs) -> Result<Vec<CameraModel>> {
    match (&args.cameras, &args.scene) {
        (Some(p), _) => load_camera_path(p),
        (None, Some(s)) => {
            let m = load_manifest(s)?;
            Ok(m.eval_ids.iter().map(|&i| m.views[i].camera.clone()).collect())
        }
        (None, None) => Err(Error::InvalidConfig("give --cameras or --scene".into())),
    }
}

fn execute(cli: &Cli, mut run: RunConfig) -> Result<()> {
    let out = out_dir(&cli.common, cli.command.name());
    match &cli.command {
        Command::Synth(a) => {
            let kind = match a.kind {
                KindArg::ForwardFacing => SceneKind::ForwardFacing,
                KindArg::Panorama => SceneKind::Panorama,
            };
            let mut spec = SynthSpec::new(run.seed, kind, a.views, a.resolution);
            spec.n_eval = a.eval_views;
            spec.baseline = a.baseline;
            spec.layout = match a.layout {
                LayoutArg::Constant => PlaneLayout::Constant,
                LayoutArg::Single => PlaneLayout::Single,
                LayoutArg::Two => PlaneLayout::Two,
                LayoutArg::Three => PlaneLayout::Three,
            };
            generate_synthetic_scene(&spec, &out)?;
            std::fs::write(out.join("synth.json"), serde_json::to_string_pretty(&spec)?)?;
            run.scene = Some(out.join("manifest.json"));
            echo_config(&run, &out)?;
            println!("{}", out.join("manifest.json").display());
        }
        Command::Train(a) => {
            if let Some(s) = &a.scene {
                run.scene = Some(s.clone());
            }
            let scene = run.scene.clone().ok_or_else(|| Error::InvalidConfig("no scene given (--scene or `scene` in the config)".into()))?;
            let manifest = load_manifest(&scene)?;
            echo_config(&run, &out)?;
            let mut trainer = Trainer::new(&manifest, &run)?;
            trainer.run_to_end()?;
            let hash = trainer.save(&out)?;
            if let Some(p) = trainer.metrics.last().and_then(|m| m.psnr_eval) {
                println!("held-out PSNR {p:.2} dB");
            }
            println!("checkpoint {} {hash}", out.join("checkpoint.bin").display());
        }
        Command::Render(a) => {
            let ckpt = load_checkpoint(&a.checkpoint)?;
            let cams = view_cameras(a)?;
            echo_config(&run, &out)?;
            let pool = ckpt_pool(&run)?;
            for (i, cam) in cams.iter().enumerate() {
                let r = pool.install(|| render_view(&ckpt.model, cam, &run.render, ckpt.step))?;
                save_image(&r.image, &out.join(format!("view_{i:03}.png")))?;
                save_depth(&r.depth, cam.width, cam.height, &out.join(format!("depth_{i:03}.png")))?;
            }
        }
        Command::Eval(a) => {
            echo_config(&run, &out)?;
            let psnr = match (&a.pred, &a.gt, &a.checkpoint, &a.scene) {
                (Some(p), Some(g), _, _) => eval_psnr(&load_image(p)?, &load_image(g)?)?,
                (_, _, Some(c), Some(s)) => {
                    let ckpt = load_checkpoint(c)?;
                    let m = load_manifest(s)?;
                    if m.eval_ids.is_empty() {
                        return Err(Error::InvalidConfig("the scene has no held-out views".into()));
                    }
                    let pool = ckpt_pool(&run)?;
                    let mut sum = 0.0;
                    for &i in &m.eval_ids {
                        let r = pool.install(|| render_view(&ckpt.model, &m.views[i].camera, &run.render, ckpt.step))?;
                        sum += eval_psnr(&r.image, &load_image(&m.image_path(i))?)?;
                    }
                    sum / m.eval_ids.len() as f64
                }
                _ => return Err(Error::InvalidConfig("give --pred/--gt or --checkpoint/--scene".into())),
            };
            println!("{psnr:.2} dB");
        }
        Command::ExportCanonical(a) => {
            let ckpt = load_checkpoint(&a.checkpoint)?;
            echo_config(&run, &out)?;
            let b = export_canonical(&ckpt, &out, "scene")?;
            println!("{}", b.image.display());
        }
        Command::ImportCanonical(a) => {
            let mut ckpt = load_checkpoint(&a.checkpoint)?;
            echo_config(&run, &out)?;
            let path = out.join("checkpoint.bin");
            let hash = import_canonical_to(&mut ckpt, &a.image, a.meta.as_deref(), &path)?;
            println!("checkpoint {} {hash}", path.display());
        }
        Command::Extract(a) => {
            let ckpt = load_checkpoint(&a.views.checkpoint)?;
            let cams = view_cameras(&a.views)?;
            let mode = match a.mode {
                ModeArg::Foreground => MaskMode::Foreground,
                ModeArg::Background => MaskMode::Background,
            };
            let mask = load_density_mask(&ckpt.model, &a.mask, mode)?;
            echo_config(&run, &out)?;
            let renders = ckpt_pool(&run)?.install(|| extract(&ckpt.model, &mask, &cams, &run.render, ckpt.step))?;
            for (i, r) in renders.iter().enumerate() {
                save_image(&r.image, &out.join(format!("view_{i:03}.png")))?;
                // Opacity as a grayscale alpha map for compositing elsewhere.
                let alpha = r.transmittance.iter().map(|t| 1.0 - t).collect::<Vec<_>>();
                crate::scene::image::save_mask(r.image.width, r.image.height, &alpha, &out.join(format!("alpha_{i:03}.png")))?;
            }
        }
        Command::StylizeApply(a) => {
            let mut ckpt = load_checkpoint(&a.views.checkpoint)?;
            let cams = view_cameras(&a.views)?;
            echo_config(&run, &out)?;
            ckpt_pool(&run)?.install(|| stylize_apply(&mut ckpt, &a.image, a.meta.as_deref(), &cams, &run.render, Some(&out)))?;
        }
    }
    std::io::stdout().flush()?;
    Ok(())
}

fn ckpt_pool(run: &RunConfig) -> Result<rayon::ThreadPool> {
    crate::train::build_pool(run.workers)
}
