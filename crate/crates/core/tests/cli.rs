use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use canonfield::fields::load_checkpoint;
use canonfield::scene::{load_image, save_image, save_mask, ImageBuffer};

const TINY: &[&str] = &[
    "--override",
    "train.steps=12",
    "--override",
    "train.rays_per_step=32",
    "--override",
    "train.eval_every=0",
    "--override",
    "model.grid_resolution=[12,12,12]",
    "--override",
    "model.image_height=16",
    "--override",
    "model.offset_layers=1",
    "--override",
    "model.offset_width=8",
    "--override",
    "model.hash.levels=2",
    "--override",
    "model.hash.log2_table_size=8",
    "--override",
    "render.samples=8",
];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_canonfield"));
    c.env_remove("AGAP_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path) -> PathBuf {
    let out = dir.join("scene");
    let o = run(&["synth", "--views", "4", "--eval-views", "1", "--resolution", "32", "--seed", "3", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("manifest.json")
}

fn train(dir: &Path, manifest: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["train", "--scene", p(manifest), "--out", p(&out)];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn unknown_subcommand_exits_1() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn help_exits_0() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn zero_workers_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["eval", "--workers", "0", "--pred", "a.png", "--gt", "b.png", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_override_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["eval", "--override", "train.bogus=1", "--pred", "a.png", "--gt", "b.png", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["eval", "--override", "novalue", "--pred", "a.png", "--gt", "b.png", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_identical_images_prints_cap() {
    let dir = tempfile::tempdir().unwrap();
    let img = ImageBuffer::from_fn(8, 6, |x, y| [x as f64 / 8.0, y as f64 / 6.0, 0.5]);
    let a = dir.path().join("a.png");
    save_image(&img, &a).unwrap();
    let o = run(&["eval", "--pred", p(&a), "--gt", p(&a), "--out", p(&dir.path().join("e"))]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "99.00 dB");
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["eval", "--pred", "nope.png", "--gt", "nope.png", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_defaults_to_env_root_per_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let img = ImageBuffer::new(4, 4);
    let a = dir.path().join("a.png");
    save_image(&img, &a).unwrap();
    let o = bin().env("AGAP_OUT", dir.path().join("root")).args(["eval", "--pred", p(&a), "--gt", p(&a)]).output().unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("root/eval/config.json").exists());
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let first = train(dir.path(), &manifest, "first", &["--seed", "5"]);
    let echo = first.join("config.json");
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&echo).unwrap()).unwrap();
    assert_eq!(value["train"]["steps"], 12);
    assert_eq!(value["seed"], 5);

    let second = dir.path().join("second");
    let o = run(&["train", "--config", p(&echo), "--out", p(&second)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = std::fs::read(first.join("checkpoint.bin")).unwrap();
    let b = std::fs::read(second.join("checkpoint.bin")).unwrap();
    assert_eq!(a, b);
    assert!(first.join("metrics.csv").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let first = train(dir.path(), &manifest, "first", &["--seed", "5"]);
    let echo = first.join("config.json");
    let out = dir.path().join("reseeded");
    let o = run(&["train", "--config", p(&echo), "--seed", "6", "--override", "train.steps=3", "--out", p(&out)]);
    assert!(o.status.success());
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(value["seed"], 6);
    assert_eq!(value["train"]["steps"], 3);
    assert_eq!(load_checkpoint(&out.join("checkpoint.bin")).unwrap().step, 3);
}

#[test]
fn edit_round_trip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let trained = train(dir.path(), &manifest, "trained", &[]);
    let ckpt = trained.join("checkpoint.bin");

    let export = dir.path().join("export");
    let o = run(&["export-canonical", "--checkpoint", p(&ckpt), "--out", p(&export)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let png = export.join("scene.canonical.png");
    let meta = export.join("scene.meta.json");
    assert!(png.exists() && meta.exists());

    let mut img = load_image(&png).unwrap();
    img.set(0, 0, [1.0, 0.0, 0.0]);
    let edited = export.join("edited.png");
    save_image(&img, &edited).unwrap();
    let imported = dir.path().join("imported");
    let o = run(&["import-canonical", "--checkpoint", p(&ckpt), "--image", p(&edited), "--meta", p(&meta), "--out", p(&imported)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let new_ckpt = imported.join("checkpoint.bin");
    assert!(new_ckpt.exists());

    // The sidecar names the original checkpoint, so it is stale for the new one.
    let o = run(&["import-canonical", "--checkpoint", p(&new_ckpt), "--image", p(&edited), "--meta", p(&meta), "--out", p(&dir.path().join("stale"))]);
    assert_eq!(o.status.code(), Some(2));

    let styl = dir.path().join("styl");
    let o = run(&["stylize-apply", "--checkpoint", p(&ckpt), "--scene", p(&manifest), "--image", p(&edited), "--meta", p(&meta), "--out", p(&styl)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(styl.join("frame_000.png").exists());

    let (w, h) = (img.width, img.height);
    let mask_path = dir.path().join("mask.png");
    let values: Vec<f64> = (0..w * h).map(|i| if i % w < w / 2 { 1.0 } else { 0.0 }).collect();
    save_mask(w, h, &values, &mask_path).unwrap();
    let ext = dir.path().join("extract");
    let o = run(&["extract", "--checkpoint", p(&ckpt), "--scene", p(&manifest), "--mask", p(&mask_path), "--mode", "background", "--out", p(&ext)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ext.join("view_000.png").exists() && ext.join("alpha_000.png").exists());

    let wrong = dir.path().join("wrong.png");
    save_mask(w + 1, h, &vec![1.0; (w + 1) * h], &wrong).unwrap();
    let o = run(&["extract", "--checkpoint", p(&ckpt), "--scene", p(&manifest), "--mask", p(&wrong), "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn render_and_eval_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let trained = train(dir.path(), &manifest, "trained", &[]);
    let ckpt = trained.join("checkpoint.bin");
    let out = dir.path().join("render");
    let o = run(&["render", "--checkpoint", p(&ckpt), "--scene", p(&manifest), "--override", "render.samples=8", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("view_000.png").exists() && out.join("depth_000.png").exists());
    let o = run(&["eval", "--checkpoint", p(&ckpt), "--scene", p(&manifest), "--override", "render.samples=8", "--out", p(&dir.path().join("e"))]);
    assert!(o.status.success());
    let text = stdout(&o);
    let db: f64 = text.trim().trim_end_matches(" dB").parse().unwrap();
    assert!(db.is_finite() && db > 0.0, "{text}");
}
