use canonfield::edit::density_mask;
use canonfield::fields::{load_checkpoint, save_checkpoint, BlockKind, Model, ModelConfig, UpscalePlan};
use canonfield::render::{all_rays, render_rays, render_view, render_view_masked, weights_into, MaskMode, RenderConfig};
use canonfield::scene::{generate_synthetic_scene, SceneKind, SceneManifest, SynthSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(kind: SceneKind, seed: u64) -> (tempfile::TempDir, SceneManifest, Model) {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec::new(seed, kind, 3, 32);
    let (manifest, _) = generate_synthetic_scene(&spec, dir.path()).unwrap();
    let mut cfg = ModelConfig::default();
    cfg.grid_resolution = Some([10, 10, 10]);
    cfg.image_height = 12;
    cfg.offset_layers = 1;
    cfg.offset_width = 8;
    cfg.hash.levels = 2;
    cfg.hash.log2_table_size = 8;
    let mut model = Model::new(&manifest, &cfg, UpscalePlan::default(), cfg.anneal_schedule(1.0), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in model.block_mut(BlockKind::Density) {
        *v = rng.gen_range(-3.0..9.0);
    }
    for v in model.block_mut(BlockKind::Color) {
        *v = rng.gen_range(-2.0..2.0);
    }
    for v in model.block_mut(BlockKind::Offset) {
        *v = rng.gen_range(-0.05..0.05);
    }
    (dir, manifest, model)
}

proptest! {
    #[test]
    fn weights_partition_unity(
        sigma in prop::collection::vec(0.0f64..50.0, 1..64),
        delta in prop::collection::vec(1e-4f64..1.0, 64),
    ) {
        let n = sigma.len();
        let (mut w, mut t) = (Vec::new(), Vec::new());
        let (t_end, active) = weights_into(&sigma, &delta[..n], 0.0, &mut w, &mut t);
        prop_assert_eq!(active, n);
        prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!(t.windows(2).all(|p| p[1] <= p[0]));
        prop_assert!((w.iter().sum::<f64>() + t_end - 1.0).abs() < 1e-12);
    }

    #[test]
    fn early_exit_changes_color_by_at_most_the_threshold(
        sigma in prop::collection::vec(0.0f64..50.0, 2..64),
        delta in prop::collection::vec(1e-4f64..1.0, 64),
    ) {
        let n = sigma.len();
        let (mut we, mut te, mut wx, mut tx) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        weights_into(&sigma, &delta[..n], 1e-6, &mut we, &mut te);
        weights_into(&sigma, &delta[..n], 0.0, &mut wx, &mut tx);
        let dropped: f64 = wx.iter().zip(&we).map(|(a, b)| a - b).sum();
        prop_assert!((-1e-15..=1e-6).contains(&dropped));
    }
}

#[test]
fn empty_density_renders_black_at_far() {
    for kind in [SceneKind::ForwardFacing, SceneKind::Panorama] {
        let (_d, manifest, mut model) = random_model(kind, 1);
        for v in model.block_mut(BlockKind::Density) {
            *v = -1e3;
        }
        let cam = &manifest.views[0].camera;
        let r = render_view(&model, cam, &RenderConfig::exact(16), 0).unwrap();
        assert!(r.image.data.iter().all(|&v| v < 1e-12));
        assert!(r.transmittance.iter().all(|&t| t > 1.0 - 1e-12));
        assert!(r.depth.iter().all(|&d| (d - model.frame.far).abs() < 1e-6 * model.frame.far));
    }
}

#[test]
fn tiling_does_not_change_renders() {
    let (_d, manifest, model) = random_model(SceneKind::ForwardFacing, 2);
    let cam = &manifest.views[1].camera;
    let batch = all_rays(cam);
    let mut small = RenderConfig::default();
    small.samples = 24;
    small.tile_size = 7;
    let mut big = small.clone();
    big.tile_size = 100_000;
    let a = render_rays(&model, &batch, &small, 0).unwrap();
    let b = render_rays(&model, &batch, &big, 0).unwrap();
    assert_eq!(a.rgb, b.rgb);
    assert_eq!(a.depth, b.depth);
}

#[test]
fn trivial_masks_match_the_plain_render() {
    let (_d, manifest, model) = random_model(SceneKind::ForwardFacing, 3);
    let image = model.image().unwrap();
    let (w, h) = (image.width, image.height);
    let cam = &manifest.views[0].camera;
    let rc = RenderConfig::exact(16);
    let plain = render_view(&model, cam, &rc, 0).unwrap();
    let keep_all = density_mask(&model, w, h, &vec![1.0; w * h], MaskMode::Foreground).unwrap();
    let fg = render_view_masked(&model, cam, &rc, 0, Some(&keep_all)).unwrap();
    assert_eq!(plain.image.data, fg.image.data);
    let drop_none = density_mask(&model, w, h, &vec![0.0; w * h], MaskMode::Background).unwrap();
    let bg = render_view_masked(&model, cam, &rc, 0, Some(&drop_none)).unwrap();
    assert_eq!(plain.image.data, bg.image.data);
    let empty = render_view_masked(&model, cam, &rc, 0, Some(&keep_all_as(&model, w, h, MaskMode::Background))).unwrap();
    assert!(empty.image.data.iter().all(|&v| v == 0.0));
}

fn keep_all_as(model: &Model, w: usize, h: usize, mode: MaskMode) -> canonfield::render::DensityMask {
    density_mask(model, w, h, &vec![1.0; w * h], mode).unwrap()
}

#[test]
fn checkpoint_round_trip_renders_identically() {
    for kind in [SceneKind::ForwardFacing, SceneKind::Panorama] {
        let (dir, manifest, model) = random_model(kind, 4);
        let path = dir.path().join("m.bin");
        save_checkpoint(&path, &model, 7, &serde_json::json!({"note": "test"})).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.step, 7);
        assert_eq!(back.model, model);
        let cam = &manifest.views[0].camera;
        let rc = RenderConfig::exact(12);
        let a = render_view(&model, cam, &rc, 7).unwrap();
        let b = render_view(&back.model, cam, &rc, 7).unwrap();
        assert_eq!(a.image.data, b.image.data);
    }
}
