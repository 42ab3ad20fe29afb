//! Posed multi-view inputs: cameras, images, manifests, procedural scenes.

pub mod camera;
pub mod canonical;
pub mod image;
pub mod manifest;
pub mod synth;

pub use camera::{CameraKind, CameraModel};
pub use canonical::compute_pseudo_canonical_camera;
pub use image::{load_image, load_mask, save_image, save_mask, ImageBuffer};
pub use manifest::{load_manifest, save_manifest, SceneKind, SceneManifest, View};
pub use synth::{generate_synthetic_scene, PlaneLayout, SynthSpec, SyntheticScene};
