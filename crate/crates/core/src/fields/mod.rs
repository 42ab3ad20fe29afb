//! Learnable parameter blocks: density grid, canonical image, projection
//! offset network, and the model that ties them together.

pub mod canonical;
pub mod checkpoint;
pub mod density;
pub mod implicit;
pub mod mlp;
pub mod model;
pub mod offset;

pub use canonical::{Bilinear, CanonicalImage, ColorSample};
pub use checkpoint::{content_hash, load_checkpoint, save_checkpoint, Checkpoint};
pub use density::DensityGrid;
pub use mlp::{Mlp, MlpTrace};
pub use model::{Ablation, BlockKind, Gradients, LrGroup, Model, ModelConfig, SceneFrame, UpscalePlan};
pub use offset::{EncoderKind, OffsetNetwork, PositionEncoder};
