//! Ray generation, sampling and differentiable volume rendering.

pub mod composite;
pub mod pipeline;
pub mod rays;
pub mod sampling;
pub mod view;

pub use composite::{composite, weights_into, RayColor, EARLY_EXIT};
pub use pipeline::{render_rays, DensityMask, MaskMode, PassContext, RayWork, RenderConfig, RenderOutput};
pub use rays::{all_rays, generate_rays, image_rays, RayBatch};
pub use sampling::{sample_points, RaySamples, SampleSet, SamplerSpec};
pub use view::{render_view, render_view_masked, save_depth, ViewRender};
