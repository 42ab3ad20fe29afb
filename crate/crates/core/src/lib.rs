//! Scene reconstruction with a density grid, an editable canonical image and
//! a learned projection field, plus tools to edit the canonical image and
//! re-render without further optimization.

pub mod cli;
pub mod edit;
pub mod encoding;
pub mod error;
pub mod fields;
pub mod math;
pub mod projection;
pub mod render;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
