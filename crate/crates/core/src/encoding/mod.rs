//! Input encodings for the projection offset network.

pub mod anneal;
pub mod hash;
pub mod positional;

pub use anneal::AnnealSchedule;
pub use hash::{HashGrid, HashGridConfig};
pub use positional::{encode_direction, positional_encode, positional_encode_into, PositionalEncoderConfig, DIRECTION_BANDS};
