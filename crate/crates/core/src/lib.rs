//! Embedding messages that survive a known down-scaling channel.
//!
//! The stego image `X'` is built so that `f(X')`, the image after a
//! prescribed resize `f`, carries the message in the least significant bits
//! of a sparse lattice of output pixels.

pub mod analysis;
pub mod codec;
pub mod cost;
pub mod error;
pub mod pipeline;
pub mod pixelgrid;
pub mod resampler;
pub mod solver;

pub use analysis::{build_embed_plan, design_params, EmbedPlan, EmbedSite, Lattice, PlanOptions};
pub use error::{Error, Result};
pub use pixelgrid::{DeltaMap, PixelGrid};
pub use resampler::{ChannelSpec, Family, Resampler, ScaleFactor};
