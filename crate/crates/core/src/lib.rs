//! Event-driven saliency-based selective attention for DVS/DAVIS
//! address-event streams.
//!
//! Events feed a per-pixel saliency map kept in Q12.8 fixed point with lazy
//! exponential decay. The most salient pixel is tracked incrementally, and
//! inhibition of return moves attention between regions. Only events inside
//! the current focus-of-attention window leave the [`pipeline`].

pub mod events;
pub mod fixedpoint;
pub mod oracle;
pub mod pipeline;
pub mod render;
pub mod saliency;
pub mod topdown;

pub use events::{Event, Pixel, Polarity, Resolution};
pub use fixedpoint::{DecayFactor, Fixed, PwlTable};
pub use pipeline::{run_pipeline, Pipeline, PipelineOutput, PipelineStats};
pub use saliency::{AttentionConfig, FoaSize, FocusSample, SaliencyState};
pub use topdown::{BiasMode, RegionOfInterest, TopDownConfig};
