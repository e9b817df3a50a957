//! Token-sequence math for multi-image transformer inputs.
//!
//! This crate models how a multi-image prompt occupies a transformer's
//! input sequence (text prefix, one vision-token span per image, text
//! suffix) and provides the operations that act on that layout:
//!
//! - block-diagonal attention masks that restrict vision tokens to their
//!   own image on selected layers, while text attention stays causal,
//! - a per-layer FLOPs model for full vs. masked attention,
//! - 1-D average pooling over token sequences,
//! - aggregation of attention mass into intra-image vs. inter-image
//!   fractions per layer.
//!
//! Everything here is pure math over immutable inputs; there is no model
//! forward pass.

mod error;
mod flops;
mod layout;
mod mask;
mod pool;
mod stats;

pub use error::AttentionError;
pub use flops::{
    flops_per_layer, flops_total, full_pair_count, masked_pair_count, FlopsBreakdown,
    FlopsLayout, FlopsParams,
};
pub use layout::{ImageSpan, TokenLayout};
pub use mask::{build_mask, AttentionMaskSpec, MaskMatrix, VisionPrefixPolicy};
pub use pool::pool_tokens_1d;
pub use stats::{inter_intra_stats, LayerAttentionStats, LayerStat};

/// Layer indices masked by default: the deeper half of a 24-layer model.
pub const DEFAULT_MASKED_LAYERS: std::ops::Range<usize> = 12..24;

/// Default total layer count the masking scheme was tuned on.
pub const DEFAULT_TOTAL_LAYERS: usize = 24;
