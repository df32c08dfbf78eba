//! CNN compression planning: a layer-list model description, shape inference,
//! multiply-accumulate accounting, target-block discovery and the bottleneck /
//! compression-block rewrites that make up the compression ladder.

mod blocks;
mod ir;
mod plan;
mod rewrite;

pub use blocks::{find_target_blocks, stride_class, TargetBlock};
pub use ir::{resnet18, Conv, Layer, ModelIR, PoolKind, Projection, Shape, RESNET18_STEM_LEN};
pub use plan::{
    apply_substitutions, plan, prefix_sweep, select_substitutions, CompressionPlan, Level,
    PrefixSweepRow, ReplacementKind, Substitution, WidthPolicy,
};
pub use rewrite::{merge_bottleneck_compression, substitute_bottleneck};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompressError {
    #[error("shape mismatch at layer {layer}: {reason}")]
    ShapeMismatch { layer: usize, reason: String },
    #[error(
        "blocks are not consecutive: first ends at {first_end}, second starts at {second_start}"
    )]
    NotConsecutive {
        first_end: usize,
        second_start: usize,
    },
    #[error("invalid block: {0}")]
    InvalidBlock(String),
    #[error("unknown ladder level {0:?}")]
    UnknownLevel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
