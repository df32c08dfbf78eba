use serde::{Deserialize, Serialize};

use super::ir::{Layer, ModelIR, Shape};
use super::CompressError;

/// A replaceable span `start_index..=end_index` of a [`ModelIR`].
///
/// The span is a maximal run of convolutions, plus the shortcut addition that
/// closes it when that addition starts at the run's input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetBlock {
    pub start_index: usize,
    pub end_index: usize,
    pub in_shape: Shape,
    pub out_shape: Shape,
    pub stride_class: usize,
    pub skip_eligible: bool,
}

impl TargetBlock {
    /// Builds the block for a span, or `None` when the spatial relation is
    /// neither "equal" nor "halved" (rounding up).
    pub fn from_span(
        start_index: usize,
        end_index: usize,
        in_shape: Shape,
        out_shape: Shape,
    ) -> Option<Self> {
        let stride_class = stride_class(in_shape, out_shape)?;
        Some(Self {
            start_index,
            end_index,
            in_shape,
            out_shape,
            stride_class,
            skip_eligible: in_shape.c == out_shape.c,
        })
    }

    pub fn len(&self) -> usize {
        self.end_index - self.start_index + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// 1 when the spatial size is kept, 2 when it is halved (`ceil(n / 2)`).
pub fn stride_class(input: Shape, output: Shape) -> Option<usize> {
    if input.spatial() == output.spatial() {
        Some(1)
    } else if output.h == input.h.div_ceil(2) && output.w == input.w.div_ceil(2) {
        Some(2)
    } else {
        None
    }
}

/// True when some addition outside `start..=end` reads a tensor produced strictly
/// inside the span.
pub(crate) fn has_inner_reference(ir: &ModelIR, start: usize, end: usize) -> bool {
    ir.layers.iter().enumerate().any(|(i, layer)| match *layer {
        Layer::SkipAdd { from, .. } => !(start..=end).contains(&i) && from > start && from <= end,
        _ => false,
    })
}

/// Target blocks at or after `shared_prefix_len`, last block first.
///
/// Runs whose spatial relation fails, or whose interior feeds a shortcut
/// elsewhere, are skipped.
pub fn find_target_blocks(
    ir: &ModelIR,
    shared_prefix_len: usize,
) -> Result<Vec<TargetBlock>, CompressError> {
    let tensors = ir.tensor_shapes()?;
    let mut blocks = Vec::new();
    let mut end = ir.len();
    while end > 0 {
        let last = end - 1;
        if !ir.layers[last].is_conv() {
            end -= 1;
            continue;
        }
        let mut start = last;
        while start > 0 && ir.layers[start - 1].is_conv() {
            start -= 1;
        }
        end = start;
        if start < shared_prefix_len {
            break;
        }
        let closes =
            matches!(ir.layers.get(last + 1), Some(Layer::SkipAdd { from, .. }) if *from == start);
        let span_end = if closes { last + 1 } else { last };
        if has_inner_reference(ir, start, span_end) {
            continue;
        }
        if let Some(b) =
            TargetBlock::from_span(start, span_end, tensors[start], tensors[span_end + 1])
        {
            blocks.push(b);
        }
    }
    Ok(blocks)
}
