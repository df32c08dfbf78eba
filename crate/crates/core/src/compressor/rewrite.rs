use super::blocks::{has_inner_reference, TargetBlock};
use super::ir::{Layer, ModelIR, Projection};
use super::CompressError;

/// Replaces `start..=end` by `replacement`, shifting later shortcut sources.
fn splice(ir: &ModelIR, start: usize, end: usize, replacement: Vec<Layer>) -> ModelIR {
    let removed = end - start + 1;
    let added = replacement.len();
    let shift = |from: usize| {
        if from > end {
            from + added - removed
        } else {
            from
        }
    };
    let mut layers = Vec::with_capacity(ir.len() + added - removed);
    layers.extend_from_slice(&ir.layers[..start]);
    layers.extend(replacement);
    layers.extend(ir.layers[end + 1..].iter().map(|l| match *l {
        Layer::SkipAdd { from, proj } => Layer::SkipAdd {
            from: shift(from),
            proj,
        },
        other => other,
    }));
    ModelIR::new(ir.input_shape, layers)
}

/// Confirms that `block` still describes the span it names in `ir`.
fn check_block(ir: &ModelIR, block: &TargetBlock) -> Result<(), CompressError> {
    if block.start_index > block.end_index || block.end_index >= ir.len() {
        return Err(CompressError::InvalidBlock(format!(
            "span {}..={} outside {} layers",
            block.start_index,
            block.end_index,
            ir.len()
        )));
    }
    let t = ir.tensor_shapes()?;
    if t[block.start_index] != block.in_shape || t[block.end_index + 1] != block.out_shape {
        return Err(CompressError::ShapeMismatch {
            layer: block.end_index,
            reason: format!(
                "block records {} -> {}, model has {} -> {}",
                block.in_shape,
                block.out_shape,
                t[block.start_index],
                t[block.end_index + 1]
            ),
        });
    }
    Ok(())
}

fn check_widths(
    channels: (usize, usize, usize),
    out_c: usize,
    layer: usize,
) -> Result<(), CompressError> {
    let (x, y, z) = channels;
    if x == 0 || y == 0 {
        return Err(CompressError::InvalidArgument(
            "channel widths must be positive".into(),
        ));
    }
    if z != out_c {
        return Err(CompressError::ShapeMismatch {
            layer,
            reason: format!("last width {z} differs from block output channels {out_c}"),
        });
    }
    Ok(())
}

/// Shortcut closing a replacement that starts at `from`, or nothing when the
/// channel counts differ.
fn closing_skip(from: usize, c_in: usize, c_out: usize, stride: usize) -> Option<Layer> {
    (c_in == c_out).then_some(Layer::SkipAdd {
        from,
        proj: (stride > 1).then_some(Projection { c_out, stride }),
    })
}

fn finish(ir: &ModelIR, result: ModelIR, layer: usize) -> Result<ModelIR, CompressError> {
    let before = ir.output_shape()?;
    let after = result.output_shape()?;
    if before != after {
        return Err(CompressError::ShapeMismatch {
            layer,
            reason: format!("rewrite changed the model output from {before} to {after}"),
        });
    }
    Ok(result)
}

/// Swaps `block` for `1×1(x) → 3×3(y, stride) → 1×1(z)`, adding a shortcut
/// from the block input when its channel count is unchanged.
pub fn substitute_bottleneck(
    ir: &ModelIR,
    block: &TargetBlock,
    channels: (usize, usize, usize),
) -> Result<ModelIR, CompressError> {
    check_block(ir, block)?;
    check_widths(channels, block.out_shape.c, block.end_index)?;
    let (x, y, z) = channels;
    let c1 = block.in_shape.c;
    let s = block.stride_class;
    let mut layers = vec![
        Layer::conv(1, c1, x, 1, 0),
        Layer::conv(3, x, y, s, 1),
        Layer::conv(1, y, z, 1, 0),
    ];
    layers.extend(closing_skip(block.start_index, c1, z, s));
    finish(
        ir,
        splice(ir, block.start_index, block.end_index, layers),
        block.start_index,
    )
}

/// Swaps two adjacent blocks for `3×3(x) → 1×1(y) → 3×3(z)`.
///
/// The combined stride is the product of both stride classes; the first 3×3
/// takes a factor of 2 and the second takes any factor left.
pub fn merge_bottleneck_compression(
    ir: &ModelIR,
    first: &TargetBlock,
    second: &TargetBlock,
    channels: (usize, usize, usize),
) -> Result<ModelIR, CompressError> {
    if first.end_index + 1 != second.start_index {
        return Err(CompressError::NotConsecutive {
            first_end: first.end_index,
            second_start: second.start_index,
        });
    }
    check_block(ir, first)?;
    check_block(ir, second)?;
    let (start, end) = (first.start_index, second.end_index);
    if has_inner_reference(ir, start, end) {
        return Err(CompressError::InvalidBlock(format!(
            "a shortcut outside {start}..={end} reads a tensor inside it"
        )));
    }
    check_widths(channels, second.out_shape.c, end)?;
    let (x, y, z) = channels;
    let c1 = first.in_shape.c;
    let stride = first.stride_class * second.stride_class;
    let (s_a, s_b) = if stride > 1 { (2, stride / 2) } else { (1, 1) };
    let mut layers = vec![
        Layer::conv(3, c1, x, s_a, 1),
        Layer::conv(1, x, y, 1, 0),
        Layer::conv(3, y, z, s_b, 1),
    ];
    layers.extend(closing_skip(start, c1, z, stride));
    finish(ir, splice(ir, start, end, layers), start)
}

#[cfg(test)]
mod tests {
    use super::super::blocks::find_target_blocks;
    use super::super::ir::{resnet18, Shape};
    use super::*;

    fn plain_block(c_in: usize, c_out: usize, stride: usize, size: usize) -> ModelIR {
        let mut layers = vec![
            Layer::conv(3, c_in, c_out, stride, 1),
            Layer::conv(3, c_out, c_out, 1, 1),
        ];
        if c_in == c_out && stride == 1 {
            layers.push(Layer::SkipAdd {
                from: 0,
                proj: None,
            });
        }
        ModelIR::new(Shape::new(c_in, size, size), layers)
    }

    #[test]
    fn bottleneck_with_skip() {
        let ir = plain_block(64, 64, 1, 32);
        let block = find_target_blocks(&ir, 0).unwrap()[0];
        let out = substitute_bottleneck(&ir, &block, (64, 16, 64)).unwrap();
        assert_eq!(
            out.layers,
            vec![
                Layer::conv(1, 64, 64, 1, 0),
                Layer::conv(3, 64, 16, 1, 1),
                Layer::conv(1, 16, 64, 1, 0),
                Layer::SkipAdd {
                    from: 0,
                    proj: None
                },
            ]
        );
        let hw = 32 * 32;
        assert_eq!(out.flops().unwrap(), (64 * 64 + 9 * 64 * 16 + 16 * 64) * hw);
    }

    #[test]
    fn stride_two_bottleneck_without_skip() {
        let ir = plain_block(64, 128, 2, 32);
        let block = find_target_blocks(&ir, 0).unwrap()[0];
        assert!(!block.skip_eligible);
        let out = substitute_bottleneck(&ir, &block, (128, 32, 128)).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out.layers[1], Layer::conv(3, 128, 32, 2, 1));
        assert_eq!(out.output_shape().unwrap(), Shape::new(128, 16, 16));
        assert!(matches!(
            substitute_bottleneck(&ir, &block, (128, 32, 64)),
            Err(CompressError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn later_shortcuts_are_reindexed() {
        let net = resnet18(10);
        let blocks = find_target_blocks(&net, 0).unwrap();
        let before = net.output_shape().unwrap();
        // the stem is one layer; the bottleneck adds two more
        let stem = *blocks.last().unwrap();
        let out = substitute_bottleneck(&net, &stem, (64, 16, 64)).unwrap();
        assert_eq!(out.len(), net.len() + 2);
        assert_eq!(out.output_shape().unwrap(), before);
        assert_eq!(
            out.layers[6],
            Layer::SkipAdd {
                from: 4,
                proj: None
            }
        );
    }

    #[test]
    fn merge_two_stride_one_blocks() {
        let mut layers = Vec::new();
        for b in 0..2 {
            layers.push(Layer::conv(3, 64, 64, 1, 1));
            layers.push(Layer::conv(3, 64, 64, 1, 1));
            layers.push(Layer::SkipAdd {
                from: 3 * b,
                proj: None,
            });
        }
        let ir = ModelIR::new(Shape::new(64, 16, 16), layers);
        let blocks = find_target_blocks(&ir, 0).unwrap();
        let (second, first) = (blocks[0], blocks[1]);
        let pair = substitute_bottleneck(&ir, &second, (64, 16, 64))
            .and_then(|m| substitute_bottleneck(&m, &first, (64, 16, 64)))
            .unwrap();
        let merged = merge_bottleneck_compression(&ir, &first, &second, (16, 16, 64)).unwrap();
        assert_eq!(merged.len(), 4);
        assert!(merged.flops().unwrap() < pair.flops().unwrap());
        assert!(matches!(
            merge_bottleneck_compression(&ir, &second, &first, (16, 16, 64)),
            Err(CompressError::NotConsecutive { .. })
        ));
    }

    #[test]
    fn merge_composes_strides() {
        let ir = ModelIR::new(
            Shape::new(32, 16, 16),
            vec![
                Layer::conv(3, 32, 32, 1, 1),
                Layer::conv(3, 32, 32, 1, 1),
                Layer::SkipAdd {
                    from: 0,
                    proj: None,
                },
                Layer::conv(3, 32, 64, 2, 1),
                Layer::conv(3, 64, 64, 1, 1),
            ],
        );
        let blocks = find_target_blocks(&ir, 0).unwrap();
        let merged =
            merge_bottleneck_compression(&ir, &blocks[1], &blocks[0], (16, 16, 64)).unwrap();
        assert_eq!(merged.output_shape().unwrap(), Shape::new(64, 8, 8));
        assert_eq!(merged.layers[0], Layer::conv(3, 32, 16, 2, 1));
        assert_eq!(merged.len(), 3);
    }
}
