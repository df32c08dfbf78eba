use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::blocks::{find_target_blocks, TargetBlock};
use super::ir::ModelIR;
use super::rewrite::{merge_bottleneck_compression, substitute_bottleneck};
use super::CompressError;

/// Rungs of the compression ladder, mildest first.
///
/// `Ln` swaps the last `ceil(n·B/4)` of the `B` target blocks for bottlenecks;
/// `Lnn` swaps the same blocks and then merges adjacent pairs into
/// compression blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Level {
    L0,
    L1,
    L2,
    L22,
    L3,
    L33,
    L4,
    L44,
}

impl Level {
    pub const LADDER: [Level; 8] = [
        Level::L0,
        Level::L1,
        Level::L2,
        Level::L22,
        Level::L3,
        Level::L33,
        Level::L4,
        Level::L44,
    ];

    /// Quarters of the target-block list that are replaced.
    pub fn quarters(self) -> usize {
        match self {
            Level::L0 => 0,
            Level::L1 => 1,
            Level::L2 | Level::L22 => 2,
            Level::L3 | Level::L33 => 3,
            Level::L4 | Level::L44 => 4,
        }
    }

    pub fn merges(self) -> bool {
        matches!(self, Level::L22 | Level::L33 | Level::L44)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.quarters();
        if self.merges() {
            write!(f, "L{q}{q}")
        } else {
            write!(f, "L{q}")
        }
    }
}

impl FromStr for Level {
    type Err = CompressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Level::LADDER
            .into_iter()
            .find(|l| l.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| CompressError::UnknownLevel(s.to_string()))
    }
}

impl TryFrom<String> for Level {
    type Error = CompressError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Level> for String {
    fn from(l: Level) -> Self {
        l.to_string()
    }
}

/// Channel widths for replacement blocks, driven by a reduction ratio `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthPolicy {
    pub ratio: f64,
}

impl WidthPolicy {
    pub fn new(ratio: f64) -> Result<Self, CompressError> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(CompressError::InvalidArgument(format!(
                "width ratio must be in (0, 1], got {ratio}"
            )));
        }
        Ok(Self { ratio })
    }

    fn narrow(&self, c: usize) -> usize {
        ((self.ratio * c as f64).round() as usize).max(1)
    }

    /// `(c, r·c, c)` for a block with `c` output channels.
    pub fn bottleneck(&self, c_out: usize) -> (usize, usize, usize) {
        (c_out, self.narrow(c_out), c_out)
    }

    /// `(r·c, r·c, c)` for a merged pair with `c` output channels.
    pub fn compression(&self, c_out: usize) -> (usize, usize, usize) {
        let n = self.narrow(c_out);
        (n, n, c_out)
    }
}

impl Default for WidthPolicy {
    fn default() -> Self {
        Self { ratio: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementKind {
    Bottleneck,
    Compression,
}

/// One rewrite: a bottleneck over one block or a compression block over two.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    pub kind: ReplacementKind,
    /// Blocks in model order, indexed against the input model.
    pub blocks: Vec<TargetBlock>,
    pub channels: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionPlan {
    pub level: Level,
    pub shared_prefix_len: usize,
    pub width_ratio: f64,
    pub target_blocks: usize,
    pub substitutions: Vec<Substitution>,
    pub flops_before: u64,
    pub flops_after: u64,
    /// `1 - after / before` over the whole model.
    pub reduction: f64,
    /// Multiply-accumulates after the shared prefix, before and after.
    pub tail_flops_before: u64,
    pub tail_flops_after: u64,
    pub result: ModelIR,
}

fn ratio_drop(before: u64, after: u64) -> f64 {
    if before == 0 {
        0.0
    } else {
        1.0 - after as f64 / before as f64
    }
}

impl CompressionPlan {
    pub fn tail_reduction(&self) -> f64 {
        ratio_drop(self.tail_flops_before, self.tail_flops_after)
    }
}

/// Chooses which blocks a level rewrites, without applying anything.
pub fn select_substitutions(
    blocks: &[TargetBlock],
    level: Level,
    widths: &WidthPolicy,
) -> Vec<Substitution> {
    let n = (level.quarters() * blocks.len()).div_ceil(4);
    let chosen = &blocks[..n];
    let mut out = Vec::new();
    let mut i = 0;
    while i < chosen.len() {
        let later = chosen[i];
        match chosen.get(i + 1) {
            Some(&earlier) if level.merges() && earlier.end_index + 1 == later.start_index => {
                let (x, y, z) = widths.compression(later.out_shape.c);
                out.push(Substitution {
                    kind: ReplacementKind::Compression,
                    blocks: vec![earlier, later],
                    channels: [x, y, z],
                });
                i += 2;
            }
            _ => {
                let (x, y, z) = widths.bottleneck(later.out_shape.c);
                out.push(Substitution {
                    kind: ReplacementKind::Bottleneck,
                    blocks: vec![later],
                    channels: [x, y, z],
                });
                i += 1;
            }
        }
    }
    out
}

/// Applies substitutions listed from the output backward.
pub fn apply_substitutions(ir: &ModelIR, subs: &[Substitution]) -> Result<ModelIR, CompressError> {
    let mut current = ir.clone();
    for s in subs {
        let [x, y, z] = s.channels;
        current = match (s.kind, s.blocks.as_slice()) {
            (ReplacementKind::Bottleneck, [b]) => substitute_bottleneck(&current, b, (x, y, z))?,
            (ReplacementKind::Compression, [a, b]) => {
                merge_bottleneck_compression(&current, a, b, (x, y, z))?
            }
            _ => {
                return Err(CompressError::InvalidArgument(format!(
                    "{:?} substitution with {} blocks",
                    s.kind,
                    s.blocks.len()
                )))
            }
        };
    }
    Ok(current)
}

/// Rewrites `ir` to the given ladder rung, leaving the first
/// `shared_prefix_len` layers untouched.
pub fn plan(
    ir: &ModelIR,
    level: Level,
    shared_prefix_len: usize,
    widths: &WidthPolicy,
) -> Result<CompressionPlan, CompressError> {
    WidthPolicy::new(widths.ratio)?;
    if shared_prefix_len >= ir.len() {
        return Err(CompressError::InvalidArgument(format!(
            "shared prefix {shared_prefix_len} must be shorter than the model ({} layers)",
            ir.len()
        )));
    }
    let blocks = find_target_blocks(ir, shared_prefix_len)?;
    let substitutions = select_substitutions(&blocks, level, widths);
    let result = apply_substitutions(ir, &substitutions)?;
    let flops_before = ir.flops()?;
    let flops_after = result.flops()?;
    Ok(CompressionPlan {
        level,
        shared_prefix_len,
        width_ratio: widths.ratio,
        target_blocks: blocks.len(),
        substitutions,
        flops_before,
        flops_after,
        reduction: ratio_drop(flops_before, flops_after),
        tail_flops_before: ir.flops_from(shared_prefix_len)?,
        tail_flops_after: result.flops_from(shared_prefix_len)?,
        result,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixSweepRow {
    pub shared_prefix_len: usize,
    pub target_blocks: usize,
    pub flops_after: u64,
    pub reduction: f64,
}

/// Plans `level` for every shared-prefix length of the model.
pub fn prefix_sweep(
    ir: &ModelIR,
    level: Level,
    widths: &WidthPolicy,
) -> Result<Vec<PrefixSweepRow>, CompressError> {
    (0..ir.len())
        .map(|p| {
            plan(ir, level, p, widths).map(|pl| PrefixSweepRow {
                shared_prefix_len: p,
                target_blocks: pl.target_blocks,
                flops_after: pl.flops_after,
                reduction: pl.reduction,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::ir::{resnet18, RESNET18_STEM_LEN as STEM};
    use super::*;

    #[test]
    fn level_names_round_trip() {
        for l in Level::LADDER {
            assert_eq!(l.to_string().parse::<Level>().unwrap(), l);
        }
        assert_eq!("l44".parse::<Level>().unwrap(), Level::L44);
        assert!("L5".parse::<Level>().is_err());
        assert_eq!(serde_json::to_string(&Level::L22).unwrap(), "\"L22\"");
    }

    #[test]
    fn l0_is_identity() {
        let net = resnet18(100);
        let p = plan(&net, Level::L0, 0, &WidthPolicy::default()).unwrap();
        assert_eq!(p.result, net);
        assert_eq!(p.reduction, 0.0);
        assert!(p.substitutions.is_empty());
    }

    #[test]
    fn ladder_on_resnet18() {
        let net = resnet18(100);
        let widths = WidthPolicy::default();
        let mut prev = u64::MAX;
        for level in Level::LADDER {
            let p = plan(&net, level, STEM, &widths).unwrap();
            assert!(p.flops_after < prev, "{level} did not shrink");
            assert_eq!(
                p.result.output_shape().unwrap(),
                net.output_shape().unwrap()
            );
            prev = p.flops_after;
        }
        let deepest = plan(&net, Level::L44, STEM, &widths).unwrap();
        assert!(deepest.reduction >= 0.6, "reduction {}", deepest.reduction);
    }

    #[test]
    fn replacing_the_stem_costs_more() {
        let net = resnet18(100);
        let widths = WidthPolicy::default();
        let l33 = plan(&net, Level::L33, 0, &widths).unwrap();
        let l4 = plan(&net, Level::L4, 0, &widths).unwrap();
        assert!(l4.flops_after > l33.flops_after);
    }

    #[test]
    fn merged_levels_pair_adjacent_blocks() {
        let net = resnet18(100);
        let p = plan(&net, Level::L44, 0, &WidthPolicy::default()).unwrap();
        let kinds: Vec<_> = p.substitutions.iter().map(|s| s.kind).collect();
        // four residual pairs, then the stem alone (a pool separates it)
        assert_eq!(
            kinds
                .iter()
                .filter(|k| **k == ReplacementKind::Compression)
                .count(),
            4
        );
        assert_eq!(kinds.last(), Some(&ReplacementKind::Bottleneck));
    }

    #[test]
    fn rejects_bad_arguments() {
        let net = resnet18(100);
        assert!(plan(&net, Level::L1, net.len(), &WidthPolicy::default()).is_err());
        assert!(plan(&net, Level::L1, 0, &WidthPolicy { ratio: 0.0 }).is_err());
        assert!(WidthPolicy::new(1.5).is_err());
    }

    #[test]
    fn sweep_covers_every_prefix() {
        let net = resnet18(100);
        let rows = prefix_sweep(&net, Level::L4, &WidthPolicy::default()).unwrap();
        assert_eq!(rows.len(), net.len());
        assert_eq!(rows[0].target_blocks, 9);
        assert_eq!(rows.last().unwrap().target_blocks, 0);
        assert_eq!(rows.last().unwrap().reduction, 0.0);
    }
}
