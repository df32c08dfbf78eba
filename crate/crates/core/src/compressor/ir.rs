use serde::{Deserialize, Serialize};

use super::CompressError;

/// Activation tensor shape, serialized as `[c, h, w]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn numel(&self) -> usize {
        self.c * self.h * self.w
    }
}

impl From<[usize; 3]> for Shape {
    fn from([c, h, w]: [usize; 3]) -> Self {
        Self { c, h, w }
    }
}

impl From<Shape> for [usize; 3] {
    fn from(s: Shape) -> Self {
        [s.c, s.h, s.w]
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.c, self.h, self.w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv {
    /// `[kh, kw]`.
    pub k: [usize; 2],
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    pub fn new(kernel: usize, c_in: usize, c_out: usize, stride: usize, pad: usize) -> Self {
        Self {
            k: [kernel, kernel],
            c_in,
            c_out,
            stride,
            pad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Avg,
}

/// Strided 1×1 convolution on a shortcut path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Projection {
    pub c_out: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv(Conv),
    Fc {
        d_in: usize,
        d_out: usize,
    },
    Pool {
        kind: PoolKind,
        k: usize,
        stride: usize,
        #[serde(default)]
        pad: usize,
    },
    /// Adds the input of layer `from` (the network input when `from` is 0)
    /// to the running tensor.
    SkipAdd {
        from: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        proj: Option<Projection>,
    },
    Flatten,
}

impl Layer {
    pub fn conv(kernel: usize, c_in: usize, c_out: usize, stride: usize, pad: usize) -> Self {
        Layer::Conv(Conv::new(kernel, c_in, c_out, stride, pad))
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, Layer::Conv(_))
    }

    pub fn name(&self) -> String {
        match self {
            Layer::Conv(c) => format!(
                "conv{}x{}({}->{}, s{}, p{})",
                c.k[0], c.k[1], c.c_in, c.c_out, c.stride, c.pad
            ),
            Layer::Fc { d_in, d_out } => format!("fc({d_in}->{d_out})"),
            Layer::Pool {
                kind, k, stride, ..
            } => format!("{kind:?}pool{k}(s{stride})").to_lowercase(),
            Layer::SkipAdd { from, proj: None } => format!("add(from {from})"),
            Layer::SkipAdd {
                from,
                proj: Some(p),
            } => format!("add(from {from}, proj {} s{})", p.c_out, p.stride),
            Layer::Flatten => "flatten".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelIR {
    pub input_shape: Shape,
    pub layers: Vec<Layer>,
}

fn window_out(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if stride == 0 || k == 0 || padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

impl ModelIR {
    pub fn new(input_shape: Shape, layers: Vec<Layer>) -> Self {
        Self {
            input_shape,
            layers,
        }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Output shape of every layer.
    ///
    /// Window arithmetic floors `(n + 2p - k) / s + 1`, as in common deep-learning
    /// frameworks.
    pub fn infer_shapes(&self) -> Result<Vec<Shape>, CompressError> {
        let mut tensors = Vec::with_capacity(self.layers.len() + 1);
        tensors.push(self.input_shape);
        for (i, layer) in self.layers.iter().enumerate() {
            let x = tensors[i];
            let bad = |reason: String| CompressError::ShapeMismatch { layer: i, reason };
            let y = match *layer {
                Layer::Conv(c) => {
                    if c.c_in != x.c {
                        return Err(bad(format!(
                            "conv expects {} channels, input is {x}",
                            c.c_in
                        )));
                    }
                    if c.c_out == 0 {
                        return Err(bad("conv has no output channels".into()));
                    }
                    let h = window_out(x.h, c.k[0], c.stride, c.pad);
                    let w = window_out(x.w, c.k[1], c.stride, c.pad);
                    match (h, w) {
                        (Some(h), Some(w)) => Shape::new(c.c_out, h, w),
                        _ => return Err(bad(format!("conv window does not fit input {x}"))),
                    }
                }
                Layer::Pool { k, stride, pad, .. } => {
                    match (
                        window_out(x.h, k, stride, pad),
                        window_out(x.w, k, stride, pad),
                    ) {
                        (Some(h), Some(w)) => Shape::new(x.c, h, w),
                        _ => return Err(bad(format!("pool window does not fit input {x}"))),
                    }
                }
                Layer::Fc { d_in, d_out } => {
                    if x.h != 1 || x.w != 1 || x.c != d_in {
                        return Err(bad(format!("fc expects ({d_in}, 1, 1), input is {x}")));
                    }
                    if d_out == 0 {
                        return Err(bad("fc has no outputs".into()));
                    }
                    Shape::new(d_out, 1, 1)
                }
                Layer::Flatten => Shape::new(x.numel(), 1, 1),
                Layer::SkipAdd { from, proj } => {
                    if from > i {
                        return Err(bad(format!("skip source {from} lies after the add")));
                    }
                    let src = tensors[from];
                    let src = match proj {
                        None => src,
                        Some(p) => match (
                            window_out(src.h, 1, p.stride, 0),
                            window_out(src.w, 1, p.stride, 0),
                        ) {
                            (Some(h), Some(w)) if p.c_out > 0 => Shape::new(p.c_out, h, w),
                            _ => return Err(bad("invalid shortcut projection".into())),
                        },
                    };
                    if src != x {
                        return Err(bad(format!(
                            "skip from {from} has shape {src}, main path {x}"
                        )));
                    }
                    x
                }
            };
            tensors.push(y);
        }
        tensors.remove(0);
        Ok(tensors)
    }

    pub fn output_shape(&self) -> Result<Shape, CompressError> {
        Ok(self
            .infer_shapes()?
            .last()
            .copied()
            .unwrap_or(self.input_shape))
    }

    /// Input shape of every layer followed by the final output shape
    /// (`len() + 1` entries).
    pub fn tensor_shapes(&self) -> Result<Vec<Shape>, CompressError> {
        let mut t = vec![self.input_shape];
        t.extend(self.infer_shapes()?);
        Ok(t)
    }

    /// Multiply-accumulates per layer.
    pub fn layer_flops(&self) -> Result<Vec<u64>, CompressError> {
        let t = self.tensor_shapes()?;
        Ok(self
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| layer_cost(layer, &t, i))
            .collect())
    }

    pub fn flops(&self) -> Result<u64, CompressError> {
        Ok(self.layer_flops()?.iter().sum())
    }

    /// Multiply-accumulates of layers `start..`.
    pub fn flops_from(&self, start: usize) -> Result<u64, CompressError> {
        Ok(self.layer_flops()?.iter().skip(start).sum())
    }
}

fn layer_cost(layer: &Layer, t: &[Shape], i: usize) -> u64 {
    let out = t[i + 1];
    let hw = (out.h * out.w) as u64;
    match *layer {
        Layer::Conv(c) => (c.k[0] * c.k[1] * c.c_in * c.c_out) as u64 * hw,
        Layer::Fc { d_in, d_out } => (d_in * d_out) as u64,
        Layer::SkipAdd {
            from,
            proj: Some(p),
        } => (t[from].c * p.c_out) as u64 * hw,
        Layer::SkipAdd { proj: None, .. } | Layer::Pool { .. } | Layer::Flatten => 0,
    }
}

/// Layers of the ResNet18 stem (7×7 convolution and max-pool), the natural
/// shared prefix of [`resnet18`].
pub const RESNET18_STEM_LEN: usize = 2;

/// ResNet18 for 3×224×224 inputs: convolutions, pools, shortcut additions
/// (1×1 projections where the shape changes) and the classifier.
pub fn resnet18(num_classes: usize) -> ModelIR {
    let mut layers = vec![
        Layer::conv(7, 3, 64, 2, 3),
        Layer::Pool {
            kind: PoolKind::Max,
            k: 3,
            stride: 2,
            pad: 1,
        },
    ];
    let mut c = 64;
    for (stage, width) in [64, 128, 256, 512].into_iter().enumerate() {
        for block in 0..2 {
            let stride = if stage > 0 && block == 0 { 2 } else { 1 };
            let from = layers.len();
            layers.push(Layer::conv(3, c, width, stride, 1));
            layers.push(Layer::conv(3, width, width, 1, 1));
            let proj = (stride != 1 || c != width).then_some(Projection {
                c_out: width,
                stride,
            });
            layers.push(Layer::SkipAdd { from, proj });
            c = width;
        }
    }
    layers.push(Layer::Pool {
        kind: PoolKind::Avg,
        k: 7,
        stride: 1,
        pad: 0,
    });
    layers.push(Layer::Flatten);
    layers.push(Layer::Fc {
        d_in: 512,
        d_out: num_classes,
    });
    ModelIR::new(Shape::new(3, 224, 224), layers)
}
