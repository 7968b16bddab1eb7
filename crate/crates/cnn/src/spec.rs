use serde::{Deserialize, Serialize};

use crate::{Activation, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv {
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
    },
    /// 2×2 window, stride 2.
    MaxPool,
    FullyConnected {
        units: usize,
    },
    /// Linear regression head; its activation field is ignored.
    Output {
        units: usize,
    },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::MaxPool => "maxpool",
            LayerKind::FullyConnected { .. } => "fc",
            LayerKind::Output { .. } => "output",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn conv(out_channels: usize, k: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Conv {
                out_channels,
                kernel_h: k,
                kernel_w: k,
            },
            activation,
        }
    }

    pub fn pool() -> Self {
        LayerSpec {
            kind: LayerKind::MaxPool,
            activation: Activation::ReLU,
        }
    }

    pub fn fc(units: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::FullyConnected { units },
            activation,
        }
    }

    pub fn output(units: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Output { units },
            activation: Activation::ReLU,
        }
    }

    /// Whether the activation is applied after this layer.
    pub(crate) fn activated(&self) -> bool {
        matches!(self.kind, LayerKind::Conv { .. } | LayerKind::FullyConnected { .. })
    }
}

/// Per-sample activation shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Spatial { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// (channels, height, width)
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec::standard(64, 2, Activation::ReLU)
    }
}

impl NetworkSpec {
    /// Three conv+pool stages (32@5×5, 32@3×3, 24@3×3), a 512-unit FC layer
    /// and a linear output of width `d2`, on single-channel `size × size` input.
    pub fn standard(size: usize, d2: usize, activation: Activation) -> Self {
        NetworkSpec::with_widths((1, size, size), [32, 32, 24], 512, d2, activation)
    }

    /// Same topology as [`NetworkSpec::standard`] with custom widths.
    pub fn with_widths(
        input: (usize, usize, usize),
        conv: [usize; 3],
        fc: usize,
        d2: usize,
        activation: Activation,
    ) -> Self {
        let layers = vec![
            LayerSpec::conv(conv[0], 5, activation),
            LayerSpec::pool(),
            LayerSpec::conv(conv[1], 3, activation),
            LayerSpec::pool(),
            LayerSpec::conv(conv[2], 3, activation),
            LayerSpec::pool(),
            LayerSpec::fc(fc, activation),
            LayerSpec::output(d2),
        ];
        NetworkSpec { input, layers }
    }

    pub fn input_shape(&self) -> Shape {
        let (c, h, w) = self.input;
        Shape::Spatial { c, h, w }
    }

    /// Input shape followed by the output shape of every layer.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let (c, h, w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidParameter {
                name: "input",
                reason: format!("dimensions must be positive, got {:?}", self.input),
            });
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidParameter {
                name: "layers",
                reason: "network has no layers".into(),
            });
        }
        let mut shapes = vec![self.input_shape()];
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |reason: String| Error::Layer {
                layer: i,
                kind: layer.kind.name(),
                reason,
            };
            let prev = *shapes.last().unwrap();
            let next = match (layer.kind, prev) {
                (LayerKind::Output { .. }, _) if i + 1 != self.layers.len() => {
                    return Err(bad("output layer must be last".into()));
                }
                (
                    LayerKind::Conv {
                        out_channels,
                        kernel_h,
                        kernel_w,
                    },
                    Shape::Spatial { h, w, .. },
                ) => {
                    if out_channels == 0 || kernel_h == 0 || kernel_w == 0 {
                        return Err(bad("channels and kernel dims must be ≥ 1".into()));
                    }
                    if kernel_h > h || kernel_w > w {
                        return Err(bad(format!("kernel {kernel_h}x{kernel_w} larger than input {h}x{w}")));
                    }
                    Shape::Spatial {
                        c: out_channels,
                        h: h - kernel_h + 1,
                        w: w - kernel_w + 1,
                    }
                }
                (LayerKind::MaxPool, Shape::Spatial { c, h, w }) => {
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(bad(format!("odd input {h}x{w}")));
                    }
                    Shape::Spatial { c, h: h / 2, w: w / 2 }
                }
                (LayerKind::Conv { .. } | LayerKind::MaxPool, Shape::Flat(_)) => {
                    return Err(bad("needs spatial input but previous layer is flat".into()));
                }
                (LayerKind::FullyConnected { units } | LayerKind::Output { units }, _) => {
                    if units == 0 {
                        return Err(bad("units must be ≥ 1".into()));
                    }
                    Shape::Flat(units)
                }
            };
            shapes.push(next);
        }
        if !matches!(self.layers.last().unwrap().kind, LayerKind::Output { .. }) {
            return Err(Error::InvalidParameter {
                name: "layers",
                reason: "last layer must be an output layer".into(),
            });
        }
        Ok(shapes)
    }

    pub fn output_dim(&self) -> usize {
        match self.layers.last().map(|l| l.kind) {
            Some(LayerKind::Output { units }) => units,
            _ => 0,
        }
    }

    /// Index of the last fully connected layer, whose output is the learned feature.
    pub fn feature_layer(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|l| matches!(l.kind, LayerKind::FullyConnected { .. }))
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        for l in &mut self.layers {
            if l.activated() {
                l.activation = activation;
            }
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes() {
        let shapes = NetworkSpec::default().shapes().unwrap();
        let lens: Vec<usize> = shapes.iter().map(Shape::len).collect();
        assert_eq!(
            lens,
            vec![4096, 32 * 3600, 32 * 900, 32 * 784, 32 * 196, 24 * 144, 24 * 36, 512, 2]
        );
    }

    #[test]
    fn odd_pool_and_big_kernel_are_rejected() {
        let spec = NetworkSpec::standard(30, 2, Activation::ReLU);
        // 30 → 26 → 13: second pool is odd
        let err = spec.shapes().unwrap_err();
        assert!(matches!(err, Error::Layer { layer: 3, kind: "maxpool", .. }), "{err}");

        let spec = NetworkSpec {
            input: (1, 3, 3),
            layers: vec![LayerSpec::conv(1, 5, Activation::ReLU), LayerSpec::output(1)],
        };
        assert!(matches!(spec.shapes().unwrap_err(), Error::Layer { layer: 0, .. }));
    }

    #[test]
    fn output_must_be_last() {
        let spec = NetworkSpec {
            input: (1, 2, 2),
            layers: vec![LayerSpec::output(1), LayerSpec::fc(3, Activation::Tanh)],
        };
        assert!(spec.shapes().is_err());
    }
}
