use serde::{Deserialize, Serialize};

use super::ops;
use crate::error::{Error, Result};

/// A typed layer operation with its attributes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OpSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    #[serde(rename = "maxpool2d")]
    MaxPool2d {
        kernel: usize,
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    #[serde(rename = "avgpool2d")]
    AvgPool2d {
        kernel: usize,
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Concat {
        #[serde(default)]
        axis: usize,
    },
    Softmax,
    Add,
    #[serde(rename = "globalavgpool")]
    GlobalAvgPool,
}

impl OpSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            OpSpec::Conv2d { .. } => "conv2d",
            OpSpec::Relu => "relu",
            OpSpec::MaxPool2d { .. } => "maxpool2d",
            OpSpec::AvgPool2d { .. } => "avgpool2d",
            OpSpec::Dense { .. } => "dense",
            OpSpec::Concat { .. } => "concat",
            OpSpec::Softmax => "softmax",
            OpSpec::Add => "add",
            OpSpec::GlobalAvgPool => "globalavgpool",
        }
    }

    /// Checks attribute ranges.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::shape(format!("{}: {m}", self.kind())));
        match *self {
            OpSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if in_channels == 0 || out_channels == 0 {
                    return fail("channel counts must be positive");
                }
                if kernel == 0 || stride == 0 {
                    return fail("kernel and stride must be at least 1");
                }
            }
            OpSpec::MaxPool2d { kernel, stride, padding } | OpSpec::AvgPool2d { kernel, stride, padding } => {
                if kernel == 0 || stride == 0 {
                    return fail("kernel and stride must be at least 1");
                }
                if padding >= kernel {
                    return fail("padding must be smaller than kernel");
                }
            }
            OpSpec::Dense {
                in_features,
                out_features,
            } => {
                if in_features == 0 || out_features == 0 {
                    return fail("feature counts must be positive");
                }
            }
            OpSpec::Relu | OpSpec::Concat { .. } | OpSpec::Softmax | OpSpec::Add | OpSpec::GlobalAvgPool => {}
        }
        Ok(())
    }

    /// Number of graph inputs the op consumes; `None` means one or more.
    pub fn arity(&self) -> Option<usize> {
        match self {
            OpSpec::Concat { .. } => None,
            OpSpec::Add => Some(2),
            _ => Some(1),
        }
    }

    /// Weight and bias shapes for ops that carry parameters.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            OpSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((vec![out_channels, in_channels, kernel, kernel], vec![out_channels])),
            OpSpec::Dense {
                in_features,
                out_features,
            } => Some((vec![out_features, in_features], vec![out_features])),
            _ => None,
        }
    }

    /// Infers the output shape from the input shapes.
    pub fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        if let Some(n) = self.arity() {
            if inputs.len() != n {
                return Err(Error::shape(format!(
                    "{} takes {n} input(s), got {}",
                    self.kind(),
                    inputs.len()
                )));
            }
        } else if inputs.is_empty() {
            return Err(Error::shape(format!("{} needs at least one input", self.kind())));
        }
        let first = inputs[0];
        let chw = || -> Result<(usize, usize, usize)> {
            match *first {
                [c, h, w] => Ok((c, h, w)),
                _ => Err(Error::shape(format!(
                    "{} expects a [C, H, W] input, got {first:?}",
                    self.kind()
                ))),
            }
        };
        match *self {
            OpSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let (c, h, w) = chw()?;
                if c != in_channels {
                    return Err(Error::shape(format!(
                        "conv2d declares {in_channels} input channels, input has {c}"
                    )));
                }
                Ok(vec![
                    out_channels,
                    ops::window_output_dim(h, kernel, stride, padding)?,
                    ops::window_output_dim(w, kernel, stride, padding)?,
                ])
            }
            OpSpec::MaxPool2d { kernel, stride, padding } | OpSpec::AvgPool2d { kernel, stride, padding } => {
                let (c, h, w) = chw()?;
                Ok(vec![
                    c,
                    ops::window_output_dim(h, kernel, stride, padding)?,
                    ops::window_output_dim(w, kernel, stride, padding)?,
                ])
            }
            OpSpec::Dense {
                in_features,
                out_features,
            } => {
                let n: usize = first.iter().product();
                if n != in_features {
                    return Err(Error::shape(format!(
                        "dense declares {in_features} input features, input has {n}"
                    )));
                }
                Ok(vec![out_features])
            }
            OpSpec::Concat { axis } => ops::concat_output_shape(inputs, axis),
            OpSpec::Add => {
                if inputs[0] != inputs[1] {
                    return Err(Error::shape(format!(
                        "add: shapes {:?} and {:?} differ",
                        inputs[0], inputs[1]
                    )));
                }
                Ok(first.to_vec())
            }
            OpSpec::Relu | OpSpec::Softmax => Ok(first.to_vec()),
            OpSpec::GlobalAvgPool => {
                let (c, _, _) = chw()?;
                Ok(vec![c])
            }
        }
    }
}
