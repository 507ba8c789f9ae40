use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lower bound on `vmax` so an all-zero map still has a defined scale.
pub const VMAX_EPSILON: f32 = 1e-12;

/// Outputs of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationStore {
    pub model_id: String,
    pub checkpoint: String,
    pub logits: Tensor,
    pub activations: BTreeMap<String, Tensor>,
}

/// A signed 2D slice of one channel, scaled symmetrically by `vmax`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationMap {
    pub model_id: String,
    pub node: String,
    pub channel: usize,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub vmax: f32,
}

impl ActivationMap {
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// RGB rendering on the blue-white-red scale.
    pub fn to_rgb(&self) -> Vec<[f32; 3]> {
        self.values.iter().map(|&v| diverging_rgb(v, self.vmax)).collect()
    }

    /// Signed 8-bit quantization relative to `vmax`.
    pub fn quantize(&self) -> Vec<i8> {
        self.values
            .iter()
            .map(|&v| (v / self.vmax * 127.0).round().clamp(-127.0, 127.0) as i8)
            .collect()
    }

    pub fn dequantize(q: &[i8], vmax: f32) -> Vec<f32> {
        q.iter().map(|&v| v as f32 / 127.0 * vmax).collect()
    }
}

/// `+vmax` maps to red, `0` to white, `-vmax` to blue.
pub fn diverging_rgb(value: f32, vmax: f32) -> [f32; 3] {
    let t = (value / vmax).clamp(-1.0, 1.0);
    if t >= 0.0 {
        [1.0, 1.0 - t, 1.0 - t]
    } else {
        [1.0 + t, 1.0 + t, 1.0]
    }
}

/// Extracts `channel` of a captured node as a map with per-map `vmax`.
pub fn activation_map(store: &ActivationStore, node: &str, channel: usize) -> Result<ActivationMap> {
    let t = store.activations.get(node).ok_or_else(|| Error::NotFound {
        kind: "captured node",
        id: node.to_string(),
    })?;
    map_from_tensor(&store.model_id, node, t, channel)
}

/// Same as [`activation_map`] for a bare node output.
pub fn map_from_tensor(model_id: &str, node: &str, t: &Tensor, channel: usize) -> Result<ActivationMap> {
    let (channels, height, width) = match *t.shape() {
        [c, h, w] => (c, h, w),
        [c] => (c, 1, 1),
        ref s => {
            return Err(Error::shape(format!(
                "node `{node}` output {s:?} cannot be shown as a map"
            )))
        }
    };
    if channel >= channels {
        return Err(Error::param(
            "channel",
            format!("channel {channel} out of range for node `{node}` with {channels} channels"),
        ));
    }
    let plane = height * width;
    let values = t.data()[channel * plane..(channel + 1) * plane].to_vec();
    let vmax = values.iter().fold(VMAX_EPSILON, |m, v| m.max(v.abs()));
    Ok(ActivationMap {
        model_id: model_id.to_string(),
        node: node.to_string(),
        channel,
        width,
        height,
        values,
        vmax,
    })
}
