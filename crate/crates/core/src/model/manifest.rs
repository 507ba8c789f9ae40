use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::OpSpec;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Reserved node id that refers to the normalized input image.
pub const INPUT_NODE: &str = "input";

/// Per-channel input normalization applied before the first layer:
/// `(pixel - mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub op: OpSpec,
    pub inputs: Vec<String>,
    /// Weight blob file, relative to the container directory. Holds the
    /// weight tensor followed by the bias vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blob: Option<String>,
}

/// The self-describing part of a model container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub model_id: String,
    pub checkpoint: String,
    pub input_shape: Vec<usize>,
    pub normalization: Normalization,
    pub labels: Vec<String>,
    pub nodes: Vec<NodeSpec>,
    pub output: String,
    /// Nodes the service may capture activations from.
    #[serde(default)]
    pub capture_nodes: Vec<String>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("model manifest", e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
