use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelGraph;
use crate::error::{Error, Result};

/// A curated set of channels within one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronGroup {
    pub name: String,
    pub node: String,
    pub channels: Vec<usize>,
    /// Feature-visualization asset ids, parallel to `channels` when present.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fvis_assets: Vec<String>,
}

/// Sidecar catalog shared by all checkpoints of one model family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronGroupCatalog {
    pub model_id: String,
    pub groups: Vec<NeuronGroup>,
}

impl NeuronGroupCatalog {
    pub fn file_name(model_id: &str) -> String {
        format!("{model_id}.groups.json")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse("neuron group catalog", e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("catalog serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn group(&self, name: &str) -> Option<&NeuronGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Checks every group against the model's capture nodes and channel counts.
    pub fn validate(&self, model: &ModelGraph) -> Result<()> {
        for g in &self.groups {
            let field = format!("groups.{}", g.name);
            if g.channels.is_empty() {
                return Err(Error::param(field, "group must contain at least one channel"));
            }
            if !model.capture_nodes().iter().any(|n| n == &g.node) {
                return Err(Error::param(field, format!("node `{}` is not capture-eligible", g.node)));
            }
            let channels = model.channels(&g.node).unwrap_or(0);
            if let Some(bad) = g.channels.iter().find(|&&c| c >= channels) {
                return Err(Error::param(
                    field,
                    format!("channel {bad} out of range ({channels} channels)"),
                ));
            }
            if !g.fvis_assets.is_empty() && g.fvis_assets.len() != g.channels.len() {
                return Err(Error::param(field, "fvis asset list must match the channel list"));
            }
        }
        Ok(())
    }
}
