//! Mesh and background asset directory.
//!
//! An asset directory holds `assets.json` plus the files it references:
//!
//! ```json
//! {
//!   "meshes": [{ "id": "orb", "obj": "orb.obj", "target_obj": "orb_target.obj",
//!                "texture": "orb.png", "target_texture": "orb_target.png",
//!                "base_color": [0.6, 0.5, 0.4] }],
//!   "backgrounds": [{ "id": "meadow", "file": "meadow.png" }]
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::mesh::{parse_obj, Mesh};
use crate::error::{Error, Result};
use crate::img::Image;

pub const ASSET_MANIFEST: &str = "assets.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshEntry {
    pub id: String,
    pub obj: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_obj: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_texture: Option<String>,
    #[serde(default = "default_base_color")]
    pub base_color: [f32; 3],
}

fn default_base_color() -> [f32; 3] {
    [0.5, 0.5, 0.5]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundEntry {
    pub id: String,
    pub file: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetManifest {
    #[serde(default)]
    pub meshes: Vec<MeshEntry>,
    #[serde(default)]
    pub backgrounds: Vec<BackgroundEntry>,
}

/// A user-supplied mesh (or morph pair) with inline file contents.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshUpload {
    pub id: String,
    pub obj: String,
    #[serde(default)]
    pub target_obj: Option<String>,
    /// Encoded image bytes (PNG).
    #[serde(default, with = "opt_base64")]
    pub texture: Option<Vec<u8>>,
    #[serde(default, with = "opt_base64")]
    pub target_texture: Option<Vec<u8>>,
    #[serde(default = "default_base_color")]
    pub base_color: [f32; 3],
}

mod opt_base64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(bytes) => s.serialize_some(&STANDARD.encode(bytes)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| STANDARD.decode(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

impl MeshUpload {
    pub fn into_mesh(self) -> Result<Mesh> {
        let mut mesh = parse_obj(&self.obj)?;
        if let Some(target) = &self.target_obj {
            mesh = mesh.with_morph_target(&parse_obj(target)?)?;
        }
        mesh.base_color = self.base_color;
        mesh.texture = self.texture.as_deref().map(Image::decode).transpose()?;
        mesh.target_texture = self.target_texture.as_deref().map(Image::decode).transpose()?;
        mesh.validate()?;
        Ok(mesh)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshInfo {
    pub id: String,
    pub vertices: usize,
    pub triangles: usize,
    pub morphable: bool,
    pub textured: bool,
}

/// In-memory meshes and backgrounds keyed by id.
#[derive(Clone, Debug, Default)]
pub struct AssetLibrary {
    meshes: BTreeMap<String, Arc<Mesh>>,
    backgrounds: BTreeMap<String, Arc<Image>>,
}

impl AssetLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(ASSET_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: AssetManifest =
            serde_json::from_str(&text).map_err(|e| Error::parse("asset manifest", e))?;
        let mut lib = Self::new();
        let read_text = |file: &str| {
            let p = dir.join(file);
            std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        };
        for entry in manifest.meshes {
            let mut mesh = parse_obj(&read_text(&entry.obj)?)?;
            if let Some(target) = &entry.target_obj {
                mesh = mesh
                    .with_morph_target(&parse_obj(&read_text(target)?)?)
                    .map_err(|e| Error::Mesh(format!("{}: {e}", entry.id)))?;
            }
            mesh.base_color = entry.base_color;
            mesh.texture = entry.texture.as_ref().map(|f| Image::load(&dir.join(f))).transpose()?;
            mesh.target_texture = entry
                .target_texture
                .as_ref()
                .map(|f| Image::load(&dir.join(f)))
                .transpose()?;
            lib.insert_mesh(&entry.id, mesh)?;
        }
        for entry in manifest.backgrounds {
            lib.insert_background(&entry.id, Image::load(&dir.join(&entry.file))?);
        }
        Ok(lib)
    }

    pub fn insert_mesh(&mut self, id: &str, mesh: Mesh) -> Result<()> {
        mesh.validate().map_err(|e| Error::Mesh(format!("{id}: {e}")))?;
        self.meshes.insert(id.to_string(), Arc::new(mesh));
        Ok(())
    }

    pub fn insert_background(&mut self, id: &str, image: Image) {
        self.backgrounds.insert(id.to_string(), Arc::new(image));
    }

    pub fn mesh(&self, id: &str) -> Result<Arc<Mesh>> {
        self.meshes.get(id).cloned().ok_or_else(|| Error::NotFound {
            kind: "mesh",
            id: id.to_string(),
        })
    }

    pub fn background(&self, id: &str) -> Result<Arc<Image>> {
        self.backgrounds.get(id).cloned().ok_or_else(|| Error::NotFound {
            kind: "background",
            id: id.to_string(),
        })
    }

    pub fn mesh_ids(&self) -> impl Iterator<Item = &str> {
        self.meshes.keys().map(String::as_str)
    }

    pub fn background_ids(&self) -> impl Iterator<Item = &str> {
        self.backgrounds.keys().map(String::as_str)
    }

    pub fn mesh_infos(&self) -> Vec<MeshInfo> {
        self.meshes
            .iter()
            .map(|(id, m)| MeshInfo {
                id: id.clone(),
                vertices: m.positions.len(),
                triangles: m.indices.len(),
                morphable: m.target_positions.is_some(),
                textured: m.texture.is_some(),
            })
            .collect()
    }
}
