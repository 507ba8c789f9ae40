//! Transport-agnostic service: model and asset catalogs plus live sessions.
//!
//! A models directory holds one container per subdirectory and optional
//! neuron-group sidecars `<model_id>.groups.json` next to them. Feature
//! visualization assets are read from a catalog directory's `index.json`.

pub mod protocol;
pub mod session;

pub use protocol::{
    AttackCommand, AttackStatus, ClientMessage, Frame, FramePacket, FramePayload, MapPacket, ModelPacket, ModelPayload,
    ServerMessage, PROTOCOL_VERSION,
};
pub use session::{render_config_for, AssetHandle, Session, Tick, MAX_MODELS, TOP_K};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fvis::{catalog::read_index, FvisAsset};
use crate::metrics::model_matches;
use crate::model::{load_model, ModelGraph, NeuronGroupCatalog, MANIFEST_FILE};
use crate::scene::assets::{MeshInfo, MeshUpload};
use crate::scene::AssetLibrary;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub checkpoint: String,
    pub input_shape: Vec<usize>,
    pub labels: Vec<String>,
    pub capture_nodes: Vec<String>,
    pub node_count: usize,
}

impl ModelInfo {
    pub fn of(m: &ModelGraph) -> Self {
        Self {
            id: m.model_id().into(),
            checkpoint: m.checkpoint().into(),
            input_shape: m.input_shape().to_vec(),
            labels: m.labels().to_vec(),
            capture_nodes: m.capture_nodes().to_vec(),
            node_count: m.node_count(),
        }
    }
}

/// Loads every container below `dir` (sorted by directory name) and the
/// neuron-group sidecars found next to them.
pub fn load_model_dir(dir: &Path) -> Result<(Vec<ModelGraph>, BTreeMap<String, NeuronGroupCatalog>)> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    paths.sort();
    let mut models = Vec::new();
    let mut groups = BTreeMap::new();
    for p in paths {
        let model = load_model(&p).map_err(|e| e.context(format!("loading {}", p.display())))?;
        let sidecar = dir.join(NeuronGroupCatalog::file_name(model.model_id()));
        if sidecar.is_file() && !groups.contains_key(model.model_id()) {
            let catalog = NeuronGroupCatalog::read(&sidecar)?;
            catalog
                .validate(&model)
                .map_err(|e| e.context(format!("validating {}", sidecar.display())))?;
            groups.insert(model.model_id().to_string(), catalog);
        }
        models.push(model);
    }
    Ok((models, groups))
}

pub struct Service {
    models: Vec<Arc<ModelGraph>>,
    groups: BTreeMap<String, NeuronGroupCatalog>,
    assets: AssetHandle,
    fvis_dir: Option<PathBuf>,
    fvis_index: BTreeMap<String, FvisAsset>,
    sessions: Mutex<BTreeMap<String, Session>>,
    next_session: AtomicU64,
}

impl Service {
    pub fn new(
        models: Vec<ModelGraph>,
        groups: BTreeMap<String, NeuronGroupCatalog>,
        assets: AssetLibrary,
        fvis_dir: Option<PathBuf>,
    ) -> Result<Self> {
        let fvis_index = match &fvis_dir {
            Some(d) => read_index(d)?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            models: models.into_iter().map(Arc::new).collect(),
            groups,
            assets: Arc::new(RwLock::new(Arc::new(assets))),
            fvis_dir,
            fvis_index,
            sessions: Mutex::new(BTreeMap::new()),
            next_session: AtomicU64::new(1),
        })
    }

    /// Loads models, sidecars, assets and (if given) the fvis catalog.
    pub fn open(models_dir: &Path, assets_dir: &Path, fvis_dir: Option<&Path>) -> Result<Self> {
        let (models, groups) = load_model_dir(models_dir)?;
        let assets = AssetLibrary::load(assets_dir)?;
        Self::new(models, groups, assets, fvis_dir.map(Path::to_path_buf))
    }

    pub fn list_models(&self) -> Vec<ModelInfo> {
        self.models.iter().map(|m| ModelInfo::of(m)).collect()
    }

    /// Resolves `id` or `id@checkpoint`. A bare id must be unambiguous.
    pub fn model(&self, reference: &str) -> Result<Arc<ModelGraph>> {
        let found: Vec<&Arc<ModelGraph>> = self.models.iter().filter(|m| model_matches(m, reference)).collect();
        match found[..] {
            [m] => Ok(m.clone()),
            [] => Err(Error::NotFound {
                kind: "model",
                id: reference.into(),
            }),
            _ => Err(Error::param(
                "models",
                format!("`{reference}` matches several checkpoints; use id@checkpoint"),
            )),
        }
    }

    pub fn list_neuron_groups(&self, model_id: &str) -> Result<&NeuronGroupCatalog> {
        let model_id = model_id.split_once('@').map_or(model_id, |(id, _)| id);
        self.groups.get(model_id).ok_or_else(|| Error::NotFound {
            kind: "neuron group catalog",
            id: model_id.into(),
        })
    }

    pub fn fvis_assets(&self) -> Vec<&FvisAsset> {
        self.fvis_index.values().collect()
    }

    /// Index entry and PNG bytes of one feature visualization.
    pub fn get_fvis_asset(&self, id: &str) -> Result<(FvisAsset, Vec<u8>)> {
        let not_found = || Error::NotFound {
            kind: "fvis asset",
            id: id.into(),
        };
        let asset = self.fvis_index.get(id).ok_or_else(not_found)?;
        let dir = self.fvis_dir.as_ref().ok_or_else(not_found)?;
        let path = dir.join(&asset.file);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok((asset.clone(), bytes))
    }

    pub fn assets(&self) -> Arc<AssetLibrary> {
        self.assets.read().expect("asset lock").clone()
    }

    pub fn list_meshes(&self) -> Vec<MeshInfo> {
        self.assets().mesh_infos()
    }

    pub fn list_backgrounds(&self) -> Vec<String> {
        self.assets().background_ids().map(str::to_string).collect()
    }

    /// Validates and registers a mesh. Ids must be new.
    pub fn upload_mesh(&self, upload: MeshUpload) -> Result<MeshInfo> {
        let id = upload.id.clone();
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::param("id", "use letters, digits, '-' and '_'"));
        }
        let mesh = upload.into_mesh()?;
        let mut guard = self.assets.write().expect("asset lock");
        if guard.mesh(&id).is_ok() {
            return Err(Error::param("id", format!("mesh `{id}` already exists")));
        }
        let mut lib = (**guard).clone();
        lib.insert_mesh(&id, mesh)?;
        *guard = Arc::new(lib);
        Ok(guard
            .mesh_infos()
            .into_iter()
            .find(|m| m.id == id)
            .expect("mesh just inserted"))
    }

    /// Opens a session on one or two comparable models.
    pub fn create_session(&self, references: &[String]) -> Result<Session> {
        let models = references.iter().map(|r| self.model(r)).collect::<Result<Vec<_>>>()?;
        let catalog = models.first().and_then(|m| self.groups.get(m.model_id()).cloned());
        let id = format!("s{}", self.next_session.fetch_add(1, Ordering::Relaxed));
        let session = Session::new(id.clone(), models, catalog, self.assets.clone())?;
        self.sessions.lock().expect("session table").insert(id, session.clone());
        Ok(session)
    }

    pub fn session(&self, id: &str) -> Result<Session> {
        self.sessions
            .lock()
            .expect("session table")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound {
                kind: "session",
                id: id.into(),
            })
    }

    pub fn close_session(&self, id: &str) -> Result<()> {
        let session = self
            .sessions
            .lock()
            .expect("session table")
            .remove(id)
            .ok_or_else(|| Error::NotFound {
                kind: "session",
                id: id.into(),
            })?;
        session.close();
        Ok(())
    }

    pub fn hello(&self, session: &Session) -> ServerMessage {
        let (state, state_version) = session.state();
        ServerMessage::Hello {
            protocol_version: PROTOCOL_VERSION,
            session_id: session.id().into(),
            state,
            state_version,
            models: session.models().iter().map(|m| ModelInfo::of(m)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn service() -> Service {
        let parts = fixtures::fixture_models();
        let groups = parts
            .iter()
            .map(|p| (p.manifest.model_id.clone(), fixtures::neuron_groups(p)))
            .collect();
        let models = parts.iter().map(|p| p.build().unwrap()).collect();
        Service::new(models, groups, fixtures::asset_library(), None).unwrap()
    }

    #[test]
    fn catalog_lists_fixture_models() {
        let s = service();
        assert!(s.list_models().len() >= 2);
        assert!(s.list_neuron_groups("tinynet-std").is_ok());
        assert!(matches!(s.get_fvis_asset("nope"), Err(Error::NotFound { .. })));
    }

    #[test]
    fn sessions_are_tracked_and_closed() {
        let s = service();
        let a = s.create_session(&["tinynet-std".into(), "tinynet-adv".into()]).unwrap();
        assert_eq!(s.session(a.id()).unwrap().models().len(), 2);
        s.close_session(a.id()).unwrap();
        assert!(a.is_closed());
        assert!(s.session(a.id()).is_err());
    }
}
