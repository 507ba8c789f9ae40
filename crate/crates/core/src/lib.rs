//! Real-time CNN robustness exploration: a software-rendered 3D scene,
//! composable input perturbations, live inference with activation capture,
//! adversarial attacks, feature visualization and fluctuation metrics.

pub mod attack;
pub mod blur;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod fvis;
pub mod img;
pub mod metrics;
pub mod model;
pub mod perturb;
pub mod scene;
pub mod service;
pub mod tensor;

pub use attack::{AttackConfig, AttackMode, AttackState, Norm};
pub use engine::{Engine, Timings};
pub use error::{Error, Result};
pub use img::Image;
pub use model::{load_model, ActivationMap, ActivationStore, ModelGraph, Objective};
pub use scene::{AssetLibrary, Mesh, RenderConfig, SceneState};
pub use service::{FramePacket, FramePayload, Service, Session};
pub use tensor::{OpSpec, Tensor};
