//! Benchmark-only crate; see `benches/hot_paths.rs`.
//! `cargo bench -p scenescope-bench`

use std::sync::Arc;

use scenescope::{fixtures, Engine, RenderConfig, SceneState};

/// The fixture scene engine at the default resolution.
pub fn fixture_engine() -> Engine {
    Engine::new(Arc::new(fixtures::asset_library()), RenderConfig::default())
}

/// A scene with every perturbation stage active.
pub fn busy_scene() -> SceneState {
    let mut s = SceneState::default();
    s.camera.yaw = 31.0;
    s.camera.pitch = 12.0;
    s.color.hue_shift = 40.0;
    s.color.saturation = 0.6;
    s.frequency.split_sigma = 3.0;
    s.frequency.low_gain = 0.8;
    s.frequency.high_gain = 1.4;
    s.spatial.patch_k = 4;
    s
}
