//! Render plus post-processing for one frame.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::img::Image;
use crate::perturb::apply_pipeline;
use crate::scene::{render_frame, AssetLibrary, RenderConfig, SceneState};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub render_ms: f64,
    pub pipeline_ms: f64,
    pub inference_ms: f64,
}

pub(crate) fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

#[derive(Clone, Debug)]
pub struct Engine {
    assets: Arc<AssetLibrary>,
    render: RenderConfig,
}

impl Engine {
    pub fn new(assets: Arc<AssetLibrary>, render: RenderConfig) -> Self {
        Self { assets, render }
    }

    pub fn assets(&self) -> &AssetLibrary {
        &self.assets
    }

    pub fn render_config(&self) -> &RenderConfig {
        &self.render
    }

    /// The rendered scene before any post-processing.
    pub fn render(&self, state: &SceneState) -> Result<Image> {
        let mesh = self.assets.mesh(&state.mesh)?;
        render_frame(state, &mesh, &self.assets, &self.render)
    }

    /// Render and the full pipeline, including the attack overlay if given.
    pub fn frame(&self, state: &SceneState, delta: Option<&Image>) -> Result<Image> {
        Ok(self.frame_timed(state, delta)?.0)
    }

    pub fn frame_timed(&self, state: &SceneState, delta: Option<&Image>) -> Result<(Image, Timings)> {
        let t0 = Instant::now();
        let rendered = self.render(state)?;
        let render_ms = ms_since(t0);
        let t1 = Instant::now();
        let out = apply_pipeline(&rendered, state, delta)?;
        Ok((
            out,
            Timings {
                render_ms,
                pipeline_ms: ms_since(t1),
                inference_ms: 0.0,
            },
        ))
    }
}
