//! Frame-rate measurement while orbiting the camera.
//!
//! `nav` renders, post-processes and computes the activation maps of each
//! model (only the layers the maps need). `nav_pv` additionally runs the full
//! forward pass and builds the top-5 prediction list.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::prediction::topk;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::model::{activation_map, map_from_tensor, ModelGraph};
use crate::scene::SceneState;

pub const MIN_BENCH_FRAMES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Nav,
    NavPv,
}

impl BenchMode {
    pub fn label(self) -> &'static str {
        match self {
            BenchMode::Nav => "NAV",
            BenchMode::NavPv => "NAV+PV",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRun {
    pub mode: BenchMode,
    /// Model references (`id` or `id@checkpoint`).
    pub models: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub frames: usize,
    /// Yaw increment per frame, degrees.
    pub yaw_step: f32,
    /// Activation maps computed per model per frame.
    pub activation_maps: usize,
    pub base_state: SceneState,
    pub runs: Vec<BenchRun>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            frames: 300,
            yaw_step: 1.2,
            activation_maps: 4,
            base_state: SceneState::default(),
            runs: vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub min_ms: f64,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl FrameStats {
    pub fn from_samples(ms: &[f64]) -> Self {
        let mut s = ms.to_vec();
        s.sort_by(f64::total_cmp);
        let at = |q: f64| s[((s.len() - 1) as f64 * q).round() as usize];
        Self {
            min_ms: s[0],
            mean_ms: s.iter().sum::<f64>() / s.len() as f64,
            median_ms: at(0.5),
            p95_ms: at(0.95),
            max_ms: s[s.len() - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub label: String,
    pub mode: BenchMode,
    pub model_count: usize,
    pub frames: usize,
    pub seconds: f64,
    pub fps: f64,
    pub frame_time: FrameStats,
}

/// The first `count` (node, channel) pairs in capture-node order, like a
/// neuron group taken from the earliest eligible layer.
pub fn default_capture(model: &ModelGraph, count: usize) -> Vec<(String, usize)> {
    model
        .capture_nodes()
        .iter()
        .flat_map(|n| (0..model.channels(n).unwrap_or(0)).map(move |c| (n.clone(), c)))
        .take(count)
        .collect()
}

pub fn bench(
    engine: &Engine,
    models: &[&ModelGraph],
    mode: BenchMode,
    frames: usize,
    yaw_step: f32,
    activation_maps: usize,
    base_state: &SceneState,
) -> Result<BenchReport> {
    if frames < MIN_BENCH_FRAMES {
        return Err(Error::param("frames", format!("at least {MIN_BENCH_FRAMES} frames required")));
    }
    let captures: Vec<Vec<(String, usize)>> = models.iter().map(|m| default_capture(m, activation_maps)).collect();
    let nodes: Vec<Vec<String>> = captures
        .iter()
        .map(|c| {
            let mut n: Vec<String> = Vec::new();
            for (node, _) in c {
                if !n.contains(node) {
                    n.push(node.clone());
                }
            }
            n
        })
        .collect();
    let mut state = base_state.clone();
    let mut samples = Vec::with_capacity(frames);
    let start = Instant::now();
    for i in 0..frames {
        let t = Instant::now();
        state.camera.yaw = (base_state.camera.yaw + i as f32 * yaw_step).rem_euclid(360.0);
        let frame = engine.frame(&state, None)?;
        let input = frame.to_tensor();
        for (mi, m) in models.iter().enumerate() {
            match mode {
                BenchMode::Nav => {
                    let acts = m.capture_only(&input, &nodes[mi])?;
                    for (node, ch) in &captures[mi] {
                        std::hint::black_box(map_from_tensor(m.model_id(), node, &acts[node], *ch)?.quantize());
                    }
                }
                BenchMode::NavPv => {
                    let store = m.forward(&input, &nodes[mi])?;
                    for (node, ch) in &captures[mi] {
                        std::hint::black_box(activation_map(&store, node, *ch)?.quantize());
                    }
                    std::hint::black_box(topk(m.model_id(), m.labels(), store.logits.data(), 5, false)?);
                }
            }
        }
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let seconds = start.elapsed().as_secs_f64();
    Ok(BenchReport {
        label: format!("{} x{}", mode.label(), models.len()),
        mode,
        model_count: models.len(),
        frames,
        seconds,
        fps: frames as f64 / seconds,
        frame_time: FrameStats::from_samples(&samples),
    })
}
