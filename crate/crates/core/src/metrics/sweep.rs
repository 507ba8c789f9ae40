//! Yaw sweep: render every (mesh, pitch, distance, yaw) view, run each model,
//! and score every (mesh, pitch, distance) prototype.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::fluctuation::{fluctuation_score, population_std, top_classes};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::scene::SceneState;

pub const PROTOTYPE_YAW: f32 = -23.3;

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn uniform(lo: f32, hi: f32, count: usize) -> Vec<f32> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|i| (lo as f64 + (hi as f64 - lo as f64) * i as f64 / (count - 1) as f64) as f32)
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Model references, `id` or `id@checkpoint`. Empty selects every model
    /// handed to the sweep.
    pub models: Vec<String>,
    pub meshes: Vec<String>,
    pub yaws: Vec<f32>,
    pub pitches: Vec<f32>,
    pub distances: Vec<f32>,
    /// Rendered in addition to `yaws` unless it is one of them.
    pub prototype_yaw: f32,
    pub base_state: SceneState,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            models: vec![],
            meshes: vec!["orb".into(), "pod".into()],
            yaws: uniform(-70.0, 70.0, 7),
            pitches: vec![10.0, 30.0],
            distances: vec![3.2, 4.4],
            prototype_yaw: PROTOTYPE_YAW,
            base_state: SceneState::default(),
        }
    }
}

impl SweepConfig {
    pub fn views_per_mesh(&self) -> usize {
        self.yaws.len() * self.pitches.len() * self.distances.len()
    }

    pub fn prototypes_per_mesh(&self) -> usize {
        self.pitches.len() * self.distances.len()
    }
}

/// Does `reference` (`id` or `id@checkpoint`) name this model?
pub fn model_matches(model: &ModelGraph, reference: &str) -> bool {
    match reference.split_once('@') {
        Some((id, ckpt)) => model.model_id() == id && model.checkpoint() == ckpt,
        None => model.model_id() == reference,
    }
}

/// Resolves references in order; each must match at least one model.
pub fn select_models<'a>(models: &[&'a ModelGraph], references: &[String]) -> Result<Vec<&'a ModelGraph>> {
    if references.is_empty() {
        return Ok(models.to_vec());
    }
    let mut out = Vec::new();
    for r in references {
        let found: Vec<_> = models.iter().filter(|m| model_matches(m, r)).collect();
        if found.is_empty() {
            return Err(Error::NotFound {
                kind: "model",
                id: r.clone(),
            });
        }
        out.extend(found.into_iter().copied());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub mesh: String,
    pub pitch: f32,
    pub distance: f32,
    pub yaw: f32,
}

impl std::fmt::Display for ViewSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "view mesh={} pitch={} distance={} yaw={}",
            self.mesh, self.pitch, self.distance, self.yaw
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewLogits {
    pub model_id: String,
    pub checkpoint: String,
    pub view: ViewSpec,
    pub logits: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeScore {
    pub model_id: String,
    pub checkpoint: String,
    pub prototype: ViewSpec,
    pub prototype_logits: Vec<f32>,
    pub top_classes: Vec<usize>,
    pub logit_std: f64,
    /// Prototype-class logits per yaw view, in yaw order.
    pub yaw_top_logits: Vec<Vec<f32>>,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub model_id: String,
    pub checkpoint: String,
    /// `None` for the aggregate over all meshes.
    pub mesh: Option<String>,
    pub prototypes: usize,
    pub mean: f64,
    /// Population standard deviation across prototypes.
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationReport {
    pub config: SweepConfig,
    pub views: Vec<ViewLogits>,
    pub prototypes: Vec<PrototypeScore>,
    pub summaries: Vec<ScoreSummary>,
}

impl FluctuationReport {
    /// One tab-separated row per (model, mesh, prototype).
    pub fn to_table(&self) -> String {
        let mut out = String::from("model\tcheckpoint\tmesh\tpitch\tdistance\tprototype_yaw\tlogit_std\tscore\n");
        for p in &self.prototypes {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
                p.model_id,
                p.checkpoint,
                p.prototype.mesh,
                p.prototype.pitch,
                p.prototype.distance,
                p.prototype.yaw,
                p.logit_std,
                p.score
            );
        }
        out
    }
}

fn summarize(scores: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn yaw_sweep(config: &SweepConfig, engine: &Engine, models: &[&ModelGraph]) -> Result<FluctuationReport> {
    let models = select_models(models, &config.models)?;
    if models.is_empty() {
        return Err(Error::param("models", "sweep needs at least one model"));
    }
    if config.yaws.is_empty() || config.pitches.is_empty() || config.distances.is_empty() || config.meshes.is_empty() {
        return Err(Error::param("sweep", "meshes, yaws, pitches and distances must be non-empty"));
    }
    let prototype_in_set = config.yaws.contains(&config.prototype_yaw);

    let run_view = |view: &ViewSpec| -> Result<Vec<Vec<f32>>> {
        let mut state = config.base_state.clone();
        state.mesh = view.mesh.clone();
        state.camera.pitch = view.pitch;
        state.camera.distance = view.distance;
        state.camera.yaw = view.yaw;
        state.validate().map_err(|e| e.context(view.to_string()))?;
        let frame = engine.frame(&state, None).map_err(|e| e.context(view.to_string()))?;
        let input = frame.to_tensor();
        models
            .iter()
            .map(|m| {
                m.logits(&input)
                    .map(|t| t.into_data())
                    .map_err(|e| e.context(format!("{view}, model {}", m.model_id())))
            })
            .collect()
    };

    let mut views = Vec::new();
    let mut prototypes = Vec::new();
    for mesh in &config.meshes {
        for &pitch in &config.pitches {
            for &distance in &config.distances {
                let spec = |yaw| ViewSpec {
                    mesh: mesh.clone(),
                    pitch,
                    distance,
                    yaw,
                };
                // per yaw, per model
                let per_yaw: Vec<Vec<Vec<f32>>> =
                    config.yaws.iter().map(|&y| run_view(&spec(y))).collect::<Result<_>>()?;
                let proto_view = spec(config.prototype_yaw);
                let proto_logits = if prototype_in_set {
                    let i = config.yaws.iter().position(|&y| y == config.prototype_yaw).expect("in set");
                    per_yaw[i].clone()
                } else {
                    run_view(&proto_view)?
                };
                for (mi, m) in models.iter().enumerate() {
                    for (yi, &yaw) in config.yaws.iter().enumerate() {
                        views.push(ViewLogits {
                            model_id: m.model_id().into(),
                            checkpoint: m.checkpoint().into(),
                            view: spec(yaw),
                            logits: per_yaw[yi][mi].clone(),
                        });
                    }
                    let proto = &proto_logits[mi];
                    let yaw_logits: Vec<Vec<f32>> = per_yaw.iter().map(|v| v[mi].clone()).collect();
                    let score = fluctuation_score(proto, &yaw_logits)
                        .map_err(|e| e.context(format!("prototype {proto_view}, model {}", m.model_id())))?;
                    let top = top_classes(proto);
                    prototypes.push(PrototypeScore {
                        model_id: m.model_id().into(),
                        checkpoint: m.checkpoint().into(),
                        prototype: proto_view.clone(),
                        prototype_logits: proto.clone(),
                        logit_std: population_std(proto),
                        yaw_top_logits: yaw_logits.iter().map(|l| top.iter().map(|&c| l[c]).collect()).collect(),
                        top_classes: top,
                        score,
                    });
                }
            }
        }
    }

    let mut summaries = Vec::new();
    for m in &models {
        let mine = |p: &&PrototypeScore| p.model_id == m.model_id() && p.checkpoint == m.checkpoint();
        let mut groups: Vec<Option<&String>> = config.meshes.iter().map(Some).collect();
        groups.push(None);
        for mesh in groups {
            let scores: Vec<f64> = prototypes
                .iter()
                .filter(mine)
                .filter(|p| mesh.is_none_or(|name| &p.prototype.mesh == name))
                .map(|p| p.score)
                .collect();
            let (mean, std) = summarize(&scores);
            summaries.push(ScoreSummary {
                model_id: m.model_id().into(),
                checkpoint: m.checkpoint().into(),
                mesh: mesh.cloned(),
                prototypes: scores.len(),
                mean,
                std,
            });
        }
    }

    Ok(FluctuationReport {
        config: config.clone(),
        views,
        prototypes,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_yaws_are_uniform() {
        let y = uniform(-70.0, 70.0, 7);
        assert_eq!(y.len(), 7);
        assert_eq!((y[0], y[6], y[3]), (-70.0, 70.0, 0.0));
        for w in y.windows(2) {
            assert!((w[1] - w[0] - 140.0 / 6.0).abs() < 1e-5);
        }
    }

    #[test]
    fn default_config_counts() {
        let c = SweepConfig::default();
        assert_eq!(c.views_per_mesh(), 28);
        assert_eq!(c.prototypes_per_mesh(), 4);
        assert!(!c.yaws.contains(&c.prototype_yaw));
    }
}
