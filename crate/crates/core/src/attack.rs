//! Projected gradient descent on the current frame, one step per call.
//!
//! Each step moves `delta` by `epsilon / 8` along `sign(g)` (L-inf) or
//! `g / |g|_2` (L2), projects back into the epsilon ball and then clips so
//! that `base + delta` stays in `[0, 1]`. There is no random start.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::img::Image;
use crate::model::{ModelGraph, Objective};

/// Below this gradient L2 norm a step is reported as stalled.
pub const STALL_NORM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L2,
    Linf,
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Norm::L2),
            "linf" | "l-inf" | "inf" => Ok(Norm::Linf),
            other => Err(Error::param("norm", format!("expected l2 or linf, got `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackMode {
    /// Increase the logit of `class`.
    Targeted { class: usize },
    /// Decrease the logit of the base image's top-1 class.
    Suppress,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Id of the model the gradient is taken from.
    pub model: String,
    pub mode: AttackMode,
    pub epsilon: f32,
    pub norm: Norm,
}

impl AttackConfig {
    pub fn step_length(&self) -> f32 {
        self.epsilon / 8.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon <= 1.0) {
            return Err(Error::param("epsilon", format!("{} is outside [0, 1]", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    Stepped,
    /// Gradient norm below [`STALL_NORM`]; the state was left unchanged.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct AttackState {
    config: AttackConfig,
    objective: Objective,
    base: Image,
    delta: Image,
    steps: usize,
}

/// Snapshots `image` and fixes the objective. In suppress mode the class is
/// the top-1 prediction on `image`.
pub fn attack_init(model: &ModelGraph, image: &Image, config: AttackConfig) -> Result<AttackState> {
    config.validate()?;
    if config.model != model.model_id() {
        return Err(Error::NotFound {
            kind: "model",
            id: config.model.clone(),
        });
    }
    let objective = match config.mode {
        AttackMode::Targeted { class } => {
            if class >= model.labels().len() {
                return Err(Error::NotFound {
                    kind: "class",
                    id: class.to_string(),
                });
            }
            Objective::Logit { class }
        }
        AttackMode::Suppress => {
            let logits = model.logits(&image.to_tensor())?;
            Objective::NegLogit {
                class: argmax(logits.data()),
            }
        }
    };
    Ok(AttackState {
        config,
        objective,
        base: image.clone(),
        delta: Image::filled(image.width(), image.height(), [0.0; 3]),
        steps: 0,
    })
}

/// First index of the maximum.
fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl AttackState {
    pub fn config(&self) -> &AttackConfig {
        &self.config
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn base(&self) -> &Image {
        &self.base
    }

    pub fn delta(&self) -> &Image {
        &self.delta
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `clamp(base + delta, 0, 1)`.
    pub fn adversarial_image(&self) -> Image {
        let data = self
            .base
            .data()
            .iter()
            .zip(self.delta.data())
            .map(|(b, d)| (b + d).clamp(0.0, 1.0))
            .collect();
        Image::new(self.base.width(), self.base.height(), data).expect("same size as base")
    }

    pub fn delta_norm(&self, norm: Norm) -> f64 {
        norm_of(self.delta.data(), norm)
    }

    /// One PGD step with the gradient evaluated at `base + delta`.
    pub fn step(&mut self, model: &ModelGraph) -> Result<StepOutcome> {
        if model.model_id() != self.config.model {
            return Err(Error::NotFound {
                kind: "model",
                id: self.config.model.clone(),
            });
        }
        let grad = model.input_gradient(&self.adversarial_image().to_tensor(), &self.objective)?;
        let g = grad.data();
        let g_norm = norm_of(g, Norm::L2);
        if g_norm < STALL_NORM {
            return Ok(StepOutcome::Stalled);
        }
        let alpha = self.config.step_length();
        let eps = self.config.epsilon;
        let delta = self.delta.data_mut();
        match self.config.norm {
            Norm::Linf => {
                for (d, &gi) in delta.iter_mut().zip(g) {
                    *d += alpha * sign(gi);
                }
            }
            Norm::L2 => {
                let scale = alpha as f64 / g_norm;
                for (d, &gi) in delta.iter_mut().zip(g) {
                    *d += (gi as f64 * scale) as f32;
                }
            }
        }
        project_norm(delta, eps, self.config.norm);
        for (d, &b) in delta.iter_mut().zip(self.base.data()) {
            *d = (b + *d).clamp(0.0, 1.0) - b;
        }
        self.steps += 1;
        Ok(StepOutcome::Stepped)
    }
}

/// Convenience wrapper over [`AttackState::step`].
pub fn pgd_step(model: &ModelGraph, state: &mut AttackState) -> Result<StepOutcome> {
    state.step(model)
}

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn norm_of(values: &[f32], norm: Norm) -> f64 {
    match norm {
        Norm::Linf => values.iter().fold(0.0f64, |m, &v| m.max((v as f64).abs())),
        Norm::L2 => values.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt(),
    }
}

/// L-inf: elementwise clamp to `[-eps, eps]`. L2: rescale onto the sphere of
/// radius `eps` when outside it.
pub fn project_norm(delta: &mut [f32], eps: f32, norm: Norm) {
    match norm {
        Norm::Linf => {
            for d in delta.iter_mut() {
                *d = d.clamp(-eps, eps);
            }
        }
        Norm::L2 => {
            let n = norm_of(delta, Norm::L2);
            if n > eps as f64 {
                let scale = eps as f64 / n;
                for d in delta.iter_mut() {
                    *d = (*d as f64 * scale) as f32;
                }
            }
        }
    }
}
