//! Feature visualization by gradient ascent on the mean activation of one
//! channel, with transformation robustness.
//!
//! Each step samples one random affine warp, backpropagates through the
//! model, the warp and the sigmoid into the parameters, and moves them by
//! `step_size` along the gradient divided by its root-mean-square.

pub mod catalog;
pub mod param;
pub mod transform;

pub use catalog::{generate_catalog, CatalogReport, FvisAsset, INDEX_FILE};
pub use param::{ImageParam, Parametrization};
pub use transform::{Affine, TransformConfig, Warp};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::img::Image;
use crate::model::{ModelGraph, Objective};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FvisConfig {
    pub parametrization: Parametrization,
    pub steps: usize,
    pub step_size: f32,
    pub transform: TransformConfig,
    /// Side of the square output image; the model input size when absent.
    pub size: Option<usize>,
    pub seed: u64,
    /// Standard deviation of the initial parameters.
    pub init_std: f32,
    /// A channel whose gradient stays zero for this many steps is dead.
    pub warmup: usize,
}

impl Default for FvisConfig {
    fn default() -> Self {
        Self {
            parametrization: Parametrization::FourierBasis,
            steps: 512,
            step_size: 0.05,
            transform: TransformConfig::default(),
            size: None,
            seed: 0,
            init_std: 0.01,
            warmup: 16,
        }
    }
}

impl FvisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::param("steps", "must be at least 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::param("step_size", "must be positive"));
        }
        if self.size == Some(0) {
            return Err(Error::param("size", "must be positive"));
        }
        if !(self.init_std >= 0.0) {
            return Err(Error::param("init_std", "must be non-negative"));
        }
        self.transform.validate()
    }
}

#[derive(Clone, Debug)]
pub struct FvisResult {
    pub image: Image,
    /// Objective at the initial parameters, without any transformation.
    pub initial_objective: f64,
    /// Objective at the result, without any transformation.
    pub final_objective: f64,
    /// The gradient was zero throughout warmup; `image` is uniform gray.
    pub dead: bool,
}

/// Content-addressed id of one asset: the first 16 hex digits of the SHA-256
/// of `model_id / checkpoint / node / channel / parametrization`.
pub fn asset_id(model_id: &str, checkpoint: &str, node: &str, channel: usize, p: Parametrization) -> String {
    let key = format!("{model_id}\u{0}{checkpoint}\u{0}{node}\u{0}{channel}\u{0}{}", p.as_str());
    let digest = Sha256::digest(key.as_bytes());
    hex::encode(&digest[..8])
}

fn check_target(model: &ModelGraph, node: &str, channel: usize) -> Result<()> {
    if !model.capture_nodes().iter().any(|n| n == node) {
        return Err(Error::param("node", format!("`{node}` is not capture-eligible")));
    }
    let channels = model.channels(node).unwrap_or(0);
    if channel >= channels {
        return Err(Error::param(
            "channel",
            format!("channel {channel} out of range for node `{node}` with {channels} channels"),
        ));
    }
    Ok(())
}

pub fn feature_vis(model: &ModelGraph, node: &str, channel: usize, config: &FvisConfig) -> Result<FvisResult> {
    config.validate()?;
    check_target(model, node, channel)?;
    let shape = model.input_shape();
    let (in_h, in_w) = (shape[1], shape[2]);
    let side = config.size.unwrap_or(in_h.max(in_w));
    let objective = Objective::MeanActivation {
        node: node.to_string(),
        channel,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut param = {
        let mut noise = || StandardNormal.sample(&mut rng);
        ImageParam::new(config.parametrization, side, side, config.init_std, &mut noise)
    };
    let plain = Warp::new(&Affine::identity(), (side, side), (in_w, in_h));
    let to_input = |warp: &Warp, img: &[f32]| Tensor::new(vec![3, in_h, in_w], warp.apply(img, 3));

    let initial_objective = model.objective_value(&to_input(&plain, &param.image())?, &objective)?;
    let mut alive = false;
    for step in 0..config.steps {
        if !alive && step == config.warmup {
            break;
        }
        let warp = Warp::new(&config.transform.sample(&mut rng), (side, side), (in_w, in_h));
        let logits = param.logits();
        let img: Vec<f32> = logits.iter().map(|&x| param::sigmoid(x)).collect();
        let grad_input = model.input_gradient(&to_input(&warp, &img)?, &objective)?;
        let grad_img = warp.adjoint(grad_input.data(), 3);
        let grad_logits: Vec<f32> = grad_img.iter().zip(&img).map(|(g, s)| g * s * (1.0 - s)).collect();
        let grad = param.backward(&grad_logits);
        let rms = (grad.iter().map(|g| g * g).sum::<f64>() / grad.len() as f64).sqrt();
        if rms == 0.0 || !rms.is_finite() {
            continue;
        }
        alive = true;
        param.update(&grad, config.step_size as f64 / rms);
    }

    if !alive {
        log::warn!("{} {node}:{channel} is dead: zero gradient during warmup", model.model_id());
        return Ok(FvisResult {
            image: Image::filled(side, side, [0.5; 3]),
            initial_objective,
            final_objective: initial_objective,
            dead: true,
        });
    }
    let image = Image::new(side, side, param.image())?;
    let final_objective = model.objective_value(&to_input(&plain, image.data())?, &objective)?;
    Ok(FvisResult {
        image,
        initial_objective,
        final_objective,
        dead: false,
    })
}
