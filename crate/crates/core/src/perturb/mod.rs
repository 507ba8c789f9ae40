//! Post-render perturbations, applied to the composited frame in a fixed
//! order: color, frequency, spatial, attack overlay. Each stage returns its
//! input unchanged at neutral parameters.

pub mod color;
pub mod frequency;
pub mod overlay;
pub mod spatial;

pub use color::apply_color;
pub use frequency::{frequency_recombine, frequency_split, Bands};
pub use overlay::attack_overlay;
pub use spatial::{patch_shuffle, shuffle_permutation};

use crate::error::Result;
use crate::img::Image;
use crate::scene::SceneState;

/// Color, frequency and spatial stages. This is the image an attack sees.
pub fn apply_pre_attack(img: &Image, state: &SceneState) -> Result<Image> {
    let mut out = apply_color(img, &state.color);
    let f = &state.frequency;
    if f.low_gain != 1.0 || f.high_gain != 1.0 {
        out = frequency_recombine(&frequency_split(&out, f.split_sigma)?, f.low_gain, f.high_gain);
    }
    if state.spatial.patch_k != 1 {
        out = patch_shuffle(&out, state.spatial.patch_k, state.spatial.shuffle_seed)?;
    }
    Ok(out)
}

/// The full chain. Without a delta the overlay stage still applies image fade.
pub fn apply_pipeline(img: &Image, state: &SceneState, delta: Option<&Image>) -> Result<Image> {
    let pre = apply_pre_attack(img, state)?;
    let a = &state.attack;
    match delta {
        Some(d) => attack_overlay(&pre, d, a.alpha, a.image_fade),
        None if a.image_fade != 0.0 => {
            let zero = Image::filled(pre.width(), pre.height(), [0.0; 3]);
            attack_overlay(&pre, &zero, 0.0, a.image_fade)
        }
        None => Ok(pre),
    }
}
