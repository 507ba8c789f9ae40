use crate::error::{Error, Result};
use crate::img::Image;

/// `clamp(img * (1 - image_fade) + 0.5 * image_fade + alpha * delta, 0, 1)`.
pub fn attack_overlay(img: &Image, delta: &Image, alpha: f32, image_fade: f32) -> Result<Image> {
    if !img.same_size(delta) {
        return Err(Error::shape(format!(
            "attack delta is {}x{}, frame is {}x{}",
            delta.width(),
            delta.height(),
            img.width(),
            img.height()
        )));
    }
    if alpha == 0.0 && image_fade == 0.0 {
        return Ok(img.clone());
    }
    let data = img
        .data()
        .iter()
        .zip(delta.data())
        .map(|(&v, &d)| (v * (1.0 - image_fade) + 0.5 * image_fade + alpha * d).clamp(0.0, 1.0))
        .collect();
    Image::new(img.width(), img.height(), data)
}
