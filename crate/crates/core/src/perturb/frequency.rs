//! Two-band Laplacian split with per-band gains.

use crate::blur::gaussian_blur;
use crate::error::{Error, Result};
use crate::img::Image;

/// `low` is the Gaussian-blurred image, `high = img - low` (signed).
#[derive(Clone, Debug)]
pub struct Bands {
    pub low: Image,
    pub high: Image,
}

pub fn frequency_split(img: &Image, split_sigma: f32) -> Result<Bands> {
    if !(split_sigma > 0.0) {
        return Err(Error::param("frequency.split_sigma", "must be > 0"));
    }
    let low = gaussian_blur(img, split_sigma);
    let data = img.data().iter().zip(low.data()).map(|(a, b)| a - b).collect();
    let high = Image::new(img.width(), img.height(), data)?;
    Ok(Bands { low, high })
}

/// `clamp(low_gain * low + high_gain * high, 0, 1)`.
pub fn frequency_recombine(bands: &Bands, low_gain: f32, high_gain: f32) -> Image {
    let data = bands
        .low
        .data()
        .iter()
        .zip(bands.high.data())
        .map(|(l, h)| (low_gain * l + high_gain * h).clamp(0.0, 1.0))
        .collect();
    Image::new(bands.low.width(), bands.low.height(), data).expect("bands share a size")
}
