//! Contrast, hue rotation, desaturation and fade to black.

use crate::img::Image;
use crate::scene::raster::desaturate_in_place;
use crate::scene::ColorParams;

/// Applies contrast (about 0.5), HSV hue rotation, desaturation toward
/// luma and fade to black, in that order. Neutral parameters return the
/// input unchanged.
pub fn apply_color(img: &Image, p: &ColorParams) -> Image {
    let mut out = img.clone();
    let mut touched = false;
    if p.contrast != 1.0 {
        for v in out.data_mut() {
            *v = (*v - 0.5) * p.contrast + 0.5;
        }
        touched = true;
    }
    if p.hue_shift != 0.0 {
        rotate_hue(&mut out, p.hue_shift);
        touched = true;
    }
    if p.saturation != 1.0 {
        desaturate_in_place(&mut out, p.saturation);
        touched = true;
    }
    if p.fade_to_black != 0.0 {
        let keep = 1.0 - p.fade_to_black;
        for v in out.data_mut() {
            *v *= keep;
        }
        touched = true;
    }
    if touched {
        out.clamp01()
    } else {
        out
    }
}

fn rotate_hue(img: &mut Image, degrees: f32) {
    let n = img.width() * img.height();
    let shift = degrees as f64 / 60.0;
    let data = img.data_mut();
    for i in 0..n {
        let rgb = [data[i], data[n + i], data[2 * n + i]].map(|v| v.clamp(0.0, 1.0) as f64);
        let (h, s, v) = rgb_to_hsv(rgb);
        let out = hsv_to_rgb((h + shift).rem_euclid(6.0), s, v);
        for k in 0..3 {
            data[k * n + i] = out[k] as f32;
        }
    }
}

/// Hue in sextants `[0, 6)`, saturation and value in `[0, 1]`.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    if d == 0.0 {
        return (0.0, 0.0, max);
    }
    let h = if max == r {
        ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        (b - r) / d + 2.0
    } else {
        (r - g) / d + 4.0
    };
    (h, d / max, max)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}
